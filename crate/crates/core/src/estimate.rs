//! Posterior summaries: the MAP number of clusters, a label-switching-free
//! point estimate of B, a refit conditional on it, convergence and
//! predictive diagnostics, and recovery scores against a known truth.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::assignment;
use crate::error::{MmfError, Result};
use crate::mcmc::{chain_rng, run_chain_from, SamplerConfig, Trace};
use crate::model::{CountMatrix, Hyperparameters, ModelState};
use crate::tree::RankTree;

/// Most frequent K over the retained snapshots of all chains; ties go to
/// the smaller K.
pub fn map_k(traces: &[Trace]) -> Result<usize> {
    map_k_values(traces.iter().flat_map(|t| t.snapshot_ks()))
}

pub fn map_k_values<I: IntoIterator<Item = usize>>(ks: I) -> Result<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for k in ks {
        *counts.entry(k).or_default() += 1;
    }
    // increasing K; a later K needs a strictly larger count
    counts
        .iter()
        .fold(None, |best: Option<(usize, usize)>, (&k, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((k, c)),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| MmfError::Empty("no retained samples".into()))
}

fn column_hamming(b1: &Array2<u8>, b2: &Array2<u8>, k: usize, l: usize) -> i64 {
    b1.column(k).iter().zip(b2.column(l).iter()).filter(|(x, y)| x != y).count() as i64
}

/// min over column permutations π of the Hamming distance between `b1`
/// and `b2` with columns permuted by π. `perm[k]` is the column of `b2`
/// matched to column `k` of `b1`.
pub fn min_perm_hamming(b1: &Array2<u8>, b2: &Array2<u8>) -> Result<(usize, Vec<usize>)> {
    if b1.dim() != b2.dim() {
        return Err(MmfError::ShapeMismatch(format!("{:?} vs {:?}", b1.dim(), b2.dim())));
    }
    let k = b1.ncols();
    let cost: Vec<Vec<i64>> = (0..k).map(|a| (0..k).map(|b| column_hamming(b1, b2, a, b)).collect()).collect();
    let (total, perm) = assignment::solve(&cost);
    Ok((total as usize, perm))
}

/// Index of the sample minimising the summed permutation-minimised Hamming
/// distance to all samples; ties go to the first occurrence.
pub fn posterior_mode_b(samples: &[Array2<u8>]) -> Result<usize> {
    if samples.is_empty() {
        return Err(MmfError::Empty("no B samples".into()));
    }
    // identical samples share one row of the distance table
    let mut uniq: Vec<(usize, usize)> = Vec::new(); // (first index, multiplicity)
    for (s, b) in samples.iter().enumerate() {
        match uniq.iter_mut().find(|(f, _)| &samples[*f] == b) {
            Some(entry) => entry.1 += 1,
            None => uniq.push((s, 1)),
        }
    }
    let mut best: Option<(u64, usize)> = None;
    for &(u, _) in &uniq {
        let mut total = 0u64;
        for &(v, mult) in &uniq {
            if u != v {
                total += min_perm_hamming(&samples[u], &samples[v])?.0 as u64 * mult as u64;
            }
        }
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, u));
        }
    }
    Ok(best.expect("non-empty").1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates {
    pub k_hat: usize,
    pub b_hat: Array2<u8>,
    pub a_hat: Array2<u8>,
    /// Posterior mean of a_ik.
    pub a_mean: Array2<f64>,
    pub w_hat: Array2<f64>,
    pub c_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub z_hat: Array2<f64>,
    pub m_hat: f64,
    pub rho_hat: f64,
}

/// Continues the chain from `start` with B held fixed and returns posterior
/// means of everything else. The RNG stream is `stream` off `config.seed`.
pub fn conditional_refit(
    data: &CountMatrix,
    tree: &RankTree,
    hp: &Hyperparameters,
    config: &SamplerConfig,
    start: ModelState,
    stream: u32,
) -> Result<PointEstimates> {
    if config.refit_iterations <= config.refit_burn_in {
        return Err(MmfError::InvalidInput(format!(
            "refit needs iterations ({}) above burn-in ({})",
            config.refit_iterations, config.refit_burn_in
        )));
    }
    let refit = SamplerConfig {
        iterations: config.refit_iterations,
        burn_in: config.refit_burn_in,
        thin: 1,
        freeze_b: true,
        ..config.clone()
    };
    let b_hat = start.b_matrix();
    let trace = run_chain_from(data, tree, hp, &refit, stream, start, chain_rng(config.seed, stream))?;
    let (n, p, k) = (data.n_hosts(), data.n_taxa(), b_hat.ncols());
    let mut a_mean = Array2::<f64>::zeros((n, k));
    let mut w_hat = Array2::<f64>::zeros((p, k));
    let mut z_hat = Array2::<f64>::zeros((n, p));
    let (mut c_hat, mut s_hat, mut t_hat) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let (mut m_hat, mut rho_hat) = (0.0, 0.0);
    let count = trace.snapshots.len() as f64;
    for snap in &trace.snapshots {
        let st = &snap.state;
        debug_assert_eq!(st.b_matrix(), b_hat);
        a_mean += &st.a_matrix().mapv(f64::from);
        w_hat += &st.w_matrix();
        z_hat += &st.z.mapv(f64::from);
        for j in 0..p {
            c_hat[j] += st.c[j];
            s_hat[j] += st.s[j];
            t_hat[j] += st.t[j];
        }
        m_hat += st.m;
        rho_hat += st.rho;
    }
    a_mean /= count;
    w_hat /= count;
    z_hat /= count;
    for v in c_hat.iter_mut().chain(s_hat.iter_mut()).chain(t_hat.iter_mut()) {
        *v /= count;
    }
    Ok(PointEstimates {
        k_hat: k,
        a_hat: a_mean.mapv(|v| (v > 0.5) as u8),
        a_mean,
        b_hat,
        w_hat,
        c_hat,
        s_hat,
        t_hat,
        z_hat,
        m_hat: m_hat / count,
        rho_hat: rho_hat / count,
    })
}

/// K̂, then B̂ among the snapshots with K̂ columns, then the refit.
pub fn summarize(data: &CountMatrix, tree: &RankTree, hp: &Hyperparameters, config: &SamplerConfig, traces: &[Trace]) -> Result<PointEstimates> {
    let k_hat = map_k(traces)?;
    let states: Vec<&ModelState> = traces
        .iter()
        .flat_map(|t| t.snapshots.iter().map(|s| &s.state))
        .filter(|s| s.k() == k_hat)
        .collect();
    if states.is_empty() {
        return Err(MmfError::Empty(format!("no snapshot with K = {k_hat}")));
    }
    let bs: Vec<Array2<u8>> = states.iter().map(|s| s.b_matrix()).collect();
    let best = posterior_mode_b(&bs)?;
    conditional_refit(data, tree, hp, config, states[best].clone(), traces.len() as u32)
}

/// Classical two-or-more-chain potential scale reduction factor
/// `sqrt(((n-1)/n W + B/n) / W)`.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(MmfError::InvalidInput("PSRF needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(MmfError::InvalidInput("PSRF needs equal chain lengths of at least 10".into()));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if within == 0.0 {
        return Ok(if between == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v = (nf - 1.0) / nf * within + between / nf;
    Ok((v / within).sqrt())
}

/// PSRF of K from the retained snapshots.
pub fn psrf_k(traces: &[Trace]) -> Result<f64> {
    let chains: Vec<Vec<f64>> = traces.iter().map(|t| t.snapshot_ks().into_iter().map(|k| k as f64).collect()).collect();
    psrf(&chains)
}

/// Median and standard deviation over (i, j) of the PSRF of
/// q_ij = c_j + Σ_k a_ik w_jk b_jk.
pub fn psrf_q(traces: &[Trace]) -> Result<(f64, f64)> {
    let first = traces.first().and_then(|t| t.snapshots.first()).ok_or_else(|| MmfError::Empty("no snapshots".into()))?;
    let (n, p) = first.state.z.dim();
    let logits: Vec<Vec<Array2<f64>>> = traces.iter().map(|t| t.snapshots.iter().map(|s| s.state.logits()).collect()).collect();
    let mut values = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            let chains: Vec<Vec<f64>> = logits.iter().map(|c| c.iter().map(|q| q[[i, j]]).collect()).collect();
            values.push(psrf(&chains)?);
        }
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    values.sort_by(f64::total_cmp);
    let median = median_sorted(&values);
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    let sd = if finite.len() > 1 {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((median, sd))
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Posterior predictive mean composition, averaged over `states`, and its
/// Pearson correlation with the observed composition x_i / N_i.
pub fn posterior_predictive<'a, I>(data: &CountMatrix, states: I) -> Result<(Array2<f64>, f64)>
where
    I: IntoIterator<Item = &'a ModelState>,
{
    let (n, p) = (data.n_hosts(), data.n_taxa());
    let mut pred = Array2::<f64>::zeros((n, p));
    let mut count = 0usize;
    for st in states {
        if st.z.dim() != (n, p) {
            return Err(MmfError::ShapeMismatch("snapshot and data disagree".into()));
        }
        for i in 0..n {
            let total: f64 = (0..p).map(|j| st.eta(i, j)).sum();
            for j in 0..p {
                pred[[i, j]] += st.eta(i, j) / total;
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(MmfError::Empty("no snapshots for the predictive check".into()));
    }
    pred /= count as f64;
    let observed = Array2::from_shape_fn((n, p), |(i, j)| data.get(i, j) as f64 / data.total(i) as f64);
    let r = pearson(pred.as_slice().expect("standard layout"), observed.as_slice().expect("standard layout"));
    Ok((pred, r))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn pad(m: &Array2<u8>, width: usize) -> Array2<u8> {
    let mut out = Array2::zeros((m.nrows(), width));
    out.slice_mut(ndarray::s![.., ..m.ncols()]).assign(m);
    out
}

/// Permutation-minimised Hamming distance after zero-padding both matrices
/// to a common width, over the number of elements.
pub fn recovery_error(est: &Array2<u8>, truth: &Array2<u8>) -> Result<f64> {
    if est.nrows() != truth.nrows() {
        return Err(MmfError::ShapeMismatch(format!("{} vs {} rows", est.nrows(), truth.nrows())));
    }
    let width = est.ncols().max(truth.ncols());
    if width == 0 || est.nrows() == 0 {
        return Ok(0.0);
    }
    let (d, _) = min_perm_hamming(&pad(est, width), &pad(truth, width))?;
    Ok(d as f64 / (est.nrows() * width) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub error_a: f64,
    pub error_b: f64,
    pub k_true: usize,
    pub k_hat: usize,
    /// `permutation[k]` is the true column matched to estimated column `k`
    /// (indices beyond the true K are padding).
    pub permutation: Vec<usize>,
}

/// Scores (Â, B̂) against the truth with the permutation that is optimal
/// for B applied to A as well.
pub fn recovery_report(a_hat: &Array2<u8>, b_hat: &Array2<u8>, a_true: &Array2<u8>, b_true: &Array2<u8>) -> Result<RecoveryReport> {
    if a_hat.nrows() != a_true.nrows() || b_hat.nrows() != b_true.nrows() || a_hat.ncols() != b_hat.ncols() || a_true.ncols() != b_true.ncols() {
        return Err(MmfError::ShapeMismatch("estimated and true factor shapes disagree".into()));
    }
    let width = b_hat.ncols().max(b_true.ncols()).max(1);
    let (bh, bt) = (pad(b_hat, width), pad(b_true, width));
    let (ah, at) = (pad(a_hat, width), pad(a_true, width));
    let (db, perm) = min_perm_hamming(&bh, &bt)?;
    let mut da = 0usize;
    for (k, &l) in perm.iter().enumerate() {
        da += ah.column(k).iter().zip(at.column(l).iter()).filter(|(x, y)| x != y).count();
    }
    Ok(RecoveryReport {
        error_a: da as f64 / (ah.nrows() * width) as f64,
        error_b: db as f64 / (bh.nrows() * width) as f64,
        k_true: b_true.ncols(),
        k_hat: b_hat.ncols(),
        permutation: perm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identifiability {
    /// Every cluster has a member that belongs to no other cluster.
    Sufficient,
    /// That condition fails; identifiability is not decided.
    Unknown,
}

pub fn check_identifiability(a: &Array2<u8>) -> Identifiability {
    let k = a.ncols();
    if k == 0 {
        return Identifiability::Unknown;
    }
    let mut has_unit = vec![false; k];
    for row in a.rows() {
        let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(c, _)| c).collect();
        if let [only] = ones[..] {
            has_unit[only] = true;
        }
    }
    if has_unit.iter().all(|&h| h) {
        Identifiability::Sufficient
    } else {
        Identifiability::Unknown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn map_k_mode_and_ties() {
        assert_eq!(map_k_values([3, 3, 4]).unwrap(), 3);
        assert_eq!(map_k_values([3, 4, 3, 4]).unwrap(), 3);
        assert_eq!(map_k_values([5, 4, 5]).unwrap(), 5);
        assert!(map_k_values([]).is_err());
    }

    #[test]
    fn swapped_columns_have_distance_zero() {
        let b = array![[1u8, 0, 1], [0, 1, 1], [1, 1, 0]];
        let (d, perm) = min_perm_hamming(&b, &b).unwrap();
        assert_eq!((d, perm), (0, vec![0, 1, 2]));
        let swapped = array![[0u8, 1, 1], [1, 0, 1], [1, 1, 0]];
        let (d, perm) = min_perm_hamming(&b, &swapped).unwrap();
        assert_eq!((d, perm), (0, vec![1, 0, 2]));
        assert!(min_perm_hamming(&b, &array![[1u8]]).is_err());
    }

    #[test]
    fn majority_wins() {
        let common = array![[1u8, 0], [0, 1], [1, 1]];
        let odd = array![[0u8, 0], [1, 1], [1, 0]];
        let samples = vec![odd.clone(), common.clone(), common.clone(), common.clone()];
        assert_eq!(posterior_mode_b(&samples).unwrap(), 1);
        assert_eq!(posterior_mode_b(&[odd.clone()]).unwrap(), 0);
        assert!(posterior_mode_b(&[]).is_err());
    }

    #[test]
    fn psrf_edge_cases() {
        let c: Vec<f64> = (0..20).map(|x| (x as f64).sin()).collect();
        let r = psrf(&[c.clone(), c.clone()]).unwrap();
        assert!((r - (19.0f64 / 20.0).sqrt()).abs() < 1e-12);
        assert_eq!(psrf(&[vec![1.0; 10], vec![2.0; 10]]).unwrap(), f64::INFINITY);
        assert_eq!(psrf(&[vec![1.0; 10], vec![1.0; 10]]).unwrap(), 1.0);
        assert!(psrf(&[c.clone()]).is_err());
        assert!(psrf(&[vec![1.0; 5], vec![1.0; 5]]).is_err());
    }

    #[test]
    fn predictive_is_dirichlet_mean() {
        let data = CountMatrix::from_counts(array![[2u32, 1]]).unwrap();
        let state = ModelState { z: array![[1u8, 0]], clusters: vec![], c: vec![0.0; 2], s: vec![2.0, 2.0], t: vec![1.0, 1.0], m: 1.0, rho: 0.5 };
        let (pred, r) = posterior_predictive(&data, [&state]).unwrap();
        assert!((pred[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((pred[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_errors() {
        let t = array![[1u8, 0], [0, 1], [1, 1], [0, 0]];
        assert_eq!(recovery_error(&t, &t).unwrap(), 0.0);
        let col = array![[1u8], [0], [1], [0]];
        assert_eq!(recovery_error(&col.mapv(|v| 1 - v), &col).unwrap(), 1.0);
        // 4x2 vs 4x3 with an extra zero column: 0 mismatches over 12 cells
        let extra = array![[1u8, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 0]];
        assert_eq!(recovery_error(&extra, &t).unwrap(), 0.0);
        // one flipped bit: 1/8 unpadded, 1/12 padded
        let mut one = extra.clone();
        one[[3, 0]] = 1;
        assert!((recovery_error(&one, &t).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!(recovery_error(&t, &array![[1u8]]).is_err());
    }

    #[test]
    fn joint_report_reuses_b_permutation() {
        let b_true = array![[1u8, 0], [1, 0], [0, 1]];
        let a_true = array![[1u8, 0], [0, 1]];
        let b_hat = array![[0u8, 1], [0, 1], [1, 0]];
        let a_hat = array![[0u8, 1], [1, 0]];
        let r = recovery_report(&a_hat, &b_hat, &a_true, &b_true).unwrap();
        assert_eq!(r.error_b, 0.0);
        assert_eq!(r.error_a, 0.0);
        assert_eq!(r.permutation, vec![1, 0]);
    }

    #[test]
    fn identifiability() {
        let example = array![[0u8, 0, 1, 1], [1, 1, 0, 0], [0, 1, 0, 1], [1, 0, 0, 1]];
        assert_eq!(check_identifiability(&example), Identifiability::Unknown);
        let mut with_units = Array2::<u8>::eye(3);
        with_units.push_row(ndarray::aview1(&[1, 1, 1])).unwrap();
        assert_eq!(check_identifiability(&with_units), Identifiability::Sufficient);
        assert_eq!(check_identifiability(&Array2::zeros((4, 3))), Identifiability::Unknown);
    }
}
