//! Synthetic data: block-structured host clusters, tree-structured taxon
//! clusters, counts from the Dirichlet-multinomial model or from a
//! negative-binomial model, and the hard-threshold dichotomizer baseline.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::error::{MmfError, Result};
use crate::model::{CountMatrix, ModelState};
use crate::pibp::sample_column;
use crate::special::sigmoid;
use crate::tree::RankTree;

const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    WellSpecified,
    NegBinMisspecified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub block_size: usize,
    pub flip_frac: f64,
    pub p_k_true: f64,
    pub w_true: Vec<f64>,
    pub c_true: f64,
    pub s: f64,
    pub t: f64,
    pub n_range: (u32, u32),
    pub mode: SimMode,
    pub seed: u64,
    /// Balanced tree used when no tree file is supplied.
    pub tree_depth: usize,
    pub tree_arity: usize,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            n: 300,
            p: 46,
            k: 6,
            block_size: 50,
            flip_frac: 0.10,
            p_k_true: 0.3,
            w_true: vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5],
            c_true: 0.5f64.ln(),
            s: 5.0,
            t: 0.5,
            n_range: (50, 500),
            mode: SimMode::WellSpecified,
            seed: 1,
            tree_depth: 4,
            tree_arity: 3,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MmfError::InvalidInput(msg));
        if self.n == 0 || self.p == 0 || self.k == 0 {
            return bad(format!("n, p and K must be positive (n = {}, p = {}, K = {})", self.n, self.p, self.k));
        }
        if self.block_size * self.k > self.n {
            return bad(format!("block_size * K = {} exceeds n = {}", self.block_size * self.k, self.n));
        }
        if !(0.0..1.0).contains(&self.flip_frac) {
            return bad(format!("flip_frac = {} must lie in [0, 1)", self.flip_frac));
        }
        if !(self.p_k_true > 0.0 && self.p_k_true < 1.0) {
            return bad(format!("p_k_true = {} must lie in (0, 1)", self.p_k_true));
        }
        if self.w_true.len() != self.k || self.w_true.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad(format!("need {} positive weights, got {:?}", self.k, self.w_true));
        }
        if !self.c_true.is_finite() {
            return bad("c_true must be finite".into());
        }
        if self.n_range.0 < 1 || self.n_range.0 > self.n_range.1 {
            return bad(format!("invalid total-count range {:?}", self.n_range));
        }
        if self.mode == SimMode::WellSpecified && !(self.s > self.t && self.t > 0.0) {
            return bad(format!("need s > t > 0, got s = {}, t = {}", self.s, self.t));
        }
        if self.tree_depth == 0 || self.tree_arity == 0 {
            return bad("tree depth and arity must be positive".into());
        }
        Ok(())
    }
}

/// Block-diagonal host assignment with a fraction of the zeros switched on.
pub fn generate_a<R: Rng + ?Sized>(sc: &SimScenario, rng: &mut R) -> Array2<u8> {
    let mut a = Array2::zeros((sc.n, sc.k));
    for k in 0..sc.k {
        for i in k * sc.block_size..(k + 1) * sc.block_size {
            a[[i, k]] = 1;
        }
    }
    let zeros: Vec<(usize, usize)> = a.indexed_iter().filter(|(_, &v)| v == 0).map(|(ix, _)| ix).collect();
    let flips = (sc.flip_frac * zeros.len() as f64).round() as usize;
    for idx in sample_indices(rng, zeros.len(), flips) {
        a[zeros[idx]] = 1;
    }
    a
}

/// K independent non-empty pIBP columns with a common p.
pub fn generate_b<R: Rng + ?Sized>(tree: &RankTree, k: usize, p_true: f64, rng: &mut R) -> Result<Array2<u8>> {
    let p = tree.n_leaves();
    let mut b = Array2::zeros((p, k));
    for col in 0..k {
        let mut drawn = None;
        for _ in 0..MAX_REDRAWS {
            let c = sample_column(tree, p_true, rng);
            if c.iter().any(|&x| x) {
                drawn = Some(c);
                break;
            }
        }
        let c = drawn.ok_or_else(|| MmfError::InvalidInput(format!("column {col} stayed empty after {MAX_REDRAWS} draws")))?;
        for (j, &v) in c.iter().enumerate() {
            b[[j, col]] = v as u8;
        }
    }
    Ok(b)
}

/// Multinomial(total, weights / Σ weights) by sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(total: u32, weights: &[f64], rng: &mut R) -> Vec<u32> {
    let mut out = vec![0u32; weights.len()];
    let mut left = total as u64;
    let mut mass: f64 = weights.iter().sum();
    for (j, &w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == weights.len() || mass <= 0.0 {
            out[j] = left as u32;
            break;
        }
        let prob = (w / mass).clamp(0.0, 1.0);
        let x = Binomial::new(left, prob).expect("valid binomial").sample(rng);
        out[j] = x as u32;
        left -= x;
        mass -= w;
    }
    out
}

/// One Dirichlet-multinomial row through normalised gamma weights.
pub fn sample_dm_row<R: Rng + ?Sized>(total: u32, eta: &[f64], rng: &mut R) -> Vec<u32> {
    let gam: Vec<f64> = eta.iter().map(|&e| Gamma::new(e, 1.0).expect("positive shape").sample(rng)).collect();
    if gam.iter().sum::<f64>() > 0.0 {
        sample_multinomial(total, &gam, rng)
    } else {
        // every gamma underflowed: the largest shape wins the whole row
        let j = (0..eta.len()).max_by(|&a, &b| eta[a].total_cmp(&eta[b])).unwrap_or(0);
        let mut out = vec![0; eta.len()];
        out[j] = total;
        out
    }
}

/// Counts drawn from the model given (Z, s, t), with the given row totals.
pub fn counts_given_state<R: Rng + ?Sized>(state: &ModelState, totals: &[u32], rng: &mut R) -> Array2<u32> {
    let (n, p) = state.z.dim();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        let eta: Vec<f64> = (0..p).map(|j| state.eta(i, j)).collect();
        for (j, v) in sample_dm_row(totals[i], &eta, rng).into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    x
}

fn true_logits(a: &Array2<u8>, b: &Array2<u8>, sc: &SimScenario) -> Array2<f64> {
    let (n, p) = (a.nrows(), b.nrows());
    Array2::from_shape_fn((n, p), |(i, j)| {
        sc.c_true + (0..sc.k).filter(|&k| a[[i, k]] == 1 && b[[j, k]] == 1).map(|k| sc.w_true[k]).sum::<f64>()
    })
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_shapes(a: &Array2<u8>, b: &Array2<u8>, sc: &SimScenario, tree: &RankTree) -> Result<()> {
    if a.dim() != (sc.n, sc.k) || b.dim() != (sc.p, sc.k) || tree.n_leaves() != sc.p {
        return Err(MmfError::ShapeMismatch("A, B, tree and scenario sizes disagree".into()));
    }
    Ok(())
}

/// Counts from the model itself; returns the data and the true Z.
pub fn generate_counts_dm<R: Rng + ?Sized>(
    a: &Array2<u8>,
    b: &Array2<u8>,
    sc: &SimScenario,
    tree: &RankTree,
    rng: &mut R,
) -> Result<(CountMatrix, Array2<u8>)> {
    check_shapes(a, b, sc, tree)?;
    let logits = true_logits(a, b, sc);
    let z = logits.mapv(|l| (rng.random::<f64>() < sigmoid(l)) as u8);
    let mut x = Array2::zeros((sc.n, sc.p));
    for i in 0..sc.n {
        let total = rng.random_range(sc.n_range.0..=sc.n_range.1);
        let eta: Vec<f64> = (0..sc.p).map(|j| if z[[i, j]] == 1 { sc.s } else { sc.t }).collect();
        for (j, v) in sample_dm_row(total, &eta, rng).into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let data = CountMatrix::new(x, tree.leaf_names(), labels("h", sc.n))?;
    Ok((data, z))
}

/// Negative binomial with mean `mu` and variance `2 mu`, drawn as a
/// gamma-Poisson mixture with size `mu`.
pub fn sample_negbin<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> f64 {
    let lambda = Gamma::new(mu, 1.0).expect("positive mean").sample(rng);
    if lambda > 0.0 {
        Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Negative-binomial abundances with mean μ and variance 2μ, down-sampled to
/// a multinomial with a random depth.
pub fn generate_counts_negbin<R: Rng + ?Sized>(
    a: &Array2<u8>,
    b: &Array2<u8>,
    sc: &SimScenario,
    tree: &RankTree,
    rng: &mut R,
) -> Result<CountMatrix> {
    check_shapes(a, b, sc, tree)?;
    let mu = true_logits(a, b, sc).mapv(f64::exp);
    let mut x = Array2::zeros((sc.n, sc.p));
    for i in 0..sc.n {
        let mut row = None;
        for _ in 0..MAX_REDRAWS {
            let y: Vec<f64> = (0..sc.p).map(|j| sample_negbin(mu[[i, j]], rng)).collect();
            if y.iter().sum::<f64>() > 0.0 {
                row = Some(y);
                break;
            }
        }
        let y = row.ok_or_else(|| MmfError::InvalidInput(format!("host {i}: abundances stayed zero after {MAX_REDRAWS} draws")))?;
        let total = rng.random_range(sc.n_range.0..=sc.n_range.1);
        for (j, v) in sample_multinomial(total, &y, rng).into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    CountMatrix::new(x, tree.leaf_names(), labels("h", sc.n))
}

/// Sample quantile with linear interpolation between order statistics
/// (R's type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Hard-threshold dichotomization on relative abundances: values below
/// `floor` are zero, and each taxon's cutoff is the `q`-quantile of its
/// remaining values.
pub fn tsmf_dichotomize(data: &CountMatrix, floor: f64, q: f64) -> Result<Array2<u8>> {
    if !(0.0..1.0).contains(&floor) || !(q > 0.0 && q < 1.0) {
        return Err(MmfError::InvalidInput(format!("need 0 <= floor < 1 and 0 < q < 1, got {floor}, {q}")));
    }
    let (n, p) = (data.n_hosts(), data.n_taxa());
    let rel = Array2::from_shape_fn((n, p), |(i, j)| data.get(i, j) as f64 / data.total(i) as f64);
    let mut z = Array2::zeros((n, p));
    for j in 0..p {
        let mut kept: Vec<f64> = rel.column(j).iter().copied().filter(|&r| r >= floor).collect();
        if kept.is_empty() {
            continue;
        }
        kept.sort_by(f64::total_cmp);
        let cut = quantile_type7(&kept, q);
        for i in 0..n {
            let r = rel[[i, j]];
            z[[i, j]] = (r >= floor && r >= cut) as u8;
        }
    }
    Ok(z)
}

/// Complete `arity`-ary tree of depth `depth` pruned to `p` leaves.
pub fn balanced_tree(p: usize, depth: usize, arity: usize) -> Result<RankTree> {
    RankTree::balanced(p, depth, arity)
}

/// A full synthetic data set.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: CountMatrix,
    pub tree: RankTree,
    pub a: Array2<u8>,
    pub b: Array2<u8>,
    /// Latent presence matrix; `None` under the misspecified generator.
    pub z: Option<Array2<u8>>,
}

/// Generates A, B and counts for a scenario on `tree` (a balanced tree from
/// the scenario when `tree` is `None`).
pub fn simulate<R: Rng + ?Sized>(sc: &SimScenario, tree: Option<RankTree>, rng: &mut R) -> Result<Simulated> {
    sc.validate()?;
    let tree = match tree {
        Some(t) => t,
        None => balanced_tree(sc.p, sc.tree_depth, sc.tree_arity)?,
    };
    let a = generate_a(sc, rng);
    let b = generate_b(&tree, sc.k, sc.p_k_true, rng)?;
    let (data, z) = match sc.mode {
        SimMode::WellSpecified => {
            let (d, z) = generate_counts_dm(&a, &b, sc, &tree, rng)?;
            (d, Some(z))
        }
        SimMode::NegBinMisspecified => (generate_counts_negbin(&a, &b, sc, &tree, rng)?, None),
    };
    Ok(Simulated { data, tree, a, b, z })
}
