//! Chain initialisation, the iteration loop and multi-chain execution.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson};

use super::config::SamplerConfig;
use super::kernels::{gamma_draw, normal, Sampler, TreeConstants};
use super::trace::{IterationRecord, Snapshot, Trace};
use crate::error::{MmfError, Result};
use crate::model::{log_joint, CountMatrix, Cluster, Hyperparameters, ModelState};
use crate::pibp::{sample_nonempty_column, sample_nonempty_pk};
use crate::special::sigmoid;
use crate::tree::RankTree;

/// RNG for chain `chain_id`: one ChaCha stream per chain off a common seed.
pub fn chain_rng(seed: u64, chain_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id as u64);
    rng
}

fn draw_s_t<R: Rng + ?Sized>(hp: &Hyperparameters, rng: &mut R) -> (f64, f64) {
    loop {
        let s = gamma_draw(hp.alpha_s, hp.beta_s, rng);
        let t = gamma_draw(hp.alpha_t, hp.beta_t, rng);
        if s > t && t > 0.0 {
            return (s, t);
        }
    }
}

fn draw_rho<R: Rng + ?Sized>(hp: &Hyperparameters, rng: &mut R) -> f64 {
    let beta = Beta::new(hp.alpha_rho, hp.beta_rho).expect("positive beta parameters");
    loop {
        let r = beta.sample(rng);
        if r > 0.0 && r < 1.0 {
            return r;
        }
    }
}

fn draw_cluster<R: Rng + ?Sized>(n: usize, tree: &RankTree, hp: &Hyperparameters, prob: f64, host_rate: f64, rng: &mut R) -> Cluster {
    let p = tree.n_leaves();
    Cluster {
        hosts: (0..n).map(|_| rng.random::<f64>() < host_rate).collect(),
        taxa: sample_nonempty_column(tree, prob, rng),
        weights: (0..p).map(|_| gamma_draw(hp.alpha_w, hp.beta_w, rng)).collect(),
        prob,
    }
}

/// Starting state: `config.init_clusters` columns with p_k ~ U(0, 1), A at
/// rate 1/2, continuous parameters from their priors and Z = [x > 0].
pub fn initial_state<R: Rng + ?Sized>(data: &CountMatrix, tree: &RankTree, hp: &Hyperparameters, config: &SamplerConfig, rng: &mut R) -> ModelState {
    let (n, p) = (data.n_hosts(), data.n_taxa());
    let clusters = (0..config.init_clusters)
        .map(|_| {
            let prob = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            draw_cluster(n, tree, hp, prob, 0.5, rng)
        })
        .collect();
    let mut s = Vec::with_capacity(p);
    let mut t = Vec::with_capacity(p);
    let mut c = Vec::with_capacity(p);
    for _ in 0..p {
        c.push(hp.mu_c + hp.sigma2_c.sqrt() * normal(rng));
        let (sj, tj) = draw_s_t(hp, rng);
        s.push(sj);
        t.push(tj);
    }
    let m = gamma_draw(hp.m_shape, hp.m_rate, rng).max(f64::MIN_POSITIVE);
    let rho = draw_rho(hp, rng);
    let z = Array2::from_shape_fn((n, p), |(i, j)| (data.get(i, j) > 0) as u8);
    ModelState { z, clusters, c, s, t, m, rho }
}

/// A draw from the full prior for `n` hosts, Z included.
pub fn sample_prior_state<R: Rng + ?Sized>(n: usize, tree: &RankTree, hp: &Hyperparameters, rng: &mut R) -> ModelState {
    let p = tree.n_leaves();
    let consts = TreeConstants::new(tree);
    let m = gamma_draw(hp.m_shape, hp.m_rate, rng).max(f64::MIN_POSITIVE);
    let rho = draw_rho(hp, rng);
    let rate = m * consts.total_rate;
    let k = if rate > 0.0 { Poisson::new(rate).map(|d| d.sample(rng) as usize).unwrap_or(0) } else { 0 };
    let clusters = (0..k)
        .map(|_| {
            let prob = sample_nonempty_pk(consts.n_nodes, consts.depth, rng);
            draw_cluster(n, tree, hp, prob, rho, rng)
        })
        .collect();
    let mut state = ModelState {
        z: Array2::zeros((n, p)),
        clusters,
        c: (0..p).map(|_| hp.mu_c + hp.sigma2_c.sqrt() * normal(rng)).collect(),
        s: vec![0.0; p],
        t: vec![0.0; p],
        m,
        rho,
    };
    for j in 0..p {
        let (s, t) = draw_s_t(hp, rng);
        state.s[j] = s;
        state.t[j] = t;
    }
    resample_z(&mut state, rng);
    state
}

/// Redraws Z from Bernoulli(σ(logit)).
pub fn resample_z<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    let logits = state.logits();
    for ((i, j), &l) in logits.indexed_iter() {
        state.z[[i, j]] = (rng.random::<f64>() < sigmoid(l)) as u8;
    }
}

fn state_dump(state: &ModelState) -> String {
    format!(
        "K = {}, m = {}, rho = {}, c = {:?}, s = {:?}, t = {:?}, p = {:?}",
        state.k(),
        state.m,
        state.rho,
        state.c,
        state.s,
        state.t,
        state.p_cols()
    )
}

/// Runs one chain from the configured initialisation.
pub fn run_chain(data: &CountMatrix, tree: &RankTree, hp: &Hyperparameters, config: &SamplerConfig, chain_id: u32) -> Result<Trace> {
    let mut rng = chain_rng(config.seed, chain_id);
    let init = initial_state(data, tree, hp, config, &mut rng);
    run_chain_from(data, tree, hp, config, chain_id, init, rng)
}

/// Runs one chain from an explicit starting state.
pub fn run_chain_from(
    data: &CountMatrix,
    tree: &RankTree,
    hp: &Hyperparameters,
    config: &SamplerConfig,
    chain_id: u32,
    init: ModelState,
    rng: ChaCha8Rng,
) -> Result<Trace> {
    config.validate()?;
    hp.validate()?;
    if data.n_taxa() != tree.n_leaves() || init.n_taxa() != data.n_taxa() || init.n_hosts() != data.n_hosts() {
        return Err(MmfError::ShapeMismatch("data, tree and initial state disagree".into()));
    }
    init.validate()?;
    let mut sampler = Sampler::new(data, tree, hp, config, init, rng);
    let mut records = Vec::with_capacity(config.iterations);
    let mut snapshots = Vec::with_capacity(config.snapshot_count());
    for it in 1..=config.iterations {
        sampler.step();
        let lj = log_joint(&sampler.state, data, tree, hp).map_err(|e| {
            MmfError::NonFinite(format!("chain {chain_id}, iteration {it}: {e}; state: {}", state_dump(&sampler.state)))
        })?;
        let d = &sampler.diagnostics;
        records.push(IterationRecord {
            iteration: it,
            k: sampler.state.k(),
            log_joint: lj,
            m: sampler.state.m,
            rho: sampler.state.rho,
            acceptance: [d.w.rate(), d.c.rate(), d.st.rate(), d.pk.rate(), d.new_columns.rate()],
        });
        if config.keeps(it) {
            snapshots.push(Snapshot { iteration: it, state: sampler.state.clone() });
        }
    }
    Ok(Trace {
        chain_id,
        seed: config.seed,
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        records,
        snapshots,
        diagnostics: sampler.diagnostics,
    })
}

/// Runs `config.n_chains` chains on at most `threads` worker threads. The
/// result is identical for every thread count.
pub fn run_chains(data: &CountMatrix, tree: &RankTree, hp: &Hyperparameters, config: &SamplerConfig, threads: usize) -> Result<Vec<Trace>> {
    config.validate()?;
    in_parallel(config.n_chains, threads, |id| run_chain(data, tree, hp, config, id))
}

/// Two-step baseline: Z is held at `z` (typically a dichotomised count
/// table) and only the factor model on top of it is sampled.
pub fn run_chains_fixed_z(
    data: &CountMatrix,
    tree: &RankTree,
    hp: &Hyperparameters,
    config: &SamplerConfig,
    threads: usize,
    z: &Array2<u8>,
) -> Result<Vec<Trace>> {
    if z.dim() != (data.n_hosts(), data.n_taxa()) {
        return Err(MmfError::ShapeMismatch(format!("fixed Z is {:?}, data is {:?}", z.dim(), data.counts().dim())));
    }
    let config = SamplerConfig { freeze_z: true, ..config.clone() };
    config.validate()?;
    in_parallel(config.n_chains, threads, |id| {
        let mut rng = chain_rng(config.seed, id);
        let mut init = initial_state(data, tree, hp, &config, &mut rng);
        init.z = z.clone();
        run_chain_from(data, tree, hp, &config, id, init, rng)
    })
}

fn in_parallel<F>(n: usize, threads: usize, run: F) -> Result<Vec<Trace>>
where
    F: Fn(u32) -> Result<Trace> + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Trace>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::SeqCst);
                if id >= n {
                    break;
                }
                let out = run(id as u32);
                results.lock().expect("no worker panicked")[id] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every chain ran"))
        .collect()
}
