//! Successive-conditional (Geweke) simulation and exact checks of the
//! conjugate draws, shared by the sampler tests and the acceptance run.

use mmf::mcmc::{sample_prior_state, Sampler, SamplerConfig};
use mmf::simgen::counts_given_state;
use mmf::{CountMatrix, Hyperparameters, ModelState, RankTree};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{chi2_sf, chi2_two_sample, gamma_q, ks_two_sample};

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("t{j}")).collect()
}

/// Moderate priors so that a random-walk chain crosses the prior support
/// quickly; the kernels are correct for any hyperparameters.
pub fn toy_hp() -> Hyperparameters {
    Hyperparameters {
        alpha_s: 3.0,
        beta_s: 1.0,
        alpha_t: 1.5,
        beta_t: 1.0,
        sigma2_c: 1.0,
        alpha_w: 2.0,
        beta_w: 1.0,
        ..Default::default()
    }
}

/// K ~ Poisson(m H) with m ~ Gamma(1, 1): geometric with ratio H / (1 + H).
pub fn geometric_pmf(h: f64, len: usize) -> Vec<f64> {
    (0..len).map(|k| h.powi(k as i32) / (1.0 + h).powi(k as i32 + 1)).collect()
}

pub fn ones(state: &ModelState) -> usize {
    state.clusters.iter().map(|c| c.taxa.iter().filter(|&&b| b).count()).sum()
}

pub struct Draws {
    pub k: Vec<usize>,
    pub ones: Vec<usize>,
    pub m: Vec<f64>,
    pub rho: Vec<f64>,
    pub c0: Vec<f64>,
}

pub fn prior_draws(n: usize, tree: &RankTree, hp: &Hyperparameters, count: usize, seed: u64) -> Draws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Draws { k: vec![], ones: vec![], m: vec![], rho: vec![], c0: vec![] };
    for _ in 0..count {
        let s = sample_prior_state(n, tree, hp, &mut rng);
        d.k.push(s.k());
        d.ones.push(ones(&s));
        d.m.push(s.m);
        d.rho.push(s.rho);
        d.c0.push(s.c[0]);
    }
    d
}

/// Alternates data regeneration with one full sampler cycle.
pub fn successive_conditional(n: usize, tree: &RankTree, hp: &Hyperparameters, rounds: usize, thin: usize, seed: u64) -> Draws {
    let p = tree.n_leaves();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SamplerConfig::default();
    let totals = vec![12u32; n];
    let init = sample_prior_state(n, tree, hp, &mut rng);
    let placeholder = CountMatrix::new(Array2::from_elem((n, p), 1), tree.leaf_names(), names(n)).unwrap();
    let mut state = init;
    let mut d = Draws { k: vec![], ones: vec![], m: vec![], rho: vec![], c0: vec![] };
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    for r in 1..=rounds {
        let x = counts_given_state(&state, &totals, &mut data_rng);
        let data = CountMatrix::new(x, placeholder.taxa().to_vec(), placeholder.hosts().to_vec()).unwrap();
        let mut sampler = Sampler::new(&data, tree, hp, &config, state, sampler_rng);
        sampler.step();
        state = sampler.state;
        sampler_rng = sampler.rng;
        if r % thin == 0 {
            d.k.push(state.k());
            d.ones.push(ones(&state));
            d.m.push(state.m);
            d.rho.push(state.rho);
            d.c0.push(state.c[0]);
        }
    }
    d
}

/// With the likelihood off, B sweeps and m updates leave the pIBP prior
/// invariant.
pub fn prior_only_b_chain(tree: &RankTree, sweeps: usize, thin: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let hp = Hyperparameters::default();
    let config = SamplerConfig { use_likelihood: false, ..Default::default() };
    let n = 3;
    let p = tree.n_leaves();
    let data = CountMatrix::new(Array2::from_elem((n, p), 1), tree.leaf_names(), names(n)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = sample_prior_state(n, tree, &hp, &mut rng);
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut sampler = Sampler::new(&data, tree, &hp, &config, init, rng);
    let (mut ks, mut ones_v, mut probs) = (vec![], vec![], vec![]);
    for it in 1..=sweeps {
        sampler.update_b_sweep();
        sampler.update_m();
        if it % thin == 0 {
            ks.push(sampler.state.k());
            ones_v.push(ones(&sampler.state));
            // a uniformly chosen column; the oldest one is size-biased
            let k = sampler.state.k();
            if k > 0 {
                probs.push(sampler.state.clusters[pick.random_range(0..k)].prob);
            }
        }
    }
    (ks, ones_v, probs)
}

pub fn binomial_tail(n: u64, x: f64, at_least: u64) -> f64 {
    // P(Bin(n, x) >= at_least)
    (at_least..=n)
        .map(|k| {
            let ln_c = mmf::special::ln_gamma(n as f64 + 1.0)
                - mmf::special::ln_gamma(k as f64 + 1.0)
                - mmf::special::ln_gamma((n - k) as f64 + 1.0);
            (ln_c + k as f64 * x.ln() + (n - k) as f64 * (-x).ln_1p()).exp()
        })
        .sum()
}

/// χ² test of draws against a CDF on a fixed grid of `bins` cells over [lo, hi].
pub fn grid_chi2(draws: &[f64], cdf: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> f64 {
    let width = (hi - lo) / bins as f64;
    let mut obs = vec![0f64; bins + 1];
    for &d in draws {
        let b = (((d - lo) / width).floor().max(0.0) as usize).min(bins);
        obs[b] += 1.0;
    }
    let n = draws.len() as f64;
    let mut stat = 0.0;
    let mut used = 0;
    for b in 0..=bins {
        let (a, z) = (lo + b as f64 * width, lo + (b + 1) as f64 * width);
        let prob = if b == bins { 1.0 - cdf(a) } else { cdf(z) - cdf(a) };
        let e = prob * n;
        if e > 5.0 {
            stat += (obs[b] - e).powi(2) / e;
            used += 1;
        }
    }
    chi2_sf(stat, (used - 1) as f64)
}

/// p-values of the conjugate ρ | A and m | K draws against their exact
/// distributions, from 10^5 repeated draws at a fixed state.
pub fn conjugate_pvalues(seed: u64) -> (f64, f64) {
    let tree = RankTree::balanced(6, 2, 3).unwrap();
    let hp = Hyperparameters::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sample_prior_state(5, &tree, &hp, &mut rng);
    while state.k() < 2 {
        state = sample_prior_state(5, &tree, &hp, &mut rng);
    }
    let data = CountMatrix::new(Array2::from_elem((5, 6), 1), tree.leaf_names(), names(5)).unwrap();
    let config = SamplerConfig::default();
    let mut sampler = Sampler::new(&data, &tree, &hp, &config, state, rng);
    let (mut rhos, mut ms) = (vec![], vec![]);
    for _ in 0..100_000 {
        sampler.gibbs_update_rho();
        sampler.update_m();
        rhos.push(sampler.state.rho);
        ms.push(sampler.state.m);
    }
    let st = &sampler.state;
    let on: usize = st.clusters.iter().map(|c| c.hosts.iter().filter(|&&a| a).count()).sum();
    let total = st.k() * st.n_hosts();
    // Beta(1 + on, 1 + total - on) with integer shapes
    let (a, b) = (1 + on as u64, 1 + (total - on) as u64);
    let beta_cdf = |x: f64| if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { binomial_tail(a + b - 1, x, a) };
    let rho_p = grid_chi2(&rhos, beta_cdf, 0.0, 1.0, 40);
    let h = mmf::pibp::total_column_rate(tree.node_count(), tree.depth());
    let (shape, rate) = (1.0 + st.k() as f64, 1.0 + h);
    let gamma_cdf = |x: f64| if x <= 0.0 { 0.0 } else { 1.0 - gamma_q(shape, rate * x) };
    let m_p = grid_chi2(&ms, gamma_cdf, 0.0, 4.0 * shape / rate, 40);
    (rho_p, m_p)
}

/// Successive-conditional marginals of ρ, m and K on the flat (star) tree
/// against independent prior draws, as (label, p-value) pairs.
pub fn star_tree_pvalues(n: usize, p: usize, rounds: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let tree = RankTree::star(&names(p)).unwrap();
    let hp = toy_hp();
    let mcmc = successive_conditional(n, &tree, &hp, rounds, 25, seed);
    let prior = prior_draws(n, &tree, &hp, mcmc.k.len(), seed + 1);
    vec![
        ("rho", ks_two_sample(&mcmc.rho, &prior.rho)),
        ("m", ks_two_sample(&mcmc.m, &prior.m)),
        ("c_1", ks_two_sample(&mcmc.c0, &prior.c0)),
        ("K", chi2_two_sample(&mcmc.k, &prior.k)),
        ("ones in B", chi2_two_sample(&mcmc.ones, &prior.ones)),
    ]
}
