//! Gibbs and Metropolis-Hastings kernels for every parameter except B.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::config::{MUpdate, SamplerConfig};
use super::trace::KernelDiagnostics;
use crate::model::{CountMatrix, Hyperparameters, ModelState};
use crate::pibp::{singleton_column_rate, total_column_rate};
use crate::special::{ln_gamma, ln_gamma_pdf, log_bernoulli_logit};
use crate::tree::RankTree;

/// Tree quantities needed by the sampler that never change.
#[derive(Debug, Clone)]
pub struct TreeConstants {
    pub n_nodes: usize,
    pub depth: usize,
    /// ψ((P-1)/L + 1) - ψ(1): K ~ Poisson(m times this).
    pub total_rate: f64,
    /// Per-leaf new-column rate per unit mass.
    pub birth_rate: Vec<f64>,
    pub private_edges: Vec<usize>,
}

impl TreeConstants {
    pub fn new(tree: &RankTree) -> Self {
        let (n_nodes, depth) = (tree.node_count(), tree.depth());
        let private_edges: Vec<usize> = (0..tree.n_leaves()).map(|j| tree.private_edges(j)).collect();
        TreeConstants {
            n_nodes,
            depth,
            total_rate: total_column_rate(n_nodes, depth),
            birth_rate: private_edges.iter().map(|&e| singleton_column_rate(1.0, n_nodes, depth, e)).collect(),
            private_edges,
        }
    }
}

/// Log odds of z_ij = 1 against z_ij = 0 under its full conditional.
///
/// `shape_sum` is Σ_j η_ij for the current row; only the taxon-j terms and
/// the change in that sum enter, so this is O(1).
pub fn z_log_odds(state: &ModelState, data: &CountMatrix, i: usize, j: usize, logit: f64, shape_sum: f64) -> f64 {
    let x = data.get(i, j) as f64;
    let total = data.total(i) as f64;
    let rest = shape_sum - state.eta(i, j);
    let dm = |eta: f64| {
        let mut v = ln_gamma(rest + eta) - ln_gamma(total + rest + eta);
        if x > 0.0 {
            v += ln_gamma(x + eta) - ln_gamma(eta);
        }
        v
    };
    logit + dm(state.s[j]) - dm(state.t[j])
}

/// Log odds of a_ik = 1 against a_ik = 0 given `logits` for row i.
pub fn a_log_odds(state: &ModelState, i: usize, k: usize, logits_row: &[f64], use_likelihood: bool) -> f64 {
    let cl = &state.clusters[k];
    let mut odds = state.rho.ln() - (-state.rho).ln_1p();
    if !use_likelihood {
        return odds;
    }
    for j in (0..state.n_taxa()).filter(|&j| cl.taxa[j]) {
        let base = logits_row[j] - if cl.hosts[i] { cl.weights[j] } else { 0.0 };
        let z = state.z[[i, j]] == 1;
        odds += log_bernoulli_logit(z, base + cl.weights[j]) - log_bernoulli_logit(z, base);
    }
    odds
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

/// Sampler state for one chain: model inputs, the current state, the RNG
/// stream and running diagnostics.
pub struct Sampler<'a> {
    pub data: &'a CountMatrix,
    pub tree: &'a RankTree,
    pub hp: &'a Hyperparameters,
    pub config: &'a SamplerConfig,
    pub consts: TreeConstants,
    pub state: ModelState,
    pub rng: ChaCha8Rng,
    pub diagnostics: KernelDiagnostics,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a CountMatrix,
        tree: &'a RankTree,
        hp: &'a Hyperparameters,
        config: &'a SamplerConfig,
        state: ModelState,
        rng: ChaCha8Rng,
    ) -> Self {
        Sampler {
            data,
            tree,
            hp,
            config,
            consts: TreeConstants::new(tree),
            state,
            rng,
            diagnostics: KernelDiagnostics::default(),
        }
    }

    fn shape_sums(&self) -> Vec<f64> {
        (0..self.state.n_hosts())
            .map(|i| (0..self.state.n_taxa()).map(|j| self.state.eta(i, j)).sum())
            .collect()
    }

    /// One full cycle in the fixed kernel order.
    pub fn step(&mut self) {
        let started = std::time::Instant::now();
        if !self.config.freeze_z {
            self.gibbs_update_z();
        }
        self.gibbs_update_a();
        self.gibbs_update_rho();
        self.mh_update_w();
        self.mh_update_c();
        if !self.config.freeze_z {
            self.mh_update_st();
        }
        if !self.config.freeze_b {
            self.update_b_sweep();
        }
        self.update_m();
        self.diagnostics.sweep_seconds += started.elapsed().as_secs_f64();
    }

    /// Gibbs draw of every z_ij, row by row, keeping the row shape sum current.
    pub fn gibbs_update_z(&mut self) {
        let logits = self.state.logits();
        let (n, p) = self.state.z.dim();
        for i in 0..n {
            let mut shape_sum: f64 = (0..p).map(|j| self.state.eta(i, j)).sum();
            for j in 0..p {
                let logit = logits[[i, j]];
                let odds = if self.config.use_likelihood {
                    z_log_odds(&self.state, self.data, i, j, logit, shape_sum)
                } else {
                    logit
                };
                let old = self.state.eta(i, j);
                let on = bernoulli_logit(odds, &mut self.rng);
                self.state.z[[i, j]] = on as u8;
                shape_sum += self.state.eta(i, j) - old;
            }
        }
    }

    pub fn gibbs_update_a(&mut self) {
        let mut logits = self.state.logits();
        let (n, p) = self.state.z.dim();
        for k in 0..self.state.k() {
            for i in 0..n {
                let row = logits.row(i);
                let odds = a_log_odds(&self.state, i, k, row.as_slice().expect("standard layout"), self.config.use_likelihood);
                let on = bernoulli_logit(odds, &mut self.rng);
                let cl = &mut self.state.clusters[k];
                if on != cl.hosts[i] {
                    let sign = if on { 1.0 } else { -1.0 };
                    for j in (0..p).filter(|&j| cl.taxa[j]) {
                        logits[[i, j]] += sign * cl.weights[j];
                    }
                    cl.hosts[i] = on;
                }
            }
        }
    }

    /// ρ ~ Beta(α_ρ + ΣA, β_ρ + nK - ΣA).
    pub fn gibbs_update_rho(&mut self) {
        let n = self.state.n_hosts() as f64;
        let k = self.state.k() as f64;
        let ones = self
            .state
            .clusters
            .iter()
            .map(|cl| cl.hosts.iter().filter(|&&a| a).count())
            .sum::<usize>() as f64;
        let beta = Beta::new(self.hp.alpha_rho + ones, self.hp.beta_rho + n * k - ones).expect("beta parameters");
        // keep ρ strictly inside (0, 1)
        self.state.rho = beta.sample(&mut self.rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    }

    /// Random walk on log w_jk for active entries; inactive entries are redrawn
    /// from their prior.
    pub fn mh_update_w(&mut self) {
        let mut logits = self.state.logits();
        let (n, p) = self.state.z.dim();
        let hp = self.hp;
        for k in 0..self.state.k() {
            for j in 0..p {
                if !self.state.clusters[k].taxa[j] {
                    self.state.clusters[k].weights[j] = gamma_draw(hp.alpha_w, hp.beta_w, &mut self.rng);
                    continue;
                }
                let cl = &self.state.clusters[k];
                let w = cl.weights[j];
                let proposal = w * (self.config.scale_w * normal(&mut self.rng)).exp();
                let delta = proposal - w;
                let mut log_ratio = ln_gamma_pdf(proposal, hp.alpha_w, hp.beta_w) - ln_gamma_pdf(w, hp.alpha_w, hp.beta_w)
                    + proposal.ln()
                    - w.ln();
                if self.config.use_likelihood {
                    for i in (0..n).filter(|&i| cl.hosts[i]) {
                        let z = self.state.z[[i, j]] == 1;
                        let l = logits[[i, j]];
                        log_ratio += log_bernoulli_logit(z, l + delta) - log_bernoulli_logit(z, l);
                    }
                }
                let accept = accept(log_ratio, &mut self.rng);
                self.diagnostics.w.record(accept);
                if accept && proposal > 0.0 && proposal.is_finite() {
                    let cl = &mut self.state.clusters[k];
                    cl.weights[j] = proposal;
                    for i in (0..n).filter(|&i| cl.hosts[i]) {
                        logits[[i, j]] += delta;
                    }
                }
            }
        }
    }

    pub fn mh_update_c(&mut self) {
        let logits = self.state.logits();
        let (n, p) = self.state.z.dim();
        let hp = self.hp;
        for j in 0..p {
            let c = self.state.c[j];
            let proposal = c + self.config.scale_c * normal(&mut self.rng);
            let delta = proposal - c;
            let mut log_ratio = ((c - hp.mu_c).powi(2) - (proposal - hp.mu_c).powi(2)) / (2.0 * hp.sigma2_c);
            if self.config.use_likelihood {
                for i in 0..n {
                    let z = self.state.z[[i, j]] == 1;
                    let l = logits[[i, j]];
                    log_ratio += log_bernoulli_logit(z, l + delta) - log_bernoulli_logit(z, l);
                }
            }
            let accept = accept(log_ratio, &mut self.rng);
            self.diagnostics.c.record(accept);
            if accept {
                self.state.c[j] = proposal;
            }
        }
    }

    /// Joint random walk on (log s_j, log t_j); proposals with s <= t are
    /// rejected outright.
    pub fn mh_update_st(&mut self) {
        let (n, p) = self.state.z.dim();
        let hp = self.hp;
        let mut shape_sums = self.shape_sums();
        for j in 0..p {
            let (s, t) = (self.state.s[j], self.state.t[j]);
            let s_new = s * (self.config.scale_st * normal(&mut self.rng)).exp();
            let t_new = t * (self.config.scale_st * normal(&mut self.rng)).exp();
            if !(s_new > t_new && t_new > 0.0 && s_new.is_finite()) {
                self.diagnostics.st.record(false);
                continue;
            }
            let mut log_ratio = ln_gamma_pdf(s_new, hp.alpha_s, hp.beta_s) + ln_gamma_pdf(t_new, hp.alpha_t, hp.beta_t)
                - ln_gamma_pdf(s, hp.alpha_s, hp.beta_s)
                - ln_gamma_pdf(t, hp.alpha_t, hp.beta_t)
                + (s_new / s).ln()
                + (t_new / t).ln();
            if self.config.use_likelihood {
                for i in 0..n {
                    let on = self.state.z[[i, j]] == 1;
                    let (old, new) = if on { (s, s_new) } else { (t, t_new) };
                    let x = self.data.get(i, j) as f64;
                    let total = self.data.total(i) as f64;
                    let sum_old = shape_sums[i];
                    let sum_new = sum_old - old + new;
                    log_ratio += ln_gamma(sum_new) - ln_gamma(total + sum_new) - ln_gamma(sum_old)
                        + ln_gamma(total + sum_old);
                    if x > 0.0 {
                        log_ratio += ln_gamma(x + new) - ln_gamma(new) - ln_gamma(x + old) + ln_gamma(old);
                    }
                }
            }
            let accept = accept(log_ratio, &mut self.rng);
            self.diagnostics.st.record(accept);
            if accept {
                for (i, sum) in shape_sums.iter_mut().enumerate() {
                    *sum += if self.state.z[[i, j]] == 1 { s_new - s } else { t_new - t };
                }
                self.state.s[j] = s_new;
                self.state.t[j] = t_new;
            }
        }
    }

    /// Update of the pIBP mass. Given K the conditional is
    /// Gamma(m_shape + K, m_rate + H) with H = ψ((P-1)/L + 1) - ψ(1).
    pub fn update_m(&mut self) {
        let shape = self.hp.m_shape + self.state.k() as f64;
        let rate = self.hp.m_rate + self.consts.total_rate;
        match self.config.m_update {
            MUpdate::Conjugate => {
                self.state.m = gamma_draw(shape, rate, &mut self.rng).max(f64::MIN_POSITIVE);
            }
            MUpdate::RandomWalk => {
                let m = self.state.m;
                let proposal = m * (self.config.scale_m * normal(&mut self.rng)).exp();
                let log_ratio = shape * (proposal / m).ln() - rate * (proposal - m);
                let accept = accept(log_ratio, &mut self.rng);
                self.diagnostics.m.record(accept);
                if accept {
                    self.state.m = proposal;
                }
            }
        }
    }
}

pub(crate) fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Bernoulli draw with P(true) = σ(log_odds), one uniform per call.
pub(crate) fn bernoulli_logit<R: Rng + ?Sized>(log_odds: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < crate::special::sigmoid(log_odds)
}
