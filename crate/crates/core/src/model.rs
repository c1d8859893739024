//! Data, hyperparameters, latent state and the collapsed likelihood.

use std::collections::HashSet;

use ndarray::Array2;

use crate::error::{MmfError, Result};
use crate::pibp::{column_log_prior, total_column_rate};
use crate::special::{ln_gamma, ln_gamma_pdf, log_bernoulli_logit, sigmoid};
use crate::tree::RankTree;

/// Hosts × taxa table of non-negative integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: Array2<u32>,
    taxa: Vec<String>,
    hosts: Vec<String>,
    host_labels: Option<Vec<String>>,
    totals: Vec<u64>,
}

impl CountMatrix {
    pub fn new(counts: Array2<u32>, taxa: Vec<String>, hosts: Vec<String>) -> Result<Self> {
        let (n, p) = counts.dim();
        if taxa.len() != p {
            return Err(MmfError::ShapeMismatch(format!("{} taxon names for {p} columns", taxa.len())));
        }
        if hosts.len() != n {
            return Err(MmfError::ShapeMismatch(format!("{} host ids for {n} rows", hosts.len())));
        }
        let mut seen = HashSet::new();
        for name in &taxa {
            if !seen.insert(name.as_str()) {
                return Err(MmfError::InvalidInput(format!("duplicate taxon name `{name}`")));
            }
        }
        let totals: Vec<u64> = counts.rows().into_iter().map(|r| r.iter().map(|&x| x as u64).sum()).collect();
        if let Some(i) = totals.iter().position(|&t| t == 0) {
            return Err(MmfError::InvalidInput(format!("host `{}` has zero total count", hosts[i])));
        }
        Ok(CountMatrix { counts, taxa, hosts, host_labels: None, totals })
    }

    /// Convenience constructor with generated names `h1..` and `t1..`.
    pub fn from_counts(counts: Array2<u32>) -> Result<Self> {
        let (n, p) = counts.dim();
        let taxa = (1..=p).map(|j| format!("t{j}")).collect();
        let hosts = (1..=n).map(|i| format!("h{i}")).collect();
        Self::new(counts, taxa, hosts)
    }

    pub fn with_host_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_hosts() {
            return Err(MmfError::ShapeMismatch(format!("{} labels for {} hosts", labels.len(), self.n_hosts())));
        }
        self.host_labels = Some(labels);
        Ok(self)
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[[i, j]]
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, u32> {
        self.counts.row(i)
    }

    pub fn total(&self, i: usize) -> u64 {
        self.totals[i]
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn n_hosts(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_taxa(&self) -> usize {
        self.counts.ncols()
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn hosts(&self) -> &[String] {
        &self.hosts
    }

    pub fn host_labels(&self) -> Option<&[String]> {
        self.host_labels.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub alpha_s: f64,
    pub beta_s: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
    pub mu_c: f64,
    pub sigma2_c: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
    pub alpha_rho: f64,
    pub beta_rho: f64,
    pub m_shape: f64,
    pub m_rate: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha_s: 1.0,
            beta_s: 0.1,
            alpha_t: 1.0,
            beta_t: 0.1,
            mu_c: 0.0,
            sigma2_c: 100.0,
            alpha_w: 1.0,
            beta_w: 0.1,
            alpha_rho: 1.0,
            beta_rho: 1.0,
            m_shape: 1.0,
            m_rate: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_s", self.alpha_s),
            ("beta_s", self.beta_s),
            ("alpha_t", self.alpha_t),
            ("beta_t", self.beta_t),
            ("sigma2_c", self.sigma2_c),
            ("alpha_w", self.alpha_w),
            ("beta_w", self.beta_w),
            ("alpha_rho", self.alpha_rho),
            ("beta_rho", self.beta_rho),
            ("m_shape", self.m_shape),
            ("m_rate", self.m_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MmfError::InvalidInput(format!("hyperparameter {name} must be positive, got {v}")));
            }
        }
        if !self.mu_c.is_finite() {
            return Err(MmfError::InvalidInput("mu_c must be finite".into()));
        }
        Ok(())
    }
}

/// One latent cluster: its hosts (column of A), taxa (column of B), weights
/// (column of W; only entries with an active taxon enter the likelihood) and
/// column probability p_k.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub hosts: Vec<bool>,
    pub taxa: Vec<bool>,
    pub weights: Vec<f64>,
    pub prob: f64,
}

impl Cluster {
    pub fn is_empty(&self) -> bool {
        !self.taxa.iter().any(|&b| b)
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.iter().filter(|&&b| b).count()
    }
}

/// All latent variables and parameters at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// n × p latent abundance flags.
    pub z: Array2<u8>,
    pub clusters: Vec<Cluster>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub m: f64,
    pub rho: f64,
}

impl ModelState {
    pub fn n_hosts(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_taxa(&self) -> usize {
        self.z.ncols()
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    /// c_j + Σ_k a_ik w_jk b_jk
    pub fn logit(&self, i: usize, j: usize) -> f64 {
        let mut q = self.c[j];
        for cl in &self.clusters {
            if cl.hosts[i] && cl.taxa[j] {
                q += cl.weights[j];
            }
        }
        q
    }

    /// Full n × p logit matrix.
    pub fn logits(&self) -> Array2<f64> {
        let (n, p) = self.z.dim();
        let mut q = Array2::from_shape_fn((n, p), |(_, j)| self.c[j]);
        for cl in &self.clusters {
            for i in (0..n).filter(|&i| cl.hosts[i]) {
                for j in (0..p).filter(|&j| cl.taxa[j]) {
                    q[[i, j]] += cl.weights[j];
                }
            }
        }
        q
    }

    pub fn a_matrix(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.n_hosts(), self.k()), |(i, k)| self.clusters[k].hosts[i] as u8)
    }

    pub fn b_matrix(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.n_taxa(), self.k()), |(j, k)| self.clusters[k].taxa[j] as u8)
    }

    pub fn w_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_taxa(), self.k()), |(j, k)| self.clusters[k].weights[j])
    }

    pub fn p_cols(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.prob).collect()
    }

    /// Dirichlet shape η_ij.
    #[inline]
    pub fn eta(&self, i: usize, j: usize) -> f64 {
        if self.z[[i, j]] == 1 {
            self.s[j]
        } else {
            self.t[j]
        }
    }

    /// Checks the support constraints of the model.
    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.z.dim();
        if self.c.len() != p || self.s.len() != p || self.t.len() != p {
            return Err(MmfError::ShapeMismatch("per-taxon parameter length".into()));
        }
        if self.z.iter().any(|&v| v > 1) {
            return Err(MmfError::OutsideSupport("Z is not binary".into()));
        }
        for j in 0..p {
            if !(self.t[j] > 0.0 && self.s[j] > self.t[j] && self.s[j].is_finite()) {
                return Err(MmfError::OutsideSupport(format!(
                    "taxon {j}: need s > t > 0, got s = {}, t = {}",
                    self.s[j], self.t[j]
                )));
            }
            if !self.c[j].is_finite() {
                return Err(MmfError::OutsideSupport(format!("taxon {j}: c is not finite")));
            }
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(MmfError::OutsideSupport(format!("m = {}", self.m)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(MmfError::OutsideSupport(format!("rho = {}", self.rho)));
        }
        for (k, cl) in self.clusters.iter().enumerate() {
            if cl.hosts.len() != n || cl.taxa.len() != p || cl.weights.len() != p {
                return Err(MmfError::ShapeMismatch(format!("cluster {k} dimensions")));
            }
            if cl.is_empty() {
                return Err(MmfError::OutsideSupport(format!("cluster {k} has no taxa")));
            }
            if !(cl.prob > 0.0 && cl.prob < 1.0) {
                return Err(MmfError::OutsideSupport(format!("cluster {k}: p_k = {}", cl.prob)));
            }
            if cl.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(MmfError::OutsideSupport(format!("cluster {k}: non-positive weight")));
            }
        }
        Ok(())
    }
}

/// log DM(x_i; N_i, η_i) with η_ij = s_j when z_ij = 1 and t_j otherwise.
///
/// The multinomial coefficient is added only when `with_coefficient` is set;
/// it cancels in every sampler ratio.
pub fn log_dm_row(x: &[u32], z: &[u8], s: &[f64], t: &[f64], with_coefficient: bool) -> Result<f64> {
    let p = x.len();
    if p == 0 {
        return Err(MmfError::EmptyModel);
    }
    if z.len() != p || s.len() != p || t.len() != p {
        return Err(MmfError::ShapeMismatch("log_dm_row inputs differ in length".into()));
    }
    let eta: Vec<f64> = (0..p).map(|j| if z[j] == 1 { s[j] } else { t[j] }).collect();
    log_dm_eta(x, &eta, with_coefficient)
}

/// Dirichlet-multinomial log-pmf for explicit shapes.
pub fn log_dm_eta(x: &[u32], eta: &[f64], with_coefficient: bool) -> Result<f64> {
    if x.is_empty() {
        return Err(MmfError::EmptyModel);
    }
    let total: u64 = x.iter().map(|&v| v as u64).sum();
    let shape_sum: f64 = eta.iter().sum();
    let mut out = ln_gamma(shape_sum) - ln_gamma(total as f64 + shape_sum);
    for (&xj, &e) in x.iter().zip(eta) {
        if !(e > 0.0) {
            return Err(MmfError::NonFinite(format!("Dirichlet shape {e} is not positive")));
        }
        if xj > 0 {
            out += ln_gamma(xj as f64 + e) - ln_gamma(e);
        }
    }
    if with_coefficient {
        out += ln_gamma(total as f64 + 1.0) - x.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum::<f64>();
    }
    if !out.is_finite() {
        return Err(MmfError::NonFinite("log-gamma overflow in log_dm_row".into()));
    }
    Ok(out)
}

/// P(z_ij = 1 | A, B, W, c).
pub fn prob_z_one(state: &ModelState, i: usize, j: usize) -> f64 {
    sigmoid(state.logit(i, j))
}

/// Log joint density of the state and the data.
///
/// Dropped constants: the multinomial coefficients, the normaliser of the
/// truncation I(s > t), and log K! from the pIBP column count. Everything
/// that depends on a sampled quantity is kept, so differences between
/// states are exact.
pub fn log_joint(state: &ModelState, data: &CountMatrix, tree: &RankTree, hp: &Hyperparameters) -> Result<f64> {
    state.validate()?;
    let (n, p) = state.z.dim();
    if data.n_hosts() != n || data.n_taxa() != p || tree.n_leaves() != p {
        return Err(MmfError::ShapeMismatch("state, data and tree disagree".into()));
    }
    let mut total = 0.0;
    let mut eta = vec![0.0; p];
    for i in 0..n {
        for (j, e) in eta.iter_mut().enumerate() {
            *e = state.eta(i, j);
        }
        let row = data.row(i);
        let x: Vec<u32> = row.iter().copied().collect();
        total += log_dm_eta(&x, &eta, false)?;
    }
    total += log_z_given_logits(state);
    total += log_prior(state, tree, hp);
    if !total.is_finite() {
        return Err(MmfError::NonFinite("log joint".into()));
    }
    Ok(total)
}

/// Σ_ij log Bernoulli(z_ij; σ(logit_ij)).
pub fn log_z_given_logits(state: &ModelState) -> f64 {
    let q = state.logits();
    state.z.iter().zip(q.iter()).map(|(&z, &l)| log_bernoulli_logit(z == 1, l)).sum()
}

/// Prior terms of the log joint (everything except the count and Z factors).
pub fn log_prior(state: &ModelState, tree: &RankTree, hp: &Hyperparameters) -> f64 {
    let n = state.n_hosts() as f64;
    let k = state.k() as f64;
    let mut total = 0.0;
    // pIBP: Poisson(K; m H) with the K! dropped, then per-column p^{-1} P(b | p)
    let rate = total_column_rate(tree.node_count(), tree.depth());
    total += k * state.m.ln() - state.m * rate;
    for cl in &state.clusters {
        total += column_log_prior(tree, &cl.taxa, cl.prob) - cl.prob.ln();
        let active = cl.hosts.iter().filter(|&&a| a).count() as f64;
        total += active * state.rho.ln() + (n - active) * (1.0 - state.rho).ln();
        total += cl.weights.iter().map(|&w| ln_gamma_pdf(w, hp.alpha_w, hp.beta_w)).sum::<f64>();
    }
    for j in 0..state.n_taxa() {
        let d = state.c[j] - hp.mu_c;
        total += -0.5 * d * d / hp.sigma2_c - 0.5 * (2.0 * std::f64::consts::PI * hp.sigma2_c).ln();
        total += ln_gamma_pdf(state.s[j], hp.alpha_s, hp.beta_s) + ln_gamma_pdf(state.t[j], hp.alpha_t, hp.beta_t);
    }
    total += ln_gamma_pdf(state.m, hp.m_shape, hp.m_rate);
    total += (hp.alpha_rho - 1.0) * state.rho.ln() + (hp.beta_rho - 1.0) * (1.0 - state.rho).ln()
        - (ln_gamma(hp.alpha_rho) + ln_gamma(hp.beta_rho) - ln_gamma(hp.alpha_rho + hp.beta_rho));
    total
}
