//! Taxon-by-taxon update of B and the column probabilities, including
//! opening and closing of columns.
//!
//! For each taxon j:
//! 1. every column shared with another taxon is Gibbs-updated at entry j
//!    with the pIBP conditional from sum-product; a column left empty is
//!    removed together with its host column, weights and p_k;
//! 2. every p_k gets one Metropolis-Hastings step on P(b_k | p_k) / p_k,
//!    pivoting on the first active taxon of the column;
//! 3. the columns active at taxon j only are replaced by a Poisson number of
//!    fresh columns drawn from the prior, accepted as a block by the
//!    likelihood ratio of the z_{.j} terms. New columns go to random slots.
//!
//! Under `ColumnMoves::AddOnly` step 1 also scans the singleton columns and
//! step 3 keeps them, so fresh columns are only added.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::config::ColumnMoves;
use super::kernels::{accept, bernoulli_logit, gamma_draw, Sampler};
use crate::model::{Cluster, ModelState};
use crate::pibp::{leaf_log_joint, partial_column_log_prob, sample_singleton_pk, ColumnPrior};
use crate::special::log_bernoulli_logit;
use crate::tree::RankTree;

/// Log odds of b_jk = 1 against b_jk = 0 under its full conditional.
/// `col_logits[i]` is the current logit of z_ij.
pub fn b_log_odds(state: &ModelState, tree: &RankTree, j: usize, k: usize, col_logits: &[f64], use_likelihood: bool) -> f64 {
    let cl = &state.clusters[k];
    let prior = ColumnPrior::new(cl.prob, tree.depth());
    let (off, on) = leaf_log_joint(tree, &cl.taxa, j, &prior);
    let mut odds = on - off;
    if use_likelihood {
        let w = cl.weights[j];
        for i in (0..state.n_hosts()).filter(|&i| cl.hosts[i]) {
            let base = col_logits[i] - if cl.taxa[j] { w } else { 0.0 };
            let z = state.z[[i, j]] == 1;
            odds += log_bernoulli_logit(z, base + w) - log_bernoulli_logit(z, base);
        }
    }
    odds
}

fn pk_proposal_var(p: f64, c: f64, delta: f64) -> f64 {
    c * p * (1.0 - p) + delta
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn is_singleton_at(cl: &Cluster, j: usize) -> bool {
    cl.taxa[j] && cl.taxa.iter().enumerate().all(|(l, &b)| l == j || !b)
}

impl Sampler<'_> {
    pub fn update_b_sweep(&mut self) {
        for j in 0..self.state.n_taxa() {
            let mut col_logits: Vec<f64> = (0..self.state.n_hosts()).map(|i| self.state.logit(i, j)).collect();
            self.step_update_entries(j, &mut col_logits);
            self.step_update_probs();
            self.step_new_columns(j, &mut col_logits);
        }
    }

    /// Step i for taxon j. Under `Replace`, columns active at j only belong
    /// to step iii.
    fn step_update_entries(&mut self, j: usize, col_logits: &mut [f64]) {
        let skip_singletons = self.config.column_moves == ColumnMoves::Replace;
        let mut k = 0;
        while k < self.state.k() {
            if skip_singletons && is_singleton_at(&self.state.clusters[k], j) {
                k += 1;
                continue;
            }
            let odds = b_log_odds(&self.state, self.tree, j, k, col_logits, self.config.use_likelihood);
            let on = bernoulli_logit(odds, &mut self.rng);
            let cl = &mut self.state.clusters[k];
            if on != cl.taxa[j] {
                let delta = if on { cl.weights[j] } else { -cl.weights[j] };
                for (i, l) in col_logits.iter_mut().enumerate() {
                    if cl.hosts[i] {
                        *l += delta;
                    }
                }
                cl.taxa[j] = on;
            }
            if cl.is_empty() {
                self.state.clusters.remove(k);
                self.diagnostics.columns_deleted += 1;
            } else {
                k += 1;
            }
        }
    }

    /// Step ii: one M-H move per column on p_k.
    fn step_update_probs(&mut self) {
        let (c, delta) = (self.config.pk_c, self.config.pk_delta);
        for k in 0..self.state.k() {
            let cl = &self.state.clusters[k];
            let pivot = cl.taxa.iter().position(|&b| b).expect("non-empty column");
            let p = cl.prob;
            let var = pk_proposal_var(p, c, delta);
            let proposal = p + var.sqrt() * super::kernels::normal(&mut self.rng);
            if !(proposal > 0.0 && proposal < 1.0) {
                self.diagnostics.pk.record(false);
                continue;
            }
            let var_back = pk_proposal_var(proposal, c, delta);
            let log_ratio = partial_column_log_prob(self.tree, &cl.taxa, pivot, true, proposal)
                - partial_column_log_prob(self.tree, &cl.taxa, pivot, true, p)
                + ln_normal(p, proposal, var_back)
                - ln_normal(proposal, p, var);
            let accepted = accept(log_ratio, &mut self.rng);
            self.diagnostics.pk.record(accepted);
            if accepted {
                self.state.clusters[k].prob = proposal;
            }
        }
    }

    /// Step iii: replace the columns that are active at taxon j only.
    fn step_new_columns(&mut self, j: usize, col_logits: &mut [f64]) {
        let n = self.state.n_hosts();
        let p = self.state.n_taxa();
        let rate = self.state.m * self.consts.birth_rate[j];
        let count = if rate > 0.0 {
            Poisson::new(rate).map(|d| d.sample(&mut self.rng) as usize).unwrap_or(0)
        } else {
            0
        };
        let current: Vec<usize> = match self.config.column_moves {
            ColumnMoves::Replace => (0..self.state.k()).filter(|&k| is_singleton_at(&self.state.clusters[k], j)).collect(),
            ColumnMoves::AddOnly => Vec::new(),
        };
        if count == 0 && current.is_empty() {
            return;
        }
        let hp = self.hp;
        let rho = self.state.rho;
        let proposed: Vec<Cluster> = (0..count)
            .map(|_| {
                let hosts = (0..n).map(|_| self.rng.random::<f64>() < rho).collect();
                let weights = (0..p).map(|_| gamma_draw(hp.alpha_w, hp.beta_w, &mut self.rng)).collect();
                let mut taxa = vec![false; p];
                taxa[j] = true;
                Cluster { hosts, taxa, weights, prob: 0.5 }
            })
            .collect();
        let mut new_logits = col_logits.to_vec();
        for &k in &current {
            let cl = &self.state.clusters[k];
            for (i, l) in new_logits.iter_mut().enumerate() {
                if cl.hosts[i] {
                    *l -= cl.weights[j];
                }
            }
        }
        for cl in &proposed {
            for (i, l) in new_logits.iter_mut().enumerate() {
                if cl.hosts[i] {
                    *l += cl.weights[j];
                }
            }
        }
        let log_ratio = if self.config.use_likelihood {
            (0..n)
                .map(|i| {
                    let z = self.state.z[[i, j]] == 1;
                    log_bernoulli_logit(z, new_logits[i]) - log_bernoulli_logit(z, col_logits[i])
                })
                .sum()
        } else {
            0.0
        };
        let accepted = accept(log_ratio, &mut self.rng);
        self.diagnostics.new_columns.record(accepted);
        if !accepted {
            return;
        }
        for &k in current.iter().rev() {
            self.state.clusters.remove(k);
            self.diagnostics.columns_deleted += 1;
        }
        let (nodes, depth, private) = (self.consts.n_nodes, self.consts.depth, self.consts.private_edges[j]);
        for mut cl in proposed {
            cl.prob = sample_singleton_pk(nodes, depth, private, &mut self.rng);
            // A uniform slot keeps the column order exchangeable, which the
            // sequential scan in step i relies on.
            let slot = self.rng.random_range(0..=self.state.clusters.len());
            self.state.clusters.insert(slot, cl);
            self.diagnostics.columns_born += 1;
        }
        col_logits.copy_from_slice(&new_logits);
    }
}
