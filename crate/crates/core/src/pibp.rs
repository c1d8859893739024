//! Phylogenetic Indian buffet process column prior.
//!
//! A column is generated by an absorbing 0 -> 1 Markov process run from the
//! root (state 0) down every edge. Each edge flips independently with
//! probability `1 - (1 - p_k)^(1/L)`, so every leaf is active with marginal
//! probability `p_k`. All probabilities below are exact and computed by one
//! upward sum-product pass in log space.

use rand::Rng;

use crate::special::{digamma, log_add_exp};
use crate::tree::RankTree;

/// Per-edge flip probability `1 - (1 - p_k)^(1/L)`.
pub fn edge_flip_prob(p_k: f64, depth: usize) -> f64 {
    debug_assert!((0.0..1.0).contains(&p_k) && depth >= 1);
    -((-p_k).ln_1p() / depth as f64).exp_m1()
}

/// Column probability together with its derived per-edge quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnPrior {
    pub p_k: f64,
    pub q_edge: f64,
    ln_q: f64,
    ln_stay: f64,
}

impl ColumnPrior {
    pub fn new(p_k: f64, depth: usize) -> Self {
        let ln_stay = (-p_k).ln_1p() / depth as f64;
        let q_edge = -ln_stay.exp_m1();
        ColumnPrior { p_k, q_edge, ln_q: q_edge.ln(), ln_stay }
    }
}

/// log P(observed leaves | p_k) where `observed(j)` is `None` for leaves that
/// are marginalised out.
///
/// For each node v the message pair is `log P(leaves below v | v = 0)` and a
/// flag for `P(leaves below v | v = 1)`, which is 1 when every observed leaf
/// below v is active and 0 otherwise (state 1 is absorbing).
pub fn log_prob_observed<F>(tree: &RankTree, prior: &ColumnPrior, observed: F) -> f64
where
    F: Fn(usize) -> Option<bool>,
{
    let n = tree.node_count();
    let mut log_zero = vec![0.0f64; n];
    let mut all_on = vec![true; n];
    let nodes = tree.nodes();
    for &v in tree.postorder() {
        if let Some(j) = tree.taxon_of(v) {
            match observed(j) {
                Some(true) => {
                    log_zero[v] = f64::NEG_INFINITY;
                    all_on[v] = true;
                }
                Some(false) => {
                    log_zero[v] = 0.0;
                    all_on[v] = false;
                }
                None => {
                    log_zero[v] = 0.0;
                    all_on[v] = true;
                }
            }
            continue;
        }
        let mut acc = 0.0;
        let mut on = true;
        for &c in &nodes[v].children {
            let stay = prior.ln_stay + log_zero[c];
            let flip = if all_on[c] { prior.ln_q } else { f64::NEG_INFINITY };
            acc += log_add_exp(stay, flip);
            on &= all_on[c];
        }
        log_zero[v] = acc;
        all_on[v] = on;
    }
    log_zero[tree.root()]
}

/// log P(leaves = b_col | p_k).
pub fn column_log_prior(tree: &RankTree, b_col: &[bool], p_k: f64) -> f64 {
    debug_assert_eq!(b_col.len(), tree.n_leaves());
    let prior = ColumnPrior::new(p_k, tree.depth());
    log_prob_observed(tree, &prior, |j| Some(b_col[j]))
}

/// Log joint probabilities of (b_j = 0, rest) and (b_j = 1, rest).
pub fn leaf_log_joint(tree: &RankTree, b_col: &[bool], j: usize, prior: &ColumnPrior) -> (f64, f64) {
    let off = log_prob_observed(tree, prior, |l| Some(if l == j { false } else { b_col[l] }));
    let on = log_prob_observed(tree, prior, |l| Some(if l == j { true } else { b_col[l] }));
    (off, on)
}

/// P(b_j = 1 | all other leaves, p_k). Entry `j` of `b_minus_j` is ignored.
pub fn leaf_conditional(tree: &RankTree, b_minus_j: &[bool], j: usize, p_k: f64) -> f64 {
    let prior = ColumnPrior::new(p_k, tree.depth());
    let (off, on) = leaf_log_joint(tree, b_minus_j, j, &prior);
    (on - log_add_exp(off, on)).exp()
}

/// log P(b_{-j} | p_k, b_j), as the full column probability divided by the
/// leaf marginal (`p_k` or `1 - p_k`).
pub fn partial_column_log_prob(tree: &RankTree, b_minus_j: &[bool], j: usize, b_j: bool, p_k: f64) -> f64 {
    let prior = ColumnPrior::new(p_k, tree.depth());
    let full = log_prob_observed(tree, &prior, |l| Some(if l == j { b_j } else { b_minus_j[l] }));
    let marginal = if b_j { p_k.ln() } else { (-p_k).ln_1p() };
    full - marginal
}

/// Same quantity as [`partial_column_log_prob`], accumulated by the chain rule:
/// the other leaves are revealed one at a time in taxon order and each
/// univariate conditional is a ratio of two sum-product passes.
pub fn partial_column_log_prob_chain(tree: &RankTree, b_minus_j: &[bool], j: usize, b_j: bool, p_k: f64) -> f64 {
    let prior = ColumnPrior::new(p_k, tree.depth());
    let mut revealed = vec![false; tree.n_leaves()];
    revealed[j] = true;
    let value = |l: usize| if l == j { b_j } else { b_minus_j[l] };
    let mut prev = log_prob_observed(tree, &prior, |l| if l == j { Some(b_j) } else { None });
    let mut total = 0.0;
    for l in 0..tree.n_leaves() {
        if l == j {
            continue;
        }
        revealed[l] = true;
        let next = log_prob_observed(tree, &prior, |x| if revealed[x] { Some(value(x)) } else { None });
        total += next - prev;
        prev = next;
    }
    total
}

/// Draws one column: leaf states in taxon order.
pub fn sample_column<R: Rng + ?Sized>(tree: &RankTree, p_k: f64, rng: &mut R) -> Vec<bool> {
    let q = edge_flip_prob(p_k, tree.depth());
    let nodes = tree.nodes();
    let mut state = vec![false; tree.node_count()];
    let mut out = vec![false; tree.n_leaves()];
    for &v in tree.postorder().iter().rev() {
        if let Some(parent) = nodes[v].parent {
            state[v] = state[parent] || rng.random::<f64>() < q;
        }
        if let Some(j) = tree.taxon_of(v) {
            out[j] = state[v];
        }
    }
    out
}

/// Draws a column conditioned on having at least one active leaf.
///
/// Edge flips are treated as independent Bernoulli(q) variables (flips below
/// an active node are irrelevant), and the column is non-empty exactly when
/// some edge flips. The first flipped edge in preorder is drawn from the
/// truncated geometric law; later edges are free.
pub fn sample_nonempty_column<R: Rng + ?Sized>(tree: &RankTree, p_k: f64, rng: &mut R) -> Vec<bool> {
    let q = edge_flip_prob(p_k, tree.depth());
    let edges = tree.edge_count() as f64;
    let ln_stay = (-q).ln_1p();
    // P(some flip among all edges) = 1 - (1-q)^E
    let any_flip = -(edges * ln_stay).exp_m1();
    let u: f64 = rng.random();
    let mut first = ((-u * any_flip).ln_1p() / ln_stay).floor() as usize;
    if first >= tree.edge_count() {
        first = tree.edge_count() - 1;
    }
    let nodes = tree.nodes();
    let mut state = vec![false; tree.node_count()];
    let mut out = vec![false; tree.n_leaves()];
    let mut edge = 0usize;
    for &v in tree.postorder().iter().rev() {
        if let Some(parent) = nodes[v].parent {
            let flip = match edge.cmp(&first) {
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => true,
                std::cmp::Ordering::Greater => rng.random::<f64>() < q,
            };
            state[v] = state[parent] || flip;
            edge += 1;
        }
        if let Some(j) = tree.taxon_of(v) {
            out[j] = state[v];
        }
    }
    out
}

/// Unnormalised log density of p_k for a column that was just opened at a
/// single leaf: `log{1-(1-p)^(1/L)} + ((P-2)/L) log(1-p) - log p`.
pub fn new_pk_log_density(p_k: f64, n_nodes: usize, depth: usize) -> f64 {
    singleton_pk_log_density(p_k, n_nodes, depth, 1)
}

/// Generalisation of [`new_pk_log_density`] to a leaf with `private` edges
/// above it (unary chains created by depth normalisation).
pub fn singleton_pk_log_density(p_k: f64, n_nodes: usize, depth: usize, private: usize) -> f64 {
    if !(p_k > 0.0 && p_k < 1.0) {
        return f64::NEG_INFINITY;
    }
    let l = depth as f64;
    let ln_u = (-p_k).ln_1p();
    let open = (-(ln_u * private as f64 / l).exp_m1()).ln();
    open + ((n_nodes - 1 - private) as f64 / l) * ln_u - p_k.ln()
}

/// Poisson rate for new columns opened at one leaf:
/// `m {ψ((P-1)/L + 1) - ψ((P-2)/L + 1)}`.
pub fn new_column_rate(m: f64, n_nodes: usize, depth: usize) -> f64 {
    singleton_column_rate(m, n_nodes, depth, 1)
}

pub fn singleton_column_rate(m: f64, n_nodes: usize, depth: usize, private: usize) -> f64 {
    let l = depth as f64;
    let top = (n_nodes - 1) as f64 / l + 1.0;
    let low = (n_nodes - 1 - private) as f64 / l + 1.0;
    m * (digamma(top) - digamma(low))
}

/// Expected number of non-empty columns per unit mass:
/// `ψ((P-1)/L + 1) - ψ(1)`. The column count is Poisson(m times this).
pub fn total_column_rate(n_nodes: usize, depth: usize) -> f64 {
    digamma((n_nodes - 1) as f64 / depth as f64 + 1.0) - digamma(1.0)
}

/// Exact draw from the singleton p_k density by rejection from a
/// Beta(1, (P-1)/L) envelope.
pub fn sample_singleton_pk<R: Rng + ?Sized>(n_nodes: usize, depth: usize, private: usize, rng: &mut R) -> f64 {
    let l = depth as f64;
    let b = (n_nodes - 1) as f64 / l;
    let a = private as f64 / l;
    loop {
        let v: f64 = rng.random();
        // 1 - U^(1/b) ~ Beta(1, b); u = 1 - p
        let ln_u = v.ln() / b;
        let p = -ln_u.exp_m1();
        if !(p > 0.0 && p < 1.0) {
            continue;
        }
        let ratio = if (a - 1.0).abs() < 1e-15 {
            1.0
        } else {
            // L (1 - u^a) u^(1-a) / (e (1 - u))
            (-(a * ln_u).exp_m1()) * ((1.0 - a) * ln_u).exp() / (a * p)
        };
        if rng.random::<f64>() < ratio {
            return p;
        }
    }
}

/// Exact draw of p_k for a non-empty column under the prior,
/// density proportional to `{1 - (1-p)^((P-1)/L)} / p`.
pub fn sample_nonempty_pk<R: Rng + ?Sized>(n_nodes: usize, depth: usize, rng: &mut R) -> f64 {
    let a = (n_nodes - 1) as f64 / depth as f64;
    loop {
        let p: f64 = rng.random();
        if p <= 0.0 {
            continue;
        }
        let ratio = -(a * (-p).ln_1p()).exp_m1() / (a * p);
        if rng.random::<f64>() < ratio {
            return p;
        }
    }
}

/// Σ_k column_log_prior(B[:, k], p_k).
pub fn matrix_tree_log_prob(columns: &[Vec<bool>], tree: &RankTree, p_cols: &[f64]) -> f64 {
    columns.iter().zip(p_cols).map(|(b, &p)| column_log_prior(tree, b, p)).sum()
}
