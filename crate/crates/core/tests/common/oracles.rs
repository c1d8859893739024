//! Brute-force reference computations. None of these share code with the
//! library routines they check.

use mmf::{parse_newick, RankTree};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};

/// Random Newick tree with `leaves` leaves and depth at most `depth`. Shallow
/// leaves and unary nodes are allowed so that depth normalisation is
/// exercised too.
pub fn random_tree<R: Rng + ?Sized>(leaves: usize, depth: usize, rng: &mut R) -> RankTree {
    let names: Vec<String> = (0..leaves).map(|j| format!("x{j}")).collect();
    let text = format!("{};", build(&names, depth, rng));
    parse_newick(&text).expect("generated Newick parses")
}

fn build<R: Rng + ?Sized>(names: &[String], remaining: usize, rng: &mut R) -> String {
    if remaining == 1 {
        return format!("({})", names.join(","));
    }
    if names.len() == 1 && rng.random::<f64>() < 0.5 {
        return names[0].clone();
    }
    let groups = rng.random_range(1..=names.len().min(4));
    let mut buckets: Vec<Vec<String>> = vec![Vec::new(); groups];
    // one leaf per group first, the rest at random
    for (g, name) in names.iter().enumerate() {
        let b = if g < groups { g } else { rng.random_range(0..groups) };
        buckets[b].push(name.clone());
    }
    let parts: Vec<String> = buckets.iter().map(|b| build(b, remaining - 1, rng)).collect();
    format!("({})", parts.join(","))
}

/// Number of node-state configurations with non-zero probability: the
/// enumeration below visits exactly this many.
pub fn configuration_count(tree: &RankTree) -> f64 {
    fn count(tree: &RankTree, v: usize) -> f64 {
        tree.nodes()[v].children.iter().map(|&c| count(tree, c) + 1.0).product()
    }
    count(tree, tree.root())
}

/// Exact leaf distribution of one column: every assignment of states to
/// the nodes is enumerated (root fixed at 0, a node below a 1 is 1, any
/// other node flips with probability q). Entry `mask` holds
/// P(leaf j = bit j of mask).
pub fn column_distribution(tree: &RankTree, p_k: f64) -> Vec<f64> {
    let q = 1.0 - (1.0 - p_k).powf(1.0 / tree.depth() as f64);
    let nodes = tree.nodes();
    // preorder so that parents are assigned first
    let mut order = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(nodes[v].children.iter().rev());
    }
    let mut out = vec![0.0; 1 << tree.n_leaves()];
    let mut state = vec![false; nodes.len()];
    fn rec(pos: usize, prob: f64, order: &[usize], tree: &RankTree, q: f64, state: &mut [bool], out: &mut [f64]) {
        if pos == order.len() {
            let mut mask = 0usize;
            for j in 0..tree.n_leaves() {
                if state[tree.leaf_node(j)] {
                    mask |= 1 << j;
                }
            }
            out[mask] += prob;
            return;
        }
        let v = order[pos];
        match tree.nodes()[v].parent {
            None => {
                state[v] = false;
                rec(pos + 1, prob, order, tree, q, state, out);
            }
            Some(parent) if state[parent] => {
                state[v] = true;
                rec(pos + 1, prob, order, tree, q, state, out);
            }
            Some(_) => {
                state[v] = false;
                rec(pos + 1, prob * (1.0 - q), order, tree, q, state, out);
                state[v] = true;
                rec(pos + 1, prob * q, order, tree, q, state, out);
            }
        }
    }
    rec(0, 1.0, &order, tree, q, &mut state, &mut out);
    out
}

pub fn mask_to_column(mask: usize, p: usize) -> Vec<bool> {
    (0..p).map(|j| mask >> j & 1 == 1).collect()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Dirichlet-multinomial pmf by Monte Carlo: normalised independent gamma
/// weights, averaged multinomial pmf. Returns (estimate, standard error).
pub fn dm_monte_carlo<R: Rng + ?Sized>(x: &[u32], eta: &[f64], draws: usize, rng: &mut R) -> (f64, f64) {
    let total: u32 = x.iter().sum();
    let coef = ln_factorial(total) - x.iter().map(|&v| ln_factorial(v)).sum::<f64>();
    let gammas: Vec<Gamma<f64>> = eta.iter().map(|&e| Gamma::new(e, 1.0).unwrap()).collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut g = vec![0.0; x.len()];
    for _ in 0..draws {
        for (gj, d) in g.iter_mut().zip(&gammas) {
            *gj = d.sample(rng);
        }
        let sum: f64 = g.iter().sum();
        let mut lp = coef;
        for (&xj, &gj) in x.iter().zip(&g) {
            if xj > 0 {
                lp += xj as f64 * (gj / sum).ln();
            }
        }
        let v = lp.exp();
        s1 += v;
        s2 += v * v;
    }
    let n = draws as f64;
    let mean = s1 / n;
    (mean, ((s2 / n - mean * mean).max(0.0) / n).sqrt())
}

/// Every vector of `p` non-negative integers summing to `total`.
pub fn compositions(total: u32, p: usize) -> Vec<Vec<u32>> {
    if p == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, p - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(k - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// min over column permutations of the Hamming distance, by exhaustion.
pub fn brute_force_hamming(b1: &Array2<u8>, b2: &Array2<u8>) -> usize {
    let k = b1.ncols();
    permutations(k)
        .iter()
        .map(|perm| {
            (0..k)
                .map(|c| b1.column(c).iter().zip(b2.column(perm[c]).iter()).filter(|(a, b)| a != b).count())
                .sum::<usize>()
        })
        .min()
        .unwrap_or(0)
}

/// Index of the sample with the smallest total distance to all samples,
/// first occurrence on ties.
pub fn double_loop_mode(samples: &[Array2<u8>]) -> usize {
    let mut best = (usize::MAX, 0);
    for (s, cand) in samples.iter().enumerate() {
        let total: usize = samples.iter().map(|other| brute_force_hamming(other, cand)).sum();
        if total < best.0 {
            best = (total, s);
        }
    }
    best.1
}

pub fn random_binary<R: Rng + ?Sized>(rows: usize, cols: usize, density: f64, rng: &mut R) -> Array2<u8> {
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() < density) as u8)
}

/// Random trees small enough to enumerate every node configuration.
pub fn enumerable_cases(n: usize, seed: u64) -> Vec<(RankTree, f64)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let leaves = rng.random_range(1..=12);
        let depth = rng.random_range(1..=4);
        let tree = random_tree(leaves, depth, &mut rng);
        if configuration_count(&tree) > 2e5 {
            continue;
        }
        out.push((tree, rng.random_range(0.05..0.95)));
    }
    out
}
