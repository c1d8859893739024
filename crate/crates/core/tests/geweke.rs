//! Joint-distribution checks for the sampler: successive-conditional
//! (Geweke) simulation against independent prior draws, prior invariance
//! of the B sweep with the likelihood switched off, and exact checks of
//! the conjugate updates.

mod common;

use common::geweke::{
    conjugate_pvalues, geometric_pmf, names, prior_draws, prior_only_b_chain, star_tree_pvalues, successive_conditional, toy_hp,
};
use common::{chi2_gof, chi2_two_sample, ks_two_sample};
use mmf::{parse_newick, Hyperparameters, RankTree};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LEVEL: f64 = 0.01;

fn report(label: &str, pv: f64) -> bool {
    println!("{label}: p = {pv:.4}");
    pv > LEVEL
}

#[test]
fn geweke_star_tree() {
    let ok: Vec<bool> = star_tree_pvalues(8, 6, 100_000, 11).into_iter().map(|(l, pv)| report(l, pv)).collect();
    assert!(ok.iter().all(|&b| b), "successive-conditional marginals differ from the prior");
}

#[test]
fn geweke_ragged_tree() {
    // unary padding above t3 and t6 gives leaves with two private edges
    let tree = parse_newick("(((t1,t2),(t3)),((t4,t5),(t6)));").unwrap();
    let hp = toy_hp();
    let mcmc = successive_conditional(6, &tree, &hp, 60_000, 25, 21);
    let prior = prior_draws(6, &tree, &hp, mcmc.k.len(), 22);
    let ok = [
        report("rho", ks_two_sample(&mcmc.rho, &prior.rho)),
        report("m", ks_two_sample(&mcmc.m, &prior.m)),
        report("K", chi2_two_sample(&mcmc.k, &prior.k)),
        report("ones in B", chi2_two_sample(&mcmc.ones, &prior.ones)),
    ];
    assert!(ok.iter().all(|&b| b), "successive-conditional marginals differ from the prior");
}

fn check_prior_invariance(tree: &RankTree, seed: u64) {
    let (ks, ones_v, probs) = prior_only_b_chain(tree, 100_000, 20, seed);
    let h = mmf::pibp::total_column_rate(tree.node_count(), tree.depth());
    let prior = prior_draws(3, tree, &Hyperparameters::default(), ks.len(), seed + 1);
    let prior_probs: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        (0..probs.len()).map(|_| mmf::pibp::sample_nonempty_pk(tree.node_count(), tree.depth(), &mut rng)).collect()
    };
    let ok = [
        report("K vs geometric", chi2_gof(&ks, &geometric_pmf(h, 40))),
        report("ones in B", chi2_two_sample(&ones_v, &prior.ones)),
        report("p_k", ks_two_sample(&probs, &prior_probs)),
    ];
    assert!(ok.iter().all(|&b| b));
}

#[test]
fn b_sweep_keeps_prior_on_star_tree() {
    check_prior_invariance(&RankTree::star(&names(6)).unwrap(), 31);
}

#[test]
fn b_sweep_keeps_prior_on_balanced_tree() {
    check_prior_invariance(&RankTree::balanced(6, 2, 3).unwrap(), 41);
}

#[test]
fn b_sweep_keeps_prior_on_pruned_tree() {
    // pruning a ternary tree of depth 3 to 5 leaves leaves a unary chain
    check_prior_invariance(&RankTree::balanced(5, 3, 2).unwrap(), 51);
}

#[test]
fn conjugate_rho_and_m_draws() {
    let (rho_p, m_p) = conjugate_pvalues(61);
    assert!(report("rho | A", rho_p));
    assert!(report("m | K", m_p));
}
