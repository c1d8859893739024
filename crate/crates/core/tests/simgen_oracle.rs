mod common;

use common::chi2_gof;
use mmf::model::log_dm_eta;
use mmf::simgen::{sample_dm_row, sample_multinomial, sample_negbin, simulate, tsmf_dichotomize, SimMode, SimScenario};
use mmf::CountMatrix;
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LEVEL: f64 = 1e-3;

#[test]
fn dm_generator_matches_pmf() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let eta = [1.7, 0.6];
    let total = 20u32;
    let samples: Vec<usize> = (0..50_000).map(|_| sample_dm_row(total, &eta, &mut rng)[0] as usize).collect();
    let pmf: Vec<f64> = (0..=total).map(|x| log_dm_eta(&[x, total - x], &eta, true).unwrap().exp()).collect();
    let pv = chi2_gof(&samples, &pmf);
    assert!(pv > LEVEL, "p-value {pv}");
}

#[test]
fn multinomial_generator_matches_binomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let w = [2.0, 1.0, 5.0];
    let samples: Vec<usize> = (0..50_000).map(|_| sample_multinomial(12, &w, &mut rng)[1] as usize).collect();
    // marginal of category 1 is Binomial(12, 1/8)
    let lf = |n: u32| (2..=n).map(|k| (k as f64).ln()).sum::<f64>();
    let pmf: Vec<f64> = (0..=12u32)
        .map(|x| (lf(12) - lf(x) - lf(12 - x) + x as f64 * 0.125f64.ln() + (12 - x) as f64 * 0.875f64.ln()).exp())
        .collect();
    let pv = chi2_gof(&samples, &pmf);
    assert!(pv > LEVEL, "p-value {pv}");
}

#[test]
fn negbin_has_mean_mu_and_variance_two_mu() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let draws = 400_000;
    for mu in [0.5, 3.0, 20.0] {
        let xs: Vec<f64> = (0..draws).map(|_| sample_negbin(mu, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        // NB(size mu, mean mu): var 2mu, fourth central moment gives the SE of var
        let se_mean = (2.0 * mu / draws as f64).sqrt();
        assert!((mean - mu).abs() < 4.0 * se_mean, "mu {mu}: mean {mean}");
        assert!((var / (2.0 * mu) - 1.0).abs() < 0.03, "mu {mu}: var {var}");
    }
}

#[test]
fn dichotomizer_reference_example() {
    // relative abundances 0.1..0.4 for taxon 0; type-7 first quartile 0.175
    let counts = array![[1u32, 9], [2, 8], [3, 7], [4, 6]];
    let z = tsmf_dichotomize(&CountMatrix::from_counts(counts).unwrap(), 1e-5, 0.25).unwrap();
    // taxon 1: 0.6..0.9, cutoff 0.675
    assert_eq!(z, array![[0u8, 1], [1, 1], [1, 1], [1, 0]]);
}

#[test]
fn simulated_shapes_and_totals() {
    let sc = SimScenario {
        n: 40,
        p: 10,
        k: 2,
        block_size: 15,
        w_true: vec![2.0, 3.0],
        tree_depth: 3,
        tree_arity: 3,
        n_range: (30, 60),
        ..Default::default()
    };
    for mode in [SimMode::WellSpecified, SimMode::NegBinMisspecified] {
        let sim = simulate(&SimScenario { mode, ..sc.clone() }, None, &mut ChaCha8Rng::seed_from_u64(34)).unwrap();
        assert_eq!(sim.data.counts().dim(), (40, 10));
        assert_eq!(sim.a.dim(), (40, 2));
        assert_eq!(sim.b.dim(), (10, 2));
        assert!(sim.b.columns().into_iter().all(|c| c.sum() > 0));
        assert!(sim.data.totals().iter().all(|&t| (30..=60).contains(&t)));
        assert_eq!(sim.z.is_some(), mode == SimMode::WellSpecified);
    }
}
