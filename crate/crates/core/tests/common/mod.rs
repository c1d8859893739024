#![allow(dead_code)]

pub mod geweke;
pub mod oracles;

use mmf::special::ln_gamma;

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        // series for P
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x + a * x.ln() - ln_gamma(a)).exp() * h
    }
}

pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    gamma_q(dof / 2.0, stat / 2.0)
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic distribution with the
/// usual small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Chi-square two-sample test on integer-valued samples. Values are pooled
/// into bins from the top down until each bin has combined count >= 10.
pub fn chi2_two_sample(a: &[usize], b: &[usize]) -> f64 {
    let max = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut ca = vec![0f64; max + 1];
    let mut cb = vec![0f64; max + 1];
    for &v in a {
        ca[v] += 1.0;
    }
    for &v in b {
        cb[v] += 1.0;
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0.0, 0.0);
    for v in 0..=max {
        acc_a += ca[v];
        acc_b += cb[v];
        if acc_a + acc_b >= 10.0 {
            bins.push((acc_a, acc_b));
            acc_a = 0.0;
            acc_b = 0.0;
        }
    }
    if acc_a + acc_b > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc_a;
                last.1 += acc_b;
            }
            None => bins.push((acc_a, acc_b)),
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let tot = x + y;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    chi2_sf(stat, (bins.len() - 1) as f64)
}

/// Chi-square goodness of fit of integer samples to a pmf over 0..pmf.len(),
/// with the tail mass beyond the table folded into the last bin and bins
/// pooled until the expected count reaches 10.
pub fn chi2_gof(samples: &[usize], pmf: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let last = pmf.len() - 1;
    let mut obs = vec![0f64; pmf.len()];
    for &v in samples {
        obs[v.min(last)] += 1.0;
    }
    let mut expected: Vec<f64> = pmf.iter().map(|p| p * n).collect();
    expected[last] = n - expected[..last].iter().sum::<f64>();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for v in 0..pmf.len() {
        o += obs[v];
        e += expected[v];
        if e >= 10.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(l) = bins.last_mut() {
        l.0 += o;
        l.1 += e;
    }
    let stat: f64 = bins.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    chi2_sf(stat, (bins.len() - 1) as f64)
}
