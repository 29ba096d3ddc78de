//! Distributional checks of the simulated jump paths.

use levy_bel::jump_engine::{increment, simulate_path};
use levy_bel::quadrature::integrate;
use levy_bel::rng::{tags, RngSpec};
use levy_bel::{LevyCoordinateModel, Truncation};

#[test]
fn jump_sizes_follow_the_truncated_pareto_law() {
    let (alpha, eps) = (1.3, 0.01);
    let models = [LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap()];
    let trunc = Truncation::hard(eps).unwrap();
    let mut sizes = Vec::with_capacity(1_000_000);
    let mut i = 0;
    while sizes.len() < 1_000_000 {
        let path = simulate_path(&models, 1.0, &trunc, RngSpec::new(11, i, tags::JUMPS)).unwrap();
        sizes.extend(path.events.iter().map(|e| e.size.abs()));
        i += 1;
    }
    sizes.truncate(1_000_000);
    sizes.sort_by(f64::total_cmp);
    let n = sizes.len() as f64;
    let ks = sizes
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let cdf = 1.0 - (r / eps).powf(-alpha);
            (cdf - k as f64 / n).abs().max((cdf - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks <= 0.002, "KS statistic {ks}");
}

#[test]
fn event_counts_are_poisson() {
    // tail mass 2·0.1^{-1}/1 = 20
    let models = [LevyCoordinateModel::stable(1.0, 1.0, 0.5).unwrap()];
    let trunc = Truncation::hard(0.1).unwrap();
    let n_paths = 100_000u64;
    let mut counts = vec![0u64; 64];
    let mut total = 0u64;
    for i in 0..n_paths {
        let c = simulate_path(&models, 1.0, &trunc, RngSpec::new(12, i, tags::JUMPS)).unwrap().events.len();
        total += c as u64;
        counts[c.min(63)] += 1;
    }
    let mean = total as f64 / n_paths as f64;
    assert!((mean - 20.0).abs() <= 3.0 * (20.0 / n_paths as f64).sqrt(), "mean count {mean}");

    let pmf = |k: usize| (-20.0 + k as f64 * 20f64.ln() - libm::lgamma(k as f64 + 1.0)).exp();
    // bins: ≤ 10, 11..=29 singly, ≥ 30
    let mut observed = vec![counts[..=10].iter().sum::<u64>()];
    let mut expected = vec![(0..=10).map(pmf).sum::<f64>()];
    observed.extend_from_slice(&counts[11..30]);
    expected.extend((11..30).map(pmf));
    observed.push(counts[30..].iter().sum());
    expected.push(1.0 - expected.iter().sum::<f64>());
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &p)| {
            let e = p * n_paths as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    // 21 bins, 20 degrees of freedom; the 0.999 quantile is 45.31
    assert!(chi2 < 45.31, "chi-square {chi2}");
}

#[test]
fn increments_match_the_characteristic_function() {
    let (alpha, t, level) = (1.5, 0.5, 0.05);
    let models = [LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap()];
    let trunc = Truncation::smooth(level).unwrap();
    let n_paths = 200_000u64;
    let zs: Vec<f64> = (0..n_paths)
        .map(|i| {
            let path = simulate_path(&models, t, &trunc, RngSpec::new(13, i, tags::JUMPS)).unwrap();
            increment(&path, t, 0)
        })
        .collect();
    for u in [0.5, 1.0, 2.0] {
        // −ln E cos(uZ(t)) = t ∫ (1 − cos uξ) χ(ξ) m(dξ); the part beyond 10^3 is
        // bounded by its mass
        let upper = 1e3;
        let f = |r: f64| 2.0 * (1.0 - (u * r).cos()) * trunc.acceptance(r) * r.powf(-1.0 - alpha);
        let body = integrate(f, level, 2.0 * level, 0.0, 1e-12).unwrap().value
            + integrate(f, 2.0 * level, upper, 0.0, 1e-12).unwrap().value;
        let tail = 2.0 * upper.powf(-alpha) / alpha;
        let exact = (-t * (body + tail)).exp();
        let cos: Vec<f64> = zs.iter().map(|z| (u * z).cos()).collect();
        let mean = cos.iter().sum::<f64>() / n_paths as f64;
        let var = cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
        let se = (var / n_paths as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se + 2.0 * t * tail, "u = {u}: {mean} vs {exact} ± {se}");
    }
}
