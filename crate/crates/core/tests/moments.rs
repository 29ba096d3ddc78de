//! The negative-moment oracle against Monte Carlo and its small-time law.

use levy_bel::estimator::{fit_loglog, zv_negative_moment, EstimatorConfig};
use levy_bel::field::phi;
use levy_bel::levy_model::default_kappa;
use levy_bel::moments_oracle::{laplace_exponent, negative_moment, MomentQuery};
use levy_bel::rng::{tags, RngSpec};
use levy_bel::{FieldParams, LevyCoordinateModel, Truncation};
use rand::Rng;

#[test]
fn laplace_exponent_matches_sampling() {
    let model = LevyCoordinateModel::stable(1.0, 1.0, 0.5).unwrap();
    let field = FieldParams::new(0.5, 2.0).unwrap();
    let eps = 1e-3;
    let q = MomentQuery::new(model.clone(), field, 1.0, 1.0, Truncation::hard(eps).unwrap()).unwrap();
    let exact = laplace_exponent(&q, 1.0).unwrap();

    let mut rng = RngSpec::new(21, 0, tags::VALIDATION).rng();
    let n = 10_000_000u64;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n {
        let xi = model.sample_jump_size(eps, rng.random(), rng.random()).unwrap();
        let v = -(-phi(xi, field)).exp_m1();
        sum += v;
        sum2 += v * v;
    }
    let mass = model.tail_mass(eps).unwrap();
    let mean = sum / n as f64;
    let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean * mass - exact).abs() <= 3.0 * se * mass, "{} vs {exact}", mean * mass);
}

#[test]
fn oracle_matches_simulated_field_sums() {
    let cfg = EstimatorConfig::stable(1, 1.5, 0.25, 200_000).unwrap();
    let trunc = cfg.resolved_truncation().unwrap();
    let q = MomentQuery::new(cfg.models[0].clone(), cfg.field, 0.25, 2.0, trunc).unwrap();
    let oracle = negative_moment(&q).unwrap();
    let mc = zv_negative_moment(&cfg, 2.0, 0).unwrap();
    assert_eq!(mc.n_zero, 0);
    let z = (mc.estimate.mean - oracle) / mc.estimate.stderr;
    assert!(z.abs() <= 3.0, "oracle {oracle}, mc {:?}", mc.estimate);
}

#[test]
fn small_time_law_of_the_negative_moment() {
    let alpha = 1.5;
    let kappa = default_kappa(alpha);
    let qm = 2.0;
    let model = LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap();
    let field = FieldParams::new(0.5, kappa).unwrap();
    let trunc = Truncation::smooth(1e-9).unwrap();
    let ts: Vec<f64> = (4..=10).map(|k| 2f64.powi(-k)).collect();
    let vals: Vec<f64> =
        ts.iter().map(|&t| negative_moment(&MomentQuery::new(model.clone(), field, t, qm, trunc).unwrap()).unwrap()).collect();
    let fit = fit_loglog(&ts, &vals, &vec![0.0; ts.len()]);
    let rate = -kappa * qm / alpha;
    assert!(fit.slope >= rate - 0.2, "slope {} vs {rate}", fit.slope);
    // the constant in E J^{-q} ≤ C t^{-κq/ρ} is stable across the grid
    let c: Vec<f64> = ts.iter().zip(&vals).map(|(t, v)| v * t.powf(-rate)).collect();
    let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo <= 1.5, "constants {c:?}");
}
