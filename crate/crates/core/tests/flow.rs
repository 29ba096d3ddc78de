//! Path-level properties of the flow with the shipped nonlinear drift.

use levy_bel::drift::Drift;
use levy_bel::jump_engine::perturb_path;
use levy_bel::levy_model::default_kappa;
use levy_bel::rng::{tags, RngSpec};
use levy_bel::{evolve, simulate_path, FieldParams, LevyCoordinateModel, OdeOptions, TanhDrift, Truncation};
use nalgebra::DMatrix;

fn setup(alpha: f64) -> (Vec<LevyCoordinateModel>, FieldParams, TanhDrift) {
    let models = vec![LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap(); 2];
    let field = FieldParams::new(0.5, default_kappa(alpha)).unwrap();
    (models, field, TanhDrift::shipped(2))
}

#[test]
fn jacobian_stays_within_the_gronwall_bound() {
    let (models, field, drift) = setup(1.5);
    let lipschitz = drift.matrix().iter().map(|v| v * v).sum::<f64>().sqrt();
    let trunc = Truncation::smooth(0.01).unwrap();
    let mut worst = Vec::new();
    for k in 1..=6 {
        let t = 2f64.powi(-k);
        let mut ratio: f64 = 0.0;
        for i in 0..200 {
            let path = simulate_path(&models, t, &trunc, RngSpec::new(31, i, tags::JUMPS)).unwrap();
            let st = evolve(&drift, &[0.3, -0.2], &path, &[t], field, &models, &OdeOptions::default()).unwrap().remove(0);
            let dev = (&st.jac - DMatrix::identity(2, 2)).norm();
            assert!(dev <= (lipschitz * t).exp_m1() * (1.0 + 1e-9));
            ratio = ratio.max(dev / t);
        }
        worst.push(ratio);
    }
    // ‖J(t) − I‖ ≤ C t with one constant over the grid
    let (lo, hi) = worst.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo <= 2.0, "{worst:?}");
}

#[test]
fn chain_rule_matches_the_perturbed_path() {
    let (models, field, drift) = setup(1.2);
    let trunc = Truncation::smooth(0.01).unwrap();
    let t = 0.25;
    let g = |x: &[f64]| (x[0] + 2.0 * x[1]).sin();
    let grad = |x: &[f64]| [(x[0] + 2.0 * x[1]).cos(), 2.0 * (x[0] + 2.0 * x[1]).cos()];
    let eps = 1e-3;
    for i in 0..100 {
        let path = simulate_path(&models, t, &trunc, RngSpec::new(32, i, tags::JUMPS)).unwrap();
        let base = evolve(&drift, &[0.3, -0.2], &path, &[t], field, &models, &OdeOptions::default()).unwrap().remove(0);
        for k in 0..2 {
            let moved = perturb_path(&path, k, eps, field);
            let x_eps = levy_bel::flow::evolve_state(&drift, &[0.3, -0.2], &moved, &[t], &OdeOptions::default()).unwrap();
            let quotient = (g(x_eps[0].as_slice()) - g(base.x.as_slice())) / eps;
            let gr = grad(base.x.as_slice());
            let chain: f64 = (0..2).map(|j| gr[j] * base.malliavin[(j, k)]).sum();
            let scale = base.malliavin.column(k).norm();
            assert!(
                (quotient - chain).abs() <= 10.0 * eps * (scale + scale * scale).max(1e-12),
                "path {i}, k {k}: {quotient} vs {chain}"
            );
        }
    }
    assert_eq!(drift.dim(), 2);
}
