//! Monte Carlo gradient weights for SDEs driven by pure-jump Lévy noise.
//!
//! The crate estimates `∇_x E f(X^x(t))` for
//!
//! ```text
//! dX = b(X) dt + dZ,   X(0) = x,
//! ```
//!
//! where `Z` has `d` independent symmetric pure-jump Lévy coordinates, by a
//! Bismut–Elworthy–Li type formula `∇ E f(X(t)) = E[f(X(t)) Y(t, x)]`. The
//! weight `Y` is built from the variational flow of `X` and an integration
//! by parts on the small jumps of `Z`, so `f` need not be differentiable.
//!
//! ```
//! use levy_bel::estimator::{bel_gradient, EstimatorConfig};
//!
//! let mut cfg = EstimatorConfig::stable(1, 1.5, 0.25, 2_000).unwrap();
//! cfg.x0 = vec![0.3];
//! let g = bel_gradient(&cfg).unwrap();
//! // d/dx E sin(x + Z(t)) = E cos(x + Z(t))
//! assert!(g.mean[0].abs() < 1.0 + 5.0 * g.stderr[0]);
//! ```
//!
//! Module map:
//!
//! * [`levy_model`] and [`table`]: jump measures and assumption checks.
//! * [`field`]: the localizing field `V(s, ξ) = ψ_δ(s) φ_δ(ξ)`.
//! * [`jump_engine`]: truncated jump paths.
//! * [`flow`]: the solution, its Jacobian and the Malliavin quantities.
//! * [`weights`]: the gradient weights.
//! * [`estimator`]: Monte Carlo drivers and scaling studies.
//! * [`moments_oracle`]: quadrature for negative moments of the field functional.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod drift;
pub mod error;
pub mod estimator;
pub mod field;
pub mod flow;
pub mod jump_engine;
pub mod levy_model;
pub mod moments_oracle;
pub mod quadrature;
pub mod rng;
pub mod table;
pub mod truncation;
pub mod weights;

pub use drift::{Drift, LinearDrift, TanhDrift, ZeroDrift};
pub use error::{Error, Result};
pub use field::FieldParams;
pub use flow::{evolve, FlowState, OdeMethod, OdeOptions};
pub use jump_engine::{simulate_path, JumpEvent, JumpPath};
pub use levy_model::{check_assumptions, LevyCoordinateModel, LevyMeasure, MeasureParams, StableMeasure, TabulatedMeasure};
pub use moments_oracle::{negative_moment, MomentQuery};
pub use rng::RngSpec;
pub use table::MeasureTable;
pub use truncation::{Truncation, TruncationProfile, TruncationSpec};
pub use weights::{y_general, y_levy, WeightBundle, WeightFailure};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/field.md")]
    mod field {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/negative-moments.md")]
    mod negative_moments {}
}
