//! Numerical geometry of the Ooguri-Vafa / Gibbons-Hawking metric family
//! modeling a collapsing elliptic fibration near a nodal fiber.
//!
//! The crate builds the periodic-monopole potential `V` with certified
//! truncation error, the monopole connection `A` with `dA = *dV`, assembles
//! the Gibbons-Hawking metric `V (du^2 + dy1^2 + dy2^2) + V^{-1} theta0^2`,
//! computes curvature numerically, and certifies the collapsing asymptotics
//! (curvature scaling law, bubble/neck/outer blow-up limits) plus the
//! Hermitian matrix gap bound used in the C^0 convergence argument.
//!
//! The crate is `no_std` (with `alloc`); all operations are pure functions
//! of their inputs and safe to evaluate in parallel.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod curvature;
pub mod gauge;
pub mod limits;
pub mod linalg;
pub mod math;
pub mod matrix;
pub mod metric;
pub mod potential;

pub use gauge::{eval_connection, GaugeForm, GaugeId};
pub use metric::{eval_tau, gh_metric, gh_rescaled_model, rescale, taub_nut, MetricField, C_STAR};
pub use potential::{
    eval_v, eval_v0, eval_v1, laplacian_residual, ChartPoint3, ChartPoint4, PotentialParams,
    PotentialValue,
};
