//! Simulation and minimum-contrast parameter estimation for modal
//! truncations of damped stochastic wave and plate equations.
//!
//! The per-mode system is `u' = v`, `v' = -b κ u - 2 a v + noise`, with
//! damping `a > 0`, stiffness `b > 0` and eigenvalues `κ_n` of the spatial
//! operator. Modes couple only through the noise covariance `Q`.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod covariance;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod model;
pub mod normality;
pub mod semigroup;
pub mod simulate;
pub mod verify;

pub use config::{ResolvedConfig, RunConfig};
pub use covariance::{
    asymptotic_variances, clt_trace, diagonal_asymptotic_variances, q_infinity_apply, trace_q_infinity,
    AsymptoticVariances, CltOperator, QInfinityTrace,
};
pub use error::{Error, Result};
pub use estimate::{estimate_all, estimate_hat, estimate_tilde, running_estimates, Estimate, EstimateSet, Undefined};
pub use harness::{run_monte_carlo, summarize, write_samples_csv, EstimatorSummary, McConfig, McReport, PerEstimator};
pub use model::{builtin_preset, reference_wave_model, trace_q, LambdaRule, ModePair, Model, PresetKind, Regime};
pub use normality::{normality_test, ShapiroWilk};
pub use semigroup::{expm_oracle, mode_propagator, r_matrices, v_inner, ModeMatrix2x2, RMatrices};
pub use simulate::{replication_seed, simulate_path, PathOutput, PathStatistics, Scheme, SimulationOptions};
pub use verify::{run_all as run_verification, CheckOutcome, ItoDecayOptions, VerifyReport};
