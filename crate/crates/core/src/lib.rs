//! Distributionally robust chance-constrained DC optimal power flow.
//!
//! The crate turns affine chance constraints `P(a(x)ᵀξ ≤ b(x)) ≥ 1 − ε` into
//! second-order cone constraints under two ambiguity sets:
//!
//! * moment-only (mean and second moment of ξ),
//! * moment plus α-unimodality about a known mode.
//!
//! The unimodal set produces an infinite family of cones indexed by a scalar
//! `τ ≥ τ0`. It is handled either exactly, by a cutting-plane loop with a
//! closed-form separation oracle, or approximately, by finite relaxed and
//! conservative families whose parameters come from an optimal
//! piecewise-linear outer approximation of `v(τ)`.
//!
//! Modules, bottom-up:
//!
//! * [`stats`]: sample ingestion, moment and mode estimation, synthetic errors.
//! * [`pwl`]: `v(τ)`, piecewise-linear outer approximations and their search.
//! * [`drcc`]: chance constraint to cone cut translation for every method.
//! * [`opf`]: DC network model, PTDF, extraction of chance constraints.
//! * [`solve`]: conic program assembly, backend contract, solution methods.
//! * [`eval`]: out-of-sample reliability and cross-method metrics.
//! * [`experiment`]: the multi-seed benchmark pipeline used by the CLI.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drcc;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod opf;
pub mod pwl;
pub mod solve;
pub mod stats;

pub use drcc::{AffineChanceConstraint, ApproxVariant, SocCut};
pub use error::{Error, Result};
pub use eval::MetricsRow;
pub use opf::{NetworkCase, OpfDecision, PtdfMatrix};
pub use pwl::{Line, OpsConfig, OpsResult, PwlFunction, VFunction};
pub use solve::{ConicProgram, Method, SolveConfig, SolveReport, SolveStatus};
pub use stats::{SampleSet, UncertaintyModel};
