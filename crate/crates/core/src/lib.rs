//! Cross-lingual interaction-aware scaling laws.
//!
//! Given logs from multilingual training runs, this crate fits per-language
//! scaling laws together with budget-dependent cross-lingual transfer
//! strengths, predicts per-language validation loss for any mixture and token
//! budget, and computes the mixture that minimizes importance-weighted loss
//! via a two-stage (direction, then magnitude) optimization. A synthetic-world
//! module generates ground-truth models and simulated run logs so the whole
//! pipeline can be validated end to end.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! type parameters default to `f64`, and the aliases below pin the
//! double-precision instantiations used by the CLI.

// Numeric kernels index several arrays in lockstep, where a shared index is
// clearer than nested iterator adapters, and validation uses negated
// comparisons (`!(x > 0)`) deliberately so NaN fails closed.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod fit;
pub mod model;
pub mod scalar;
pub mod scaling;
pub mod synth;

pub use model::{
    make_proportion, AllocationResult, ClimbModel, ExperimentRecord, ImportanceWeights,
    LanguageSet, ModelError, MonoScalingParams, ProportionVector, TransferParams,
};
pub use scalar::Scalar;

/// Double-precision model.
pub type Model64 = ClimbModel<f64>;
/// Double-precision mixture.
pub type Proportions64 = ProportionVector<f64>;
/// Double-precision allocation output.
pub type Allocation64 = AllocationResult<f64>;
