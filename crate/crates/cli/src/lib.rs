//! Library half of the `climb` binary: file formats and command
//! implementations, exposed so integration tests can drive the exact
//! serialization paths the binary uses.

// Validation uses negated comparisons (`!(x <= tol)`) deliberately so NaN
// fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod formats;
