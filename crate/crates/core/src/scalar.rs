//! Floating-point abstraction the numeric core is generic over.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type for all model math. Implemented for `f32` and `f64`;
/// the crate-level aliases and the CLI use `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant must be representable")
    }

    /// Lossy view as `f64`, used for diagnostics and error payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
