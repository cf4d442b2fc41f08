//! Generic scalar type underlying every matrix kernel.

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point scalar usable in all factorization and pipeline code.
///
/// Bundles the `ndarray` linear-algebra requirements with primitive
/// conversions so tolerances and literal constants can be written once.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum {
    /// Shorthand cast for literal constants.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
