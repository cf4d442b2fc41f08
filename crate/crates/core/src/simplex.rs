//! Euclidean projection onto the standard probability simplex.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point on the standard simplex: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector<S: Scalar>(Array1<S>);

/// Absolute tolerance on the weight sum accepted by [`SimplexVector::new`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

impl<S: Scalar> SimplexVector<S> {
    /// Validates nonnegativity and unit sum (within [`SIMPLEX_SUM_TOL`]).
    pub fn new(weights: Array1<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("simplex vector must have dim >= 1".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::NonFinite(
                "simplex weights must be finite and nonnegative".into(),
            ));
        }
        let sum: S = weights.iter().copied().sum();
        if (sum - S::one()).abs() > S::c(SIMPLEX_SUM_TOL) {
            return Err(Error::Dimension(format!(
                "simplex weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Wraps weights already known to satisfy the invariant.
    pub(crate) fn new_unchecked(weights: Array1<S>) -> Self {
        Self(weights)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn weights(&self) -> ArrayView1<'_, S> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<S> {
        self.0
    }
}

/// Euclidean projection of `v` onto the standard simplex.
///
/// Sort-and-threshold algorithm: O(K log K), exact up to rounding, and
/// idempotent. Empty input is a dimension error.
pub fn project_simplex<S: Scalar>(v: ArrayView1<'_, S>) -> Result<SimplexVector<S>> {
    if v.is_empty() {
        return Err(Error::Dimension("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    let mut sorted: Vec<S> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));

    // Largest k with sorted[k-1] - (prefix_sum(k) - 1)/k > 0.
    let mut cumsum = S::zero();
    let mut tau = S::zero();
    for (k, &x) in sorted.iter().enumerate() {
        cumsum = cumsum + x;
        let t = (cumsum - S::one()) / S::from_usize(k + 1).unwrap();
        if x - t > S::zero() {
            tau = t;
        }
    }
    let weights = v.mapv(|x| (x - tau).max(S::zero()));
    Ok(SimplexVector::new_unchecked(weights))
}

/// Projects every row of a matrix onto the simplex in place.
pub fn project_rows_simplex<S: Scalar>(m: &mut ndarray::Array2<S>) -> Result<()> {
    for mut row in m.rows_mut() {
        let p = project_simplex(row.view())?;
        row.assign(&p.into_inner());
    }
    Ok(())
}
