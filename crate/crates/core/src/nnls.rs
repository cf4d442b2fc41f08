//! Nonnegative least squares for small coefficient counts.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::solve_square;
use crate::scalar::Scalar;

/// Gradient threshold below which a coordinate is considered optimal.
pub const NNLS_TOL: f64 = 1e-10;

/// Minimizes `|target - basis^T c|_2` over `c >= 0`.
///
/// `basis` holds one basis vector per row; its column count must match the
/// target dimension. Lawson–Hanson active set, sized for the small inner
/// dimensions used by the factorization solvers (K up to a few hundred).
/// Rank-deficient bases are accepted; any minimizer may be returned.
pub fn nnls_row<S: Scalar>(target: ArrayView1<'_, S>, basis: ArrayView2<'_, S>) -> Result<Array1<S>> {
    let k = basis.nrows();
    let m = basis.ncols();
    if target.len() != m {
        return Err(Error::Dimension(format!(
            "target dim {} vs basis vector dim {m}",
            target.len()
        )));
    }
    if k == 0 {
        return Err(Error::Dimension("basis must have at least one row".into()));
    }
    // Normal-equation data: gram = B B^T, corr = B t.
    let gram = basis.dot(&basis.t());
    let corr = basis.dot(&target);
    Ok(nnls_from_normal(&gram, corr.view()))
}

/// Lawson–Hanson on precomputed normal equations, for callers that reuse one
/// gram matrix across many targets.
pub(crate) fn nnls_from_normal<S: Scalar>(gram: &Array2<S>, corr: ArrayView1<'_, S>) -> Array1<S> {
    let k = gram.nrows();
    let scale = corr
        .iter()
        .fold(S::zero(), |acc, v| acc.max(v.abs()))
        .max(S::one());
    let tol = scale * S::c(NNLS_TOL);

    let mut x = Array1::<S>::zeros(k);
    let mut passive = vec![false; k];
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        // w = B(t - B^T x), the negative gradient of the half-squared loss.
        let w = &corr.to_owned() - &gram.dot(&x);
        let mut best: Option<(usize, S)> = None;
        for i in 0..k {
            if !passive[i] && w[i] > tol {
                if best.is_none_or(|(_, bv)| w[i] > bv) {
                    best = Some((i, w[i]));
                }
            }
        }
        let Some((enter, _)) = best else {
            break;
        };
        passive[enter] = true;

        // Inner loop: solve on the passive set, back off until feasible.
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z = solve_passive(&gram, corr.view(), &idx);
            if z.iter().all(|&v| v > S::zero()) {
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z[pos];
                }
                break;
            }
            // Step from x toward z, stopping at the first zero crossing.
            let mut alpha = S::one();
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= S::zero() {
                    let denom = x[i] - z[pos];
                    if denom > S::zero() {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = S::zero();
                    }
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] = x[i] + alpha * (z[pos] - x[i]);
            }
            let mut dropped = false;
            for &i in &idx {
                if passive[i] && x[i] <= tol * S::c(1e-2) {
                    x[i] = S::zero();
                    passive[i] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // Numerical stalemate: accept the clipped iterate.
                for &i in &idx {
                    if x[i] < S::zero() {
                        x[i] = S::zero();
                    }
                }
                break;
            }
        }
    }
    x
}

fn solve_passive<S: Scalar>(gram: &Array2<S>, corr: ArrayView1<'_, S>, idx: &[usize]) -> Array1<S> {
    let m = idx.len();
    let mut sub = Array2::<S>::zeros((m, m));
    let mut rhs = Array1::<S>::zeros(m);
    for (a, &i) in idx.iter().enumerate() {
        rhs[a] = corr[i];
        for (b, &j) in idx.iter().enumerate() {
            sub[[a, b]] = gram[[i, j]];
        }
    }
    solve_square(sub.view(), rhs.view())
}

/// Residual `|target - basis^T c|_2^2` for a given coefficient vector.
pub fn nnls_objective<S: Scalar>(
    target: ArrayView1<'_, S>,
    basis: ArrayView2<'_, S>,
    coeffs: ArrayView1<'_, S>,
) -> S {
    let recon = basis.t().dot(&coeffs);
    target
        .iter()
        .zip(recon.iter())
        .map(|(t, r)| (*t - *r) * (*t - *r))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive active-set oracle: try every support, solve, keep the best
    /// feasible objective.
    fn oracle_objective(target: &Array1<f64>, basis: &Array2<f64>) -> f64 {
        let k = basis.nrows();
        let gram = basis.dot(&basis.t());
        let corr = basis.dot(target);
        let mut best = nnls_objective(target.view(), basis.view(), Array1::zeros(k).view());
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let z = solve_passive(&gram, corr.view(), &idx);
            if z.iter().all(|&v| v >= -1e-12) {
                let mut c = Array1::zeros(k);
                for (pos, &i) in idx.iter().enumerate() {
                    c[i] = z[pos].max(0.0);
                }
                let obj = nnls_objective(target.view(), basis.view(), c.view());
                if obj < best {
                    best = obj;
                }
            }
        }
        best
    }

    #[test]
    fn exact_representation_gives_indicator() {
        let basis: Array2<f64> = array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        let target = basis.row(0).to_owned();
        let c = nnls_row(target.view(), basis.view()).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_target_gives_zero() {
        let basis: Array2<f64> = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let target = array![0.0, 0.0, 5.0];
        let c = nnls_row(target.view(), basis.view()).unwrap();
        assert_eq!(c.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn matches_enumeration_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let basis = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
            let target = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
            let c = nnls_row(target.view(), basis.view()).unwrap();
            let got = nnls_objective(target.view(), basis.view(), c.view());
            let want = oracle_objective(&target, &basis);
            assert!(
                got - want < 1e-8,
                "objective {got} worse than oracle {want}"
            );
        }
    }

    #[test]
    fn never_worse_than_zero_or_clipped_unconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let basis = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0_f64));
            let target = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
            let c = nnls_row(target.view(), basis.view()).unwrap();
            assert!(c.iter().all(|&v| v >= 0.0));
            let obj = nnls_objective(target.view(), basis.view(), c.view());

            let zero_obj = nnls_objective(target.view(), basis.view(), Array1::zeros(4).view());
            assert!(obj <= zero_obj + 1e-12);

            let gram = basis.dot(&basis.t());
            let corr = basis.dot(&target);
            let unc = solve_square(gram.view(), corr.view()).mapv(|v| v.max(0.0));
            let clip_obj = nnls_objective(target.view(), basis.view(), unc.view());
            assert!(obj <= clip_obj + 1e-12);
        }
    }
}
