//! Small dense helpers shared by the solvers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Scalar;

/// Frobenius norm.
pub fn frobenius<S: Scalar>(a: ArrayView2<'_, S>) -> S {
    a.iter().map(|v| *v * *v).sum::<S>().sqrt()
}

/// Squared Frobenius norm of the difference `a - b`.
pub fn frobenius_diff_sq<S: Scalar>(a: ArrayView2<'_, S>, b: ArrayView2<'_, S>) -> S {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum()
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. A (near-)zero pivot zeroes the corresponding unknown instead of
/// failing, so rank-deficient normal equations return one valid minimizer.
pub fn solve_square<S: Scalar>(a: ArrayView2<'_, S>, b: ArrayView1<'_, S>) -> Array1<S> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_owned();
    let mut rhs = b.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();

    let scale: S = a
        .iter()
        .fold(S::zero(), |acc, v| acc.max(v.abs()))
        .max(S::one());
    let tiny = scale * S::c(1e-13);

    for k in 0..n {
        let mut piv = k;
        let mut piv_val = m[[k, k]].abs();
        for r in (k + 1)..n {
            if m[[r, k]].abs() > piv_val {
                piv = r;
                piv_val = m[[r, k]].abs();
            }
        }
        if piv != k {
            for c in 0..n {
                m.swap([k, c], [piv, c]);
            }
            rhs.swap(k, piv);
            perm.swap(k, piv);
        }
        if m[[k, k]].abs() <= tiny {
            // Dependent column: pin this unknown at zero.
            for c in 0..n {
                m[[k, c]] = S::zero();
            }
            m[[k, k]] = S::one();
            rhs[k] = S::zero();
            continue;
        }
        for r in (k + 1)..n {
            let f = m[[r, k]] / m[[k, k]];
            if f != S::zero() {
                for c in k..n {
                    m[[r, c]] = m[[r, c]] - f * m[[k, c]];
                }
                rhs[r] = rhs[r] - f * rhs[k];
            }
        }
    }

    let mut x = Array1::zeros(n);
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for c in (k + 1)..n {
            acc = acc - m[[k, c]] * x[c];
        }
        x[k] = acc / m[[k, k]];
    }
    x
}

/// Least-squares solution of `design * x ~ target` through the normal
/// equations, with optional ridge on all unknowns.
pub fn lstsq<S: Scalar>(
    design: ArrayView2<'_, S>,
    target: ArrayView1<'_, S>,
    ridge: S,
) -> Array1<S> {
    let mut gram = design.t().dot(&design);
    if ridge > S::zero() {
        for i in 0..gram.nrows() {
            gram[[i, i]] = gram[[i, i]] + ridge;
        }
    }
    let rhs = design.t().dot(&target);
    solve_square(gram.view(), rhs.view())
}

/// Checks that every entry is finite.
pub fn all_finite<S: Scalar>(a: ArrayView2<'_, S>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major matrix from a flat vector, panicking on shape mismatch.
pub fn mat_from_rows<S: Scalar>(rows: usize, cols: usize, data: Vec<S>) -> Array2<S> {
    Array2::from_shape_vec((rows, cols), data).expect("row-major data matches shape")
}
