//! Projection onto the convex hull of a finite point set.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simplex::SimplexVector;

/// Stopping parameters for the hull projection.
#[derive(Debug, Clone, Copy)]
pub struct HullConfig<S: Scalar> {
    /// Frank–Wolfe dual-gap threshold.
    pub gap_tol: S,
    /// Hard iteration cap.
    pub max_iters: usize,
}

impl<S: Scalar> Default for HullConfig<S> {
    fn default() -> Self {
        Self {
            gap_tol: S::c(1e-8),
            max_iters: 10_000,
        }
    }
}

/// Result of [`project_convex_hull`]: the projected point, its barycentric
/// coordinates over the generators and the final dual-gap certificate.
#[derive(Debug, Clone)]
pub struct HullProjection<S: Scalar> {
    pub point: Array1<S>,
    pub weights: SimplexVector<S>,
    pub gap: S,
    pub iterations: usize,
}

impl<S: Scalar> HullProjection<S> {
    /// Squared distance between the query point and its projection.
    pub fn squared_distance_to(&self, query: ArrayView1<'_, S>) -> S {
        self.point
            .iter()
            .zip(query.iter())
            .map(|(p, q)| (*p - *q) * (*p - *q))
            .sum()
    }
}

/// Euclidean projection of `point` onto the convex hull of the rows of
/// `generators`, via Frank–Wolfe with away steps and exact line search.
///
/// The squared distance of the returned point is within the dual gap of the
/// true minimum over the hull. Ties in vertex selection break to the lowest
/// row index, so the routine is deterministic.
pub fn project_convex_hull<S: Scalar>(
    point: ArrayView1<'_, S>,
    generators: ArrayView2<'_, S>,
    cfg: &HullConfig<S>,
) -> Result<HullProjection<S>> {
    let n = generators.nrows();
    let d = generators.ncols();
    if n == 0 {
        return Err(Error::Dimension("hull needs at least one generator".into()));
    }
    if point.len() != d {
        return Err(Error::Dimension(format!(
            "point dim {} vs generator dim {d}",
            point.len()
        )));
    }
    if point.iter().any(|x| !x.is_finite()) || generators.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("hull projection input".into()));
    }

    // Start at the generator closest to the query point.
    let mut start = 0usize;
    let mut best = S::infinity();
    for (j, row) in generators.rows().into_iter().enumerate() {
        let dist: S = row
            .iter()
            .zip(point.iter())
            .map(|(g, p)| (*g - *p) * (*g - *p))
            .sum();
        if dist < best {
            best = dist;
            start = j;
        }
    }

    let mut theta = Array1::<S>::zeros(n);
    theta[start] = S::one();
    let mut x: Array1<S> = generators.row(start).to_owned();
    let mut gap = S::infinity();
    let mut iters = 0usize;

    for it in 0..cfg.max_iters {
        iters = it;
        // Gradient of |x - point|^2 up to the constant factor 2.
        let grad = &x - &point.to_owned();

        let mut fw_idx = 0usize;
        let mut fw_val = S::infinity();
        let mut away_idx = 0usize;
        let mut away_val = S::neg_infinity();
        for j in 0..n {
            let s: S = generators
                .row(j)
                .iter()
                .zip(grad.iter())
                .map(|(g, q)| *g * *q)
                .sum();
            if s < fw_val {
                fw_val = s;
                fw_idx = j;
            }
            if theta[j] > S::zero() && s > away_val {
                away_val = s;
                away_idx = j;
            }
        }
        let x_dot: S = x.iter().zip(grad.iter()).map(|(a, b)| *a * *b).sum();
        gap = (x_dot - fw_val) * S::c(2.0);
        if gap <= cfg.gap_tol {
            break;
        }

        let toward_fw = x_dot - fw_val >= away_val - x_dot;
        let (dir, eta_max, vertex): (Array1<S>, S, usize) = if toward_fw {
            (&generators.row(fw_idx) - &x, S::one(), fw_idx)
        } else {
            let t = theta[away_idx];
            if t >= S::one() {
                // Single active vertex wants to move away from itself: optimum.
                break;
            }
            (&x - &generators.row(away_idx), t / (S::one() - t), away_idx)
        };

        let dir_sq: S = dir.iter().map(|v| *v * *v).sum();
        if dir_sq <= S::zero() {
            break;
        }
        let slope: S = grad.iter().zip(dir.iter()).map(|(g, v)| *g * *v).sum();
        let eta = (-slope / dir_sq).max(S::zero()).min(eta_max);
        if eta <= S::zero() {
            break;
        }

        if toward_fw {
            theta.mapv_inplace(|t| t * (S::one() - eta));
            theta[vertex] = theta[vertex] + eta;
        } else {
            theta.mapv_inplace(|t| t * (S::one() + eta));
            theta[vertex] = theta[vertex] - eta;
            if theta[vertex] < S::zero() {
                theta[vertex] = S::zero();
            }
        }
        x = x + dir.mapv(|v| v * eta);
    }

    // Rounding drift cleanup so the weights satisfy the simplex invariant.
    theta.mapv_inplace(|t| t.max(S::zero()));
    let sum: S = theta.iter().copied().sum();
    if sum > S::zero() {
        theta.mapv_inplace(|t| t / sum);
    } else {
        theta[start] = S::one();
    }
    let projected = theta.dot(&generators);

    Ok(HullProjection {
        point: projected,
        weights: SimplexVector::new_unchecked(theta),
        gap,
        iterations: iters,
    })
}

/// Projects each row of `points` onto the hull of the rows of `generators`.
pub fn project_rows_convex_hull<S: Scalar>(
    points: ArrayView2<'_, S>,
    generators: ArrayView2<'_, S>,
    cfg: &HullConfig<S>,
) -> Result<Array2<S>> {
    let mut out = Array2::zeros(points.raw_dim());
    for (i, row) in points.rows().into_iter().enumerate() {
        let p = project_convex_hull(row, generators, cfg)?;
        out.row_mut(i).assign(&p.point);
    }
    Ok(out)
}

/// Sum over rows of the squared distance to the hull of `generators`.
///
/// This is the divergence term of the archetypal penalty.
pub fn hull_divergence<S: Scalar>(
    points: ArrayView2<'_, S>,
    generators: ArrayView2<'_, S>,
    cfg: &HullConfig<S>,
) -> Result<S> {
    let mut total = S::zero();
    for row in points.rows() {
        let p = project_convex_hull(row, generators, cfg)?;
        total = total + p.squared_distance_to(row);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::project_simplex;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> HullConfig<f64> {
        HullConfig::default()
    }

    /// Independent oracle: projected gradient on the barycentric weights,
    /// run long enough to be effectively exact.
    fn pg_oracle(point: &Array1<f64>, generators: &Array2<f64>) -> f64 {
        let n = generators.nrows();
        let mut theta = Array1::from_elem(n, 1.0 / n as f64);
        let gtg = generators.dot(&generators.t());
        let lip = 2.0 * gtg.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for _ in 0..200_000 {
            let x = theta.dot(generators);
            let grad = generators.dot(&(&x - point)) * 2.0;
            let step = &theta - &(grad / lip);
            let next = project_simplex(step.view()).unwrap().into_inner();
            let delta: f64 = (&next - &theta).iter().map(|v| v * v).sum();
            theta = next;
            if delta < 1e-26 {
                break;
            }
        }
        let x = theta.dot(generators);
        (&x - point).iter().map(|v| v * v).sum()
    }

    #[test]
    fn interior_point_is_fixed() {
        let gens = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let p = project_convex_hull(array![0.2, 0.2].view(), gens.view(), &cfg()).unwrap();
        assert!((p.point[0] - 0.2).abs() < 1e-8 && (p.point[1] - 0.2).abs() < 1e-8);
    }

    #[test]
    fn outside_point_hits_edge() {
        let gens = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let p = project_convex_hull(array![2.0, 2.0].view(), gens.view(), &cfg()).unwrap();
        assert!((p.point[0] - 0.5).abs() < 1e-7 && (p.point[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let gens = array![[0.0, 0.0], [1.0, 0.0]];
        assert!(project_convex_hull(array![1.0, 2.0, 3.0].view(), gens.view(), &cfg()).is_err());
    }

    #[test]
    fn non_finite_input_is_error() {
        let gens = array![[0.0, f64::NAN]];
        assert!(project_convex_hull(array![1.0, 2.0].view(), gens.view(), &cfg()).is_err());
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..40 {
            let gens = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
            let point = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
            let p = project_convex_hull(point.view(), gens.view(), &cfg()).unwrap();
            let got = p.squared_distance_to(point.view());
            let want = pg_oracle(&point, &gens);
            assert!(
                (got - want).abs() < 1e-6,
                "distance^2 mismatch: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn output_lies_in_hull_with_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let gens = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
            let point = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
            let p = project_convex_hull(point.view(), gens.view(), &cfg()).unwrap();
            assert!(p.gap < 1e-8 || p.iterations >= 9_999);
            // Weights satisfy the simplex invariant and reproduce the point.
            let w = p.weights.weights().to_owned();
            SimplexVector::new(w.clone()).unwrap();
            let recon = w.dot(&gens);
            for (a, b) in recon.iter().zip(p.point.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
