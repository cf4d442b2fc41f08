//! Alternating least squares for the masked NMF program.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg::frobenius;
use crate::masking::MaskedProblem;
use crate::nnls::nnls_from_normal;
use crate::scalar::Scalar;
use crate::simplex::project_simplex;

use super::stopping::{decide, kkt_residual, StopReason};
use super::{
    draw_factors, ensure_finite_objective, init_rng, objective, ConstraintProfile, Diagnostics,
    Factorization, SolverConfig, SubsamplePlan,
};

/// Iteration cap of the per-row simplex least-squares subproblem.
const ROW_SOLVE_CAP: usize = 200;
/// Iterate-change exit threshold of the per-row subproblem.
const ROW_SOLVE_TOL: f64 = 1e-10;

/// Alternating least squares: exact NNLS columns of H, simplex-constrained
/// least-squares rows of W, then the completion projection. The recorded
/// objective is non-increasing across sweeps.
pub fn solve_als<S: Scalar>(
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    profile.validate()?;
    cfg.validate()?;
    if !profile.h_nonneg {
        return Err(Error::Config(
            "ALS requires h_nonneg; use PALM or iPALM for free-sign H".into(),
        ));
    }
    if profile.archetypal_lambda > S::zero() {
        return Err(Error::Config(
            "ALS has no archetypal penalty; use PALM or iPALM".into(),
        ));
    }

    let plan = SubsamplePlan::from_config(p.shape(), cfg)?;
    let mut rng = init_rng(cfg.seed);
    let (mut w, mut h) = draw_factors(p.shape(), cfg.rank, cfg.init_scale, &mut rng);
    let mut n = p.completion_projection(w.view(), h.view())?;
    let mut trace = vec![ensure_finite_objective(objective(&n, &w, &h), "als")?];

    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIters;
    let mut kkt = S::infinity();

    while iterations < cfg.max_iters {
        let w_prev = w.clone();
        let h_prev = h.clone();

        // H update: column-wise NNLS against the (optionally row-sampled) data.
        {
            let (w_r, n_r) = match &plan.rows {
                Some(idx) => (w.select(Axis(0), idx), n.select(Axis(0), idx)),
                None => (w.clone(), n.clone()),
            };
            let gram = w_r.t().dot(&w_r);
            let corr = w_r.t().dot(&n_r);
            for j in 0..h.ncols() {
                let coef = nnls_from_normal(&gram, corr.column(j));
                h.column_mut(j).assign(&coef);
            }
        }

        // W update: per-row constrained least squares against H.
        {
            let (h_c, n_c) = match &plan.cols {
                Some(idx) => (h.select(Axis(1), idx), n.select(Axis(1), idx)),
                None => (h.clone(), n.clone()),
            };
            let gram = h_c.dot(&h_c.t());
            let corr = n_c.dot(&h_c.t());
            if profile.w_row_stochastic {
                let lip = (frobenius(gram.view()) * S::c(2.0)).max(S::c(1e-12));
                for i in 0..w.nrows() {
                    let row = simplex_ls_row(w.row(i), &gram, corr.row(i), lip)?;
                    w.row_mut(i).assign(&row);
                }
            } else {
                for i in 0..w.nrows() {
                    let row = nnls_from_normal(&gram, corr.row(i));
                    w.row_mut(i).assign(&row);
                }
            }
        }

        n = p.completion_projection(w.view(), h.view())?;
        iterations += 1;
        trace.push(ensure_finite_objective(objective(&n, &w, &h), "als")?);

        let dw = frobenius((&w - &w_prev).view());
        let dh = frobenius((&h - &h_prev).view());
        kkt = if cfg.kkt_every > 0 && iterations % cfg.kkt_every == 0 {
            kkt_residual(&w, &h, &n, profile).0
        } else {
            S::infinity()
        };
        if let Some(reason) = decide(iterations, dw, dh, kkt, cfg) {
            stop = reason;
            break;
        }
    }

    let (final_kkt, zero_rows) = kkt_residual(&w, &h, &n, profile);
    let kkt_out = if kkt.is_finite() { kkt } else { final_kkt };
    Ok(Factorization {
        w,
        h,
        completed: n,
        objective_trace: trace,
        kkt_residual: kkt_out,
        iterations,
        converged: stop != StopReason::MaxIters,
        stop_reason: stop,
        diagnostics: Diagnostics {
            kkt_zero_rows: zero_rows,
            ..Diagnostics::default()
        },
    })
}

/// Minimizes `w G w^T - 2 w . corr` over the simplex by accelerated
/// projected gradient, warm-started at the current row. Returns the best
/// iterate seen (including the warm start), so a sweep can never increase
/// the objective.
fn simplex_ls_row<S: Scalar>(
    warm: ArrayView1<'_, S>,
    gram: &Array2<S>,
    corr: ArrayView1<'_, S>,
    lip: S,
) -> Result<Array1<S>> {
    let quad = |v: &Array1<S>| -> S {
        let gv = gram.dot(v);
        v.dot(&gv) - S::c(2.0) * v.dot(&corr)
    };
    let step = S::one() / lip;
    let mut x = warm.to_owned();
    let mut y = x.clone();
    let mut t = S::one();
    let mut best = x.clone();
    let mut best_f = quad(&x);

    for _ in 0..ROW_SOLVE_CAP {
        let grad = (gram.dot(&y) - &corr.to_owned()) * S::c(2.0);
        let candidate = &y - &grad.mapv(|g| g * step);
        let x_new = project_simplex(candidate.view())?.into_inner();
        let delta = (&x_new - &x).iter().map(|v| *v * *v).sum::<S>().sqrt();

        let f_new = quad(&x_new);
        if f_new < best_f {
            best_f = f_new;
            best = x_new.clone();
        }
        if delta <= S::c(ROW_SOLVE_TOL) {
            break;
        }
        let t_new = (S::one() + (S::one() + S::c(4.0) * t * t).sqrt()) / S::c(2.0);
        let momentum = (t - S::one()) / t_new;
        y = &x_new + &(&x_new - &x).mapv(|d| d * momentum);
        x = x_new;
        t = t_new;
    }
    Ok(best)
}
