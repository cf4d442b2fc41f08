//! Proximal alternating linearized minimization for the masked archetypal
//! program, plus its inertial variant.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hull::{hull_divergence, project_rows_convex_hull, HullConfig};
use crate::linalg::{frobenius, frobenius_diff_sq};
use crate::masking::MaskedProblem;
use crate::scalar::Scalar;
use crate::simplex::project_rows_simplex;

use super::stopping::{decide, kkt_residual, StopReason};
use super::{
    draw_factors, ensure_finite_objective, init_rng, ConstraintProfile, Diagnostics,
    Factorization, SolverConfig, SubsamplePlan,
};

/// Floor inside the step-size bounds, guarding against collapsed factors.
const STEP_FLOOR: f64 = 1e-8;
/// Maximum number of completion-step backoffs per iteration.
const MAX_BACKOFFS: usize = 40;

pub fn solve_palm<S: Scalar>(
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    run(p, profile, cfg, false)
}

pub fn solve_ipalm<S: Scalar>(
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    run(p, profile, cfg, true)
}

fn validate<S: Scalar>(profile: &ConstraintProfile<S>) -> Result<()> {
    profile.validate()?;
    if profile.h_nonneg {
        return Err(Error::Config(
            "PALM solves the free-sign-H programs; use ALS or HALS for H >= 0".into(),
        ));
    }
    if !profile.w_row_stochastic {
        return Err(Error::Config("PALM requires row-stochastic W".into()));
    }
    Ok(())
}

fn run<S: Scalar>(
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
    inertial: bool,
) -> Result<Factorization<S>> {
    validate(profile)?;
    cfg.validate()?;
    let lambda = profile.archetypal_lambda;
    let plan = SubsamplePlan::from_config(p.shape(), cfg)?;

    let mut rng = init_rng(cfg.seed);
    let (mut w, mut h) = draw_factors(p.shape(), cfg.rank, cfg.init_scale, &mut rng);
    let mut n = p.completion_projection(w.view(), h.view())?;
    let mut w_prev = w.clone();
    let mut h_prev = h.clone();
    let mut n_prev = n.clone();

    let mut diagnostics = Diagnostics::default();
    let mut trace = vec![ensure_finite_objective(
        merit(&n, &w, &h, lambda, &cfg.hull)?,
        "palm",
    )?];
    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIters;
    let mut kkt = S::infinity();
    let safety = cfg.step_safety;
    let floor = S::c(STEP_FLOOR);

    while iterations < cfg.max_iters {
        let (alpha, beta) = if inertial {
            (cfg.alpha.value_at(iterations), cfg.beta.value_at(iterations))
        } else {
            (S::zero(), S::zero())
        };

        // H block at the extrapolated point.
        let h1 = extrapolate(&h, &h_prev, alpha);
        let h2 = extrapolate(&h, &h_prev, beta);
        let (w_r, n_r) = match &plan.rows {
            Some(idx) => (
                w.select(ndarray::Axis(0), idx),
                n.select(ndarray::Axis(0), idx),
            ),
            None => (w.clone(), n.clone()),
        };
        let gamma1 = safety * frobenius(w_r.t().dot(&w_r).view()).max(floor);
        let grad_h = w_r.t().dot(&(w_r.dot(&h2) - &n_r));
        let h_tilde = &h1 - &grad_h.mapv(|g| g / gamma1);
        let h_next = if lambda > S::zero() {
            let pulled = project_rows_convex_hull(h_tilde.view(), n.view(), &cfg.hull)?;
            let weight = lambda / (lambda + gamma1);
            &h_tilde - &(&h_tilde - &pulled).mapv(|d| d * weight)
        } else {
            h_tilde
        };

        // W block at the extrapolated point, projected row-wise onto the simplex.
        let w1 = extrapolate(&w, &w_prev, alpha);
        let w2 = &w1 + &(&w - &w_prev).mapv(|d| d * beta);
        let (h_c, n_c) = match &plan.cols {
            Some(idx) => (
                h_next.select(ndarray::Axis(1), idx),
                n.select(ndarray::Axis(1), idx),
            ),
            None => (h_next.clone(), n.clone()),
        };
        let gamma2 = safety * frobenius(h_c.dot(&h_c.t()).view()).max(floor);
        let grad_w = (w2.dot(&h_c) - &n_c).dot(&h_c.t());
        let mut w_next = &w1 - &grad_w.mapv(|g| g / gamma2);
        project_rows_simplex(&mut w_next)?;

        // Relaxed completion step, guarded so the merit cannot rise.
        let n1 = extrapolate(&n, &n_prev, alpha);
        let n2 = &n1 + &(&n - &n_prev).mapv(|d| d * beta);
        let wh = w_next.dot(&h_next);
        let guard = lambda > S::zero() && alpha == S::zero() && beta == S::zero();
        let n_next = completion_step(
            p,
            &n,
            &n1,
            &n2,
            &wh,
            safety,
            lambda,
            &h_next,
            &cfg.hull,
            guard,
            &mut diagnostics,
        )?;

        w_prev = std::mem::replace(&mut w, w_next);
        h_prev = std::mem::replace(&mut h, h_next);
        n_prev = std::mem::replace(&mut n, n_next);
        iterations += 1;

        trace.push(ensure_finite_objective(
            merit(&n, &w, &h, lambda, &cfg.hull)?,
            if inertial { "ipalm" } else { "palm" },
        )?);

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

    // The returned completion is induced by the final factors; the internal
    // relaxed N is solver state only.
    let completed = p.completion_projection(w.view(), h.view())?;
    let (final_kkt, zero_rows) = kkt_residual(&w, &h, &completed, profile);
    diagnostics.kkt_zero_rows = zero_rows;
    Ok(Factorization {
        w,
        h,
        completed,
        objective_trace: trace,
        kkt_residual: if kkt.is_finite() { kkt } else { final_kkt },
        iterations,
        converged: stop != StopReason::MaxIters,
        stop_reason: stop,
        diagnostics,
    })
}

fn extrapolate<S: Scalar>(cur: &Array2<S>, prev: &Array2<S>, weight: S) -> Array2<S> {
    cur + &(cur - prev).mapv(|d| d * weight)
}

/// Merit `|N - WH|_F^2 + lambda * D(H, N)` with D the squared distance of
/// the rows of H to the convex hull of the rows of N.
fn merit<S: Scalar>(
    n: &Array2<S>,
    w: &Array2<S>,
    h: &Array2<S>,
    lambda: S,
    hull: &HullConfig<S>,
) -> Result<S> {
    let fit = frobenius_diff_sq(n.view(), w.dot(h).view());
    if lambda > S::zero() {
        Ok(fit + lambda * hull_divergence(h.view(), n.view(), hull)?)
    } else {
        Ok(fit)
    }
}

#[allow(clippy::too_many_arguments)]
fn completion_step<S: Scalar>(
    p: &MaskedProblem<S>,
    n_cur: &Array2<S>,
    n1: &Array2<S>,
    n2: &Array2<S>,
    wh: &Array2<S>,
    gamma3_init: S,
    lambda: S,
    h_for_divergence: &Array2<S>,
    hull: &HullConfig<S>,
    guard: bool,
    diagnostics: &mut Diagnostics,
) -> Result<Array2<S>> {
    let step = |gamma3: S| -> Array2<S> {
        let mut cand = n1 + &(wh - n2).mapv(|d| d / gamma3);
        p.reproject(&mut cand);
        cand
    };
    if !guard {
        return Ok(step(gamma3_init));
    }

    // The fit part always shrinks under the relaxed step; only the hull
    // divergence can grow when the hull itself moves. Back the step off
    // until the combined merit is non-increasing.
    let fit_old = frobenius_diff_sq(n_cur.view(), wh.view());
    let d_old = hull_divergence(h_for_divergence.view(), n_cur.view(), hull)?;
    let mut gamma3 = gamma3_init;
    for _ in 0..MAX_BACKOFFS {
        let cand = step(gamma3);
        let fit_new = frobenius_diff_sq(cand.view(), wh.view());
        let d_new = hull_divergence(h_for_divergence.view(), cand.view(), hull)?;
        if fit_new + lambda * d_new <= fit_old + lambda * d_old {
            return Ok(cand);
        }
        gamma3 = gamma3 * S::c(2.0);
        diagnostics.n_step_backoffs += 1;
    }
    Ok(n_cur.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::tests_support::{hidden_relative_error, separable_instance};
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_zero_fully_observed_reaches_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // Data drawn from the model so a stationary point with small
        // residual exists.
        let (w0, h0) = crate::solver::draw_factors((12, 6), 2, 1.0, &mut rng);
        let x = w0.dot(&h0);
        let p = MaskedProblem::unmasked(x).unwrap();
        let mut cfg = SolverConfig::new(2).with_seed(7).with_max_iters(4000);
        cfg.eps_w = 1e-13;
        cfg.eps_h = 1e-13;
        cfg.eps_r = 1e-9;
        let f = solve_palm(&p, &ConstraintProfile::snnmf(), &cfg).unwrap();
        assert!(
            f.kkt_residual < 1e-6,
            "kkt {} after {} iterations",
            f.kkt_residual,
            f.iterations
        );
    }

    #[test]
    fn separable_instance_with_penalty_completes() {
        let (p, truth) = separable_instance(30, 20, 3, 5, 4, 77);
        let mut cfg = SolverConfig::new(3).with_seed(5).with_max_iters(3000);
        cfg.eps_w = 1e-12;
        cfg.eps_h = 1e-12;
        let f = solve_palm(&p, &ConstraintProfile::mamf(0.1), &cfg).unwrap();
        let rel = hidden_relative_error(&p, &f.completed, &truth);
        assert!(rel < 1e-2, "hidden-cell relative error {rel}");
    }

    #[test]
    fn h_rows_stay_near_hull_bound() {
        let (p, _) = separable_instance(20, 12, 3, 4, 3, 3);
        let lambda = 0.5;
        let cfg = SolverConfig::new(3).with_seed(2).with_max_iters(300);
        let f = solve_palm(&p, &ConstraintProfile::mamf(lambda), &cfg).unwrap();
        let psi = f.final_objective();
        let d = hull_divergence(f.h.view(), f.completed.view(), &cfg.hull).unwrap();
        // By definition of the merit, lambda * D <= Psi.
        assert!(lambda * d <= psi + 1e-9, "D {d} vs Psi {psi}");
    }

    #[test]
    fn merit_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..4 {
            let x = Array2::from_shape_fn((10, 7), |_| rng.random_range(0.0..1.5));
            let p = MaskedProblem::new(x, 3, 2).unwrap();
            let cfg = SolverConfig::new(3).with_seed(seed).with_max_iters(60);
            let f = solve_palm(&p, &ConstraintProfile::mamf(0.2), &cfg).unwrap();
            for pair in f.objective_trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-7,
                    "merit rose {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn zero_inertia_ipalm_equals_palm_exactly() {
        let (p, _) = separable_instance(15, 10, 2, 3, 2, 9);
        let cfg = SolverConfig::new(2).with_seed(11).with_max_iters(40);
        let a = solve_palm(&p, &ConstraintProfile::mamf(0.1), &cfg).unwrap();
        let b = solve_ipalm(&p, &ConstraintProfile::mamf(0.1), &cfg).unwrap();
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.w, b.w);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn first_iteration_matches_palm_for_any_schedule() {
        let (p, _) = separable_instance(12, 8, 2, 2, 2, 4);
        let mut cfg = SolverConfig::new(2).with_seed(3).with_max_iters(1);
        let palm = solve_palm(&p, &ConstraintProfile::mamf(0.3), &cfg).unwrap();
        cfg.alpha = crate::solver::Schedule::Constant(0.7);
        cfg.beta = crate::solver::Schedule::Constant(0.4);
        let ipalm = solve_ipalm(&p, &ConstraintProfile::mamf(0.3), &cfg).unwrap();
        // H^{-1} = H^0 forces zero extrapolation on the first iteration.
        assert_eq!(palm.w, ipalm.w);
        assert_eq!(palm.h, ipalm.h);
    }

    #[test]
    fn inertial_run_reaches_palm_merit_without_extra_iterations() {
        let (p, _) = separable_instance(30, 20, 3, 5, 4, 77);
        let mut cfg = SolverConfig::new(3).with_seed(5).with_max_iters(500);
        cfg.eps_w = 1e-10;
        cfg.eps_h = 1e-10;
        let palm = solve_palm(&p, &ConstraintProfile::mamf(0.1), &cfg).unwrap();
        let target = palm.final_objective();

        cfg.alpha = crate::solver::Schedule::Constant(0.3);
        cfg.beta = crate::solver::Schedule::Constant(0.3);
        let ipalm = solve_ipalm(&p, &ConstraintProfile::mamf(0.1), &cfg).unwrap();
        let reached = ipalm
            .objective_trace
            .iter()
            .position(|&v| v <= target * 1.1)
            .expect("inertial run reaches the PALM merit");
        assert!(
            reached <= palm.iterations,
            "ipalm needed {reached} iterations vs palm {}",
            palm.iterations
        );
    }

    #[test]
    fn nonneg_h_profile_is_rejected() {
        let (p, _) = separable_instance(8, 6, 2, 2, 2, 1);
        let cfg = SolverConfig::new(2);
        assert!(solve_palm(&p, &ConstraintProfile::mnmf(), &cfg).is_err());
    }

    #[test]
    fn negative_lambda_is_config_error() {
        let (p, _) = separable_instance(8, 6, 2, 2, 2, 1);
        let cfg = SolverConfig::new(2);
        let profile = ConstraintProfile {
            archetypal_lambda: -0.5,
            ..ConstraintProfile::snnmf()
        };
        assert!(solve_palm(&p, &profile, &cfg).is_err());
    }
}
