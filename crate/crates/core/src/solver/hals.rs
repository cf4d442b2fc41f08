//! Accelerated hierarchical alternating least squares for masked NMF.

use ndarray::{Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::frobenius;
use crate::masking::MaskedProblem;
use crate::scalar::Scalar;
use crate::simplex::project_rows_simplex;

use super::stopping::{decide, kkt_residual, StopReason};
use super::{
    draw_factors, ensure_finite_objective, init_rng, objective, ConstraintProfile, Diagnostics,
    Factorization, SolverConfig, SubsamplePlan,
};

/// Inner repeat count `floor(1 + accel * rho)`, never below one sweep.
pub(crate) fn inner_repeat_count<S: Scalar>(accel: S, rho: S) -> usize {
    let v = (S::one() + accel * rho).floor();
    v.to_usize().unwrap_or(1).max(1)
}

/// Exact coordinate descent over columns of W and rows of H with inner
/// repeats, the simplex re-projection after each W sweep, and the completion
/// projection each outer iteration.
pub fn solve_hals<S: Scalar>(
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    profile.validate()?;
    cfg.validate()?;
    if !profile.h_nonneg {
        return Err(Error::Config(
            "HALS requires h_nonneg; use PALM or iPALM for free-sign H".into(),
        ));
    }
    if profile.archetypal_lambda > S::zero() {
        return Err(Error::Config(
            "HALS has no archetypal penalty; use PALM or iPALM".into(),
        ));
    }

    let plan = SubsamplePlan::from_config(p.shape(), cfg)?;
    let mut rng = init_rng(cfg.seed);
    let (mut w, mut h) = draw_factors(p.shape(), cfg.rank, cfg.init_scale, &mut rng);
    let mut n = p.completion_projection(w.view(), h.view())?;
    let mut trace = vec![ensure_finite_objective(objective(&n, &w, &h), "hals")?];

    let (rows, cols) = p.shape();
    let (rows_f, cols_f, kf) = (
        S::from_usize(rows).unwrap(),
        S::from_usize(cols).unwrap(),
        S::from_usize(cfg.rank).unwrap(),
    );
    // Repeat ratios are (setup cost)/(sweep cost) per phase: the cheap small
    // factor gets many sweeps, the tall one few.
    let rho_w = S::one() + cols_f * (rows_f + kf) / (rows_f * (kf + S::one()));
    let rho_h = S::one() + rows_f * (cols_f + kf) / (cols_f * (kf + S::one()));
    let k_w = inner_repeat_count(cfg.hals_accel, rho_w);
    let k_h = inner_repeat_count(cfg.hals_accel, rho_h);

    // The W-phase guard compares full objectives, which is only meaningful
    // when the phase optimizes the full objective.
    let guard_enabled = plan.rows.is_none() && plan.cols.is_none();

    let mut diagnostics = Diagnostics {
        hals_inner_w: k_w,
        hals_inner_h: k_h,
        ..Diagnostics::default()
    };
    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIters;
    let mut kkt = S::infinity();

    while iterations < cfg.max_iters {
        let w_prev = w.clone();
        let h_prev = h.clone();
        let obj_before = *trace.last().expect("trace is never empty");

        // W phase.
        {
            let (h_c, n_c) = match &plan.cols {
                Some(idx) => (h.select(Axis(1), idx), n.select(Axis(1), idx)),
                None => (h.clone(), n.clone()),
            };
            let a = n_c.dot(&h_c.t()); // rows x K
            let b = h_c.dot(&h_c.t()); // K x K

            // Fit as a function of W up to a constant:
            // |N - WH|^2 = const - 2<W, A> + <W^T W, B>.
            let gram_fit = |w: &Array2<S>| -> S {
                let cross: S = w.iter().zip(a.iter()).map(|(x, y)| *x * *y).sum();
                let wtw = w.t().dot(w);
                let quad: S = wtw.iter().zip(b.iter()).map(|(x, y)| *x * *y).sum();
                quad - S::c(2.0) * cross
            };
            // The simplex re-projection after a sweep is not itself a descent
            // step, so the sweeps may pass through worse points; the phase
            // keeps the best sweep endpoint (the start included).
            let guard_sweeps = guard_enabled && profile.w_row_stochastic;
            let mut best: Option<(S, Array2<S>)> =
                guard_sweeps.then(|| (gram_fit(&w), w.clone()));
            for _ in 0..k_w {
                for l in 0..cfg.rank {
                    let b_ll = b[[l, l]];
                    if b_ll <= S::zero() {
                        reinit_column(&mut w, l, &mut rng);
                        diagnostics.dead_columns_reinit += 1;
                        continue;
                    }
                    // c_l = sum_j W_j B_jl over j != l, with already-updated
                    // columns entering through W itself.
                    let c_l = w.dot(&b.column(l)) - &w.column(l).mapv(|v| v * b_ll);
                    let a_l = a.column(l);
                    let mut col = w.column_mut(l);
                    for i in 0..rows {
                        col[i] = ((a_l[i] - c_l[i]) / b_ll).max(S::zero());
                    }
                }
                if profile.w_row_stochastic {
                    project_rows_simplex(&mut w)?;
                }
                if let Some((best_fit, snapshot)) = best.as_mut() {
                    let fit = gram_fit(&w);
                    if fit <= *best_fit {
                        *best_fit = fit;
                        snapshot.assign(&w);
                    }
                }
            }
            if let Some((_, snapshot)) = best {
                if snapshot != w {
                    diagnostics.w_phase_reverts += 1;
                }
                w = snapshot;
            }
            if guard_enabled {
                let obj_w = objective(&n, &w, &h);
                if obj_w > obj_before {
                    w = w_prev.clone();
                    diagnostics.w_phase_reverts += 1;
                }
            }
        }

        // H phase.
        {
            let (w_r, n_r) = match &plan.rows {
                Some(idx) => (w.select(Axis(0), idx), n.select(Axis(0), idx)),
                None => (w.clone(), n.clone()),
            };
            let a = w_r.t().dot(&n_r); // K x cols
            let b = w_r.t().dot(&w_r); // K x K
            for _ in 0..k_h {
                for l in 0..cfg.rank {
                    let b_ll = b[[l, l]];
                    if b_ll <= S::zero() {
                        // Dead W column: the component is unused, leave its
                        // profile row untouched.
                        continue;
                    }
                    let c_l = b.row(l).dot(&h) - &h.row(l).mapv(|v| v * b_ll);
                    let a_l = a.row(l);
                    let mut row = h.row_mut(l);
                    for j in 0..cols {
                        row[j] = ((a_l[j] - c_l[j]) / b_ll).max(S::zero());
                    }
                }
            }
        }

        n = p.completion_projection(w.view(), h.view())?;
        iterations += 1;
        trace.push(ensure_finite_objective(objective(&n, &w, &h), "hals")?);

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
    diagnostics.kkt_zero_rows = zero_rows;
    Ok(Factorization {
        w,
        h,
        completed: n,
        objective_trace: trace,
        kkt_residual: if kkt.is_finite() { kkt } else { final_kkt },
        iterations,
        converged: stop != StopReason::MaxIters,
        stop_reason: stop,
        diagnostics,
    })
}

fn reinit_column<S: Scalar>(w: &mut Array2<S>, l: usize, rng: &mut ChaCha8Rng) {
    let rows = w.nrows();
    let scale = S::one() / S::from_usize(w.ncols()).unwrap();
    for i in 0..rows {
        w[[i, l]] = S::from_f64(rng.random::<f64>()).unwrap() * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::SlidingGeometry;
    use crate::solver::solve_als;
    use rand::prelude::*;

    #[test]
    fn inner_repeats_reduce_to_single_sweep_without_acceleration() {
        assert_eq!(inner_repeat_count(0.0_f64, 123.4), 1);
        assert_eq!(inner_repeat_count(0.5_f64, 3.0), 2);
    }

    #[test]
    fn identical_rows_rank_one_reaches_same_limit_as_als() {
        let pattern = [1.0_f64, 2.0, 3.0, 1.0, 2.0, 3.0];
        let m = Array2::from_shape_fn((4, 6), |(_, j)| pattern[j]);
        let g = SlidingGeometry::new(4, 3, 2, 1, 3, 1).unwrap();
        let p = MaskedProblem::from_series(m.view(), g).unwrap();
        let mut cfg = SolverConfig::new(1).with_seed(3).with_max_iters(300);
        cfg.eps_w = 1e-14;
        cfg.eps_h = 1e-14;
        cfg.eps_r = 1e-14;
        let f = solve_hals(&p, &ConstraintProfile::mnmf(), &cfg).unwrap();
        assert!(f.final_objective().sqrt() < 1e-8);
        let fc = p.extract_forecast(f.completed.view()).unwrap();
        for row in fc.rows() {
            for (got, want) in row.iter().zip([1.0, 2.0, 3.0]) {
                assert!((got - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn separable_synthetic_recovery_converges_like_als() {
        let (p, truth) = crate::solver::tests_support::separable_instance(30, 20, 3, 5, 4, 77);
        let mut cfg = SolverConfig::new(3).with_seed(5).with_max_iters(800);
        cfg.eps_w = 1e-10;
        cfg.eps_h = 1e-10;
        cfg.eps_r = 1e-10;
        let hals = solve_hals(&p, &ConstraintProfile::mnmf(), &cfg).unwrap();
        let als = solve_als(&p, &ConstraintProfile::mnmf(), &cfg).unwrap();
        let rel = crate::solver::tests_support::hidden_relative_error(&p, &hals.completed, &truth);
        assert!(rel < 1e-3, "hidden-cell relative error {rel}");
        // Exact-block ALS converges in fewer outer sweeps than the projected
        // coordinate descent; both must solve the instance.
        let rel_als =
            crate::solver::tests_support::hidden_relative_error(&p, &als.completed, &truth);
        assert!(rel_als < 1e-3, "als hidden-cell relative error {rel_als}");
        assert!(hals.converged && als.converged);
    }

    #[test]
    fn objective_is_non_increasing_even_with_projection() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(44);
        for seed in 0..5 {
            let x = Array2::from_shape_fn((12, 9), |_| rng.random_range(0.0..2.0));
            let p = MaskedProblem::new(x, 3, 2).unwrap();
            let cfg = SolverConfig::new(3).with_seed(seed).with_max_iters(50);
            let f = solve_hals(&p, &ConstraintProfile::mnmf(), &cfg).unwrap();
            for pair in f.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9);
            }
        }
    }

    #[test]
    fn scaling_equivariance_without_row_normalization() {
        // For the plain NMF profile, scaling the data by 2 from a doubled-H
        // start scales the H iterates by 2 and leaves W unchanged.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((6, 5), |_| rng.random_range(0.5..1.5_f64));
        let p1 = MaskedProblem::unmasked(x.clone()).unwrap();
        let p2 = MaskedProblem::unmasked(x.mapv(|v| v * 2.0)).unwrap();
        let cfg = SolverConfig::new(2).with_seed(11).with_max_iters(20);
        let f1 = solve_hals(&p1, &ConstraintProfile::nmf(), &cfg).unwrap();

        // Same draws on the doubled problem, with every H0 entry doubled.
        let f2 = {
            let mut cfg2 = cfg.clone();
            cfg2.init_scale = 2.0;
            solve_hals(&p2, &ConstraintProfile::nmf(), &cfg2).unwrap()
        };
        let rel_w: f64 = (&f1.w - &f2.w).iter().map(|v| v.abs()).sum::<f64>()
            / f1.w.iter().map(|v| v.abs()).sum::<f64>();
        let rel_h: f64 = (&f1.h.mapv(|v| v * 2.0) - &f2.h)
            .iter()
            .map(|v| v.abs())
            .sum::<f64>()
            / f2.h.iter().map(|v| v.abs()).sum::<f64>();
        assert!(rel_w < 1e-10, "W equivariance broke: {rel_w}");
        assert!(rel_h < 1e-10, "H equivariance broke: {rel_h}");
    }

    #[test]
    fn mask_reduction_reproduces_unmasked_trace() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((7, 5), |_| rng.random_range(0.0..1.0));
        let empty = MaskedProblem::new(x.clone(), 0, 3).unwrap();
        let unmasked = MaskedProblem::unmasked(x).unwrap();
        let cfg = SolverConfig::new(2).with_seed(6).with_max_iters(25);
        let a = solve_hals(&empty, &ConstraintProfile::mnmf(), &cfg).unwrap();
        let b = solve_hals(&unmasked, &ConstraintProfile::nnmf(), &cfg).unwrap();
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.w, b.w);
        assert_eq!(a.h, b.h);
    }
}
