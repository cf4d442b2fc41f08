//! Stopping rules: iterate stall, iteration cap, and the KKT residual.

use ndarray::Array2;

use crate::linalg::frobenius;
use crate::masking::MaskedProblem;
use crate::scalar::Scalar;

use super::{ConstraintProfile, Factorization, SolverConfig};

/// Why a solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    IterateStall,
    KktConverged,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::MaxIters => "max-iters",
            StopReason::IterateStall => "iterate-stall",
            StopReason::KktConverged => "kkt-converged",
        }
    }
}

/// KKT-based residual for factorizations with (optionally) row-stochastic W.
///
/// The multiplier of each row-sum constraint is estimated by averaging
/// `-((WH - N) H^T)_{i,j}` over the positive entries of row i; rows of W that
/// are entirely zero contribute nothing and are counted in the returned flag.
pub fn kkt_residual<S: Scalar>(
    w: &Array2<S>,
    h: &Array2<S>,
    n: &Array2<S>,
    profile: &ConstraintProfile<S>,
) -> (S, usize) {
    let resid = w.dot(h) - n; // WH - N
    let grad_w = resid.dot(&h.t());
    let grad_h = w.t().dot(&resid);

    let mut zero_rows = 0usize;
    let mut r_w_sq = S::zero();
    for (i, row) in w.rows().into_iter().enumerate() {
        let t_i = if profile.w_row_stochastic {
            let mut sum = S::zero();
            let mut count = 0usize;
            for (j, &wij) in row.iter().enumerate() {
                if wij > S::zero() {
                    sum = sum - grad_w[[i, j]];
                    count += 1;
                }
            }
            if count == 0 {
                zero_rows += 1;
                continue;
            }
            sum / S::from_usize(count).unwrap()
        } else {
            S::zero()
        };
        for (j, &wij) in row.iter().enumerate() {
            if wij != S::zero() {
                let r = grad_w[[i, j]] + t_i;
                r_w_sq = r_w_sq + r * r;
            }
        }
    }

    let mut r_h_sq = S::zero();
    for (idx, &hij) in h.indexed_iter() {
        if hij != S::zero() {
            let g = grad_h[idx];
            r_h_sq = r_h_sq + g * g;
        }
    }

    (r_w_sq.sqrt() + r_h_sq.sqrt(), zero_rows)
}

/// Applies the combined stopping rule to two consecutive iterates.
///
/// Order of precedence: iteration cap, then iterate stall on W and H, then
/// the KKT residual.
pub fn should_stop<S: Scalar>(
    current: &Factorization<S>,
    prev: &Factorization<S>,
    cfg: &SolverConfig<S>,
) -> Option<StopReason> {
    let dw = frobenius((&current.w - &prev.w).view());
    let dh = frobenius((&current.h - &prev.h).view());
    decide(
        current.iterations,
        dw,
        dh,
        current.kkt_residual,
        cfg,
    )
}

pub(crate) fn decide<S: Scalar>(
    iterations: usize,
    delta_w: S,
    delta_h: S,
    kkt: S,
    cfg: &SolverConfig<S>,
) -> Option<StopReason> {
    if iterations >= cfg.max_iters {
        return Some(StopReason::MaxIters);
    }
    if delta_w <= cfg.eps_w && delta_h <= cfg.eps_h {
        return Some(StopReason::IterateStall);
    }
    if kkt <= cfg.eps_r {
        return Some(StopReason::KktConverged);
    }
    None
}

/// KKT residual of a factorization against a masked problem's completion.
pub fn kkt_residual_for_problem<S: Scalar>(
    f: &Factorization<S>,
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
) -> crate::error::Result<S> {
    let n = p.completion_projection(f.w.view(), f.h.view())?;
    Ok(kkt_residual(&f.w, &f.h, &n, profile).0)
}
