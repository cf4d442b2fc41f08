//! Iterative solvers for the masked factorization programs.
//!
//! All four solvers share the same contract: given a [`MaskedProblem`], a
//! [`ConstraintProfile`] and a [`SolverConfig`], produce a [`Factorization`]
//! whose completed matrix equals the observation on observed cells and the
//! low-rank product on hidden cells.

mod als;
mod hals;
mod palm;
mod stopping;

pub use als::solve_als;
pub use hals::solve_hals;
pub use palm::{solve_ipalm, solve_palm};
pub use stopping::{kkt_residual, kkt_residual_for_problem, should_stop, StopReason};

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hull::HullConfig;
use crate::linalg::frobenius_diff_sq;
use crate::masking::MaskedProblem;
use crate::scalar::Scalar;

/// Which constraints are active on the factors.
///
/// The named programs are all expressible here: the plain/normalized NMF
/// family via the two flags with `archetypal_lambda == 0`, the archetypal
/// family with `archetypal_lambda > 0`, and the masked variants by pairing
/// any of them with a problem that actually hides cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintProfile<S: Scalar> {
    /// Entrywise nonnegativity on H.
    pub h_nonneg: bool,
    /// Rows of W constrained to the standard simplex.
    pub w_row_stochastic: bool,
    /// Weight of the hull penalty; zero disables it.
    pub archetypal_lambda: S,
    /// Whether the program is a completion (masked) program.
    pub masked: bool,
}

impl<S: Scalar> ConstraintProfile<S> {
    /// W >= 0, H >= 0.
    pub fn nmf() -> Self {
        Self {
            h_nonneg: true,
            w_row_stochastic: false,
            archetypal_lambda: S::zero(),
            masked: false,
        }
    }

    /// W row-stochastic, H >= 0.
    pub fn nnmf() -> Self {
        Self {
            w_row_stochastic: true,
            ..Self::nmf()
        }
    }

    /// W row-stochastic, H free.
    pub fn snnmf() -> Self {
        Self {
            h_nonneg: false,
            w_row_stochastic: true,
            archetypal_lambda: S::zero(),
            masked: false,
        }
    }

    /// Archetypal program: W row-stochastic, H free, hull penalty.
    pub fn amf(lambda: S) -> Self {
        Self {
            archetypal_lambda: lambda,
            ..Self::snnmf()
        }
    }

    /// Masked NNMF.
    pub fn mnmf() -> Self {
        Self {
            masked: true,
            ..Self::nnmf()
        }
    }

    /// Masked archetypal program.
    pub fn mamf(lambda: S) -> Self {
        Self {
            masked: true,
            ..Self::amf(lambda)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.archetypal_lambda < S::zero() {
            return Err(Error::Config("archetypal lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-iteration inertial weights for iPALM.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<S: Scalar> {
    Constant(S),
    /// Explicit per-iteration values; the last value repeats once exhausted.
    Sequence(Vec<S>),
}

impl<S: Scalar> Schedule<S> {
    pub fn zero() -> Self {
        Schedule::Constant(S::zero())
    }

    pub fn value_at(&self, iter: usize) -> S {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Sequence(vs) => vs
                .get(iter)
                .or_else(|| vs.last())
                .copied()
                .unwrap_or(S::zero()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Schedule::Constant(v) => *v == S::zero(),
            Schedule::Sequence(vs) => vs.iter().all(|v| *v == S::zero()),
        }
    }
}

/// Solver tuning knobs shared by all four algorithms.
#[derive(Debug, Clone)]
pub struct SolverConfig<S: Scalar> {
    /// Nonnegative rank K.
    pub rank: usize,
    pub max_iters: usize,
    /// Iterate-stall threshold on |W^{i+1} - W^i|_F.
    pub eps_w: S,
    /// Iterate-stall threshold on |H^{i+1} - H^i|_F.
    pub eps_h: S,
    /// KKT residual threshold.
    pub eps_r: S,
    /// Multiplier applied to the step-size lower bounds; must exceed 1.
    pub step_safety: S,
    /// Inertial extrapolation weights (iPALM only).
    pub alpha: Schedule<S>,
    pub beta: Schedule<S>,
    /// Inner-repeat acceleration factor for HALS.
    pub hals_accel: S,
    /// Row subsample size for the H update (None = all rows).
    pub subsample_rows: Option<usize>,
    /// Column subsample size for the W update (None = all columns).
    pub subsample_cols: Option<usize>,
    pub seed: u64,
    /// Upper bound of the uniform initialization of H.
    pub init_scale: S,
    /// Hull-projection parameters for the archetypal penalty.
    pub hull: HullConfig<S>,
    /// Evaluate the KKT stopping rule every this many iterations
    /// (0 disables the periodic check; the final residual is always set).
    pub kkt_every: usize,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iters: 500,
            eps_w: S::c(1e-8),
            eps_h: S::c(1e-8),
            eps_r: S::c(1e-8),
            step_safety: S::c(1.1),
            alpha: Schedule::zero(),
            beta: Schedule::zero(),
            hals_accel: S::c(0.5),
            subsample_rows: None,
            subsample_cols: None,
            seed: 0,
            init_scale: S::one(),
            hull: HullConfig {
                gap_tol: S::c(1e-9),
                max_iters: 20_000,
            },
            kkt_every: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank K must be >= 1".into()));
        }
        if self.step_safety <= S::one() {
            return Err(Error::Config("step_safety must be > 1".into()));
        }
        if self.eps_w <= S::zero() || self.eps_h <= S::zero() || self.eps_r <= S::zero() {
            return Err(Error::Config("stopping thresholds must be > 0".into()));
        }
        if self.init_scale < S::zero() {
            return Err(Error::Config("init scale must be >= 0".into()));
        }
        if self.hals_accel < S::zero() {
            return Err(Error::Config("hals_accel must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which iterative solver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Als,
    Hals,
    Palm,
    Ipalm,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Als => "als",
            SolverKind::Hals => "hals",
            SolverKind::Palm => "palm",
            SolverKind::Ipalm => "ipalm",
        }
    }
}

/// Counters for the numerical edge paths a solve may take.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Dead W columns reinitialized during HALS sweeps.
    pub dead_columns_reinit: usize,
    /// N-step backoffs taken to keep the merit non-increasing.
    pub n_step_backoffs: usize,
    /// HALS W phases reverted because the sweep-plus-projection increased
    /// the objective.
    pub w_phase_reverts: usize,
    /// Rows of W that were entirely zero during a KKT evaluation.
    pub kkt_zero_rows: usize,
    /// Inner repeat counts actually used by HALS.
    pub hals_inner_w: usize,
    pub hals_inner_h: usize,
}

/// Output of a solve.
#[derive(Debug, Clone)]
pub struct Factorization<S: Scalar> {
    pub w: Array2<S>,
    pub h: Array2<S>,
    /// Completion induced by the final factors: observed cells from the
    /// data, hidden cells from `w * h`.
    pub completed: Array2<S>,
    /// Objective for ALS/HALS, merit (objective plus hull penalty) for
    /// PALM/iPALM; entry 0 is the value at the initial point.
    pub objective_trace: Vec<S>,
    pub kkt_residual: S,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub diagnostics: Diagnostics,
}

impl<S: Scalar> Factorization<S> {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn final_objective(&self) -> S {
        self.objective_trace.last().copied().unwrap_or(S::zero())
    }
}

/// Draws the random starting point: H entries i.i.d. uniform on
/// `[0, init_scale)`, W rows i.i.d. uniform on the simplex (normalized
/// exponentials). Deterministic in `cfg.seed`.
pub fn init_random<S: Scalar>(
    p: &MaskedProblem<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    cfg.validate()?;
    let mut rng = init_rng(cfg.seed);
    let (w, h) = draw_factors(p.shape(), cfg.rank, cfg.init_scale, &mut rng);
    let completed = p.completion_projection(w.view(), h.view())?;
    let objective = frobenius_diff_sq(completed.view(), w.dot(&h).view());
    Ok(Factorization {
        w,
        h,
        completed,
        objective_trace: vec![objective],
        kkt_residual: S::infinity(),
        iterations: 0,
        converged: false,
        stop_reason: StopReason::MaxIters,
        diagnostics: Diagnostics::default(),
    })
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn draw_factors<S: Scalar>(
    shape: (usize, usize),
    rank: usize,
    init_scale: S,
    rng: &mut ChaCha8Rng,
) -> (Array2<S>, Array2<S>) {
    let (n, p) = shape;
    let h = Array2::from_shape_fn((rank, p), |_| {
        S::from_f64(rng.random::<f64>()).unwrap() * init_scale
    });
    let mut w = Array2::zeros((n, rank));
    for mut row in w.rows_mut() {
        // Normalized Exp(1) draws are uniform on the simplex.
        let draws: Array1<S> = (0..rank)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                S::from_f64(-(1.0 - u).ln()).unwrap()
            })
            .collect();
        let sum: S = draws.iter().copied().sum();
        if sum > S::zero() {
            row.assign(&draws.mapv(|d| d / sum));
        } else {
            row.fill(S::one() / S::from_usize(rank).unwrap());
        }
    }
    (w, h)
}

/// Runs the chosen solver.
pub fn solve<S: Scalar>(
    kind: SolverKind,
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    match kind {
        SolverKind::Als => solve_als(p, profile, cfg),
        SolverKind::Hals => solve_hals(p, profile, cfg),
        SolverKind::Palm => solve_palm(p, profile, cfg),
        SolverKind::Ipalm => solve_ipalm(p, profile, cfg),
    }
}

/// Runs the chosen solver with row/column subsampling, validating the
/// sample sizes against the problem and rank first.
pub fn solve_subsampled<S: Scalar>(
    kind: SolverKind,
    p: &MaskedProblem<S>,
    profile: &ConstraintProfile<S>,
    cfg: &SolverConfig<S>,
) -> Result<Factorization<S>> {
    let (n, m) = p.shape();
    let r = cfg
        .subsample_rows
        .ok_or_else(|| Error::Config("subsample_rows must be set".into()))?;
    let c = cfg
        .subsample_cols
        .ok_or_else(|| Error::Config("subsample_cols must be set".into()))?;
    if r < cfg.rank || r > n {
        return Err(Error::Config(format!(
            "subsample_rows {r} must lie in K={}..={n}",
            cfg.rank
        )));
    }
    if c < cfg.rank || c > m {
        return Err(Error::Config(format!(
            "subsample_cols {c} must lie in K={}..={m}",
            cfg.rank
        )));
    }
    solve(kind, p, profile, cfg)
}

/// Row/column index sets used by the updates. `None` means the full range,
/// which is also what a degenerate full-size subsample resolves to so that
/// it reproduces the plain solver exactly.
pub(crate) struct SubsamplePlan {
    pub rows: Option<Vec<usize>>,
    pub cols: Option<Vec<usize>>,
}

impl SubsamplePlan {
    pub fn from_config<S: Scalar>(shape: (usize, usize), cfg: &SolverConfig<S>) -> Result<Self> {
        let (n, m) = shape;
        let mut rng = init_rng(cfg.seed);
        rng.set_stream(1); // keep subsampling draws off the init stream
        let rows = match cfg.subsample_rows {
            Some(r) if r < n => {
                if r < cfg.rank {
                    return Err(Error::Config(format!("subsample_rows {r} below rank")));
                }
                Some(sorted_sample(&mut rng, n, r))
            }
            Some(r) if r > n => {
                return Err(Error::Config(format!("subsample_rows {r} above {n}")));
            }
            _ => None,
        };
        let cols = match cfg.subsample_cols {
            Some(c) if c < m => {
                if c < cfg.rank {
                    return Err(Error::Config(format!("subsample_cols {c} below rank")));
                }
                Some(sorted_sample(&mut rng, m, c))
            }
            Some(c) if c > m => {
                return Err(Error::Config(format!("subsample_cols {c} above {m}")));
            }
            _ => None,
        };
        Ok(Self { rows, cols })
    }
}

fn sorted_sample(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, len, amount).into_vec();
    idx.sort_unstable();
    idx
}

/// Objective `|n - w h|_F^2`, the quantity recorded in the ALS/HALS trace.
pub(crate) fn objective<S: Scalar>(n: &Array2<S>, w: &Array2<S>, h: &Array2<S>) -> S {
    frobenius_diff_sq(n.view(), w.dot(h).view())
}

pub(crate) fn ensure_finite_objective<S: Scalar>(obj: S, solver: &str) -> Result<S> {
    if !obj.is_finite() {
        return Err(Error::Divergence(format!(
            "{solver} produced a non-finite objective"
        )));
    }
    Ok(obj)
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_problem() -> MaskedProblem<f64> {
        MaskedProblem::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], 1, 1).unwrap()
    }

    #[test]
    fn rank_one_init_gives_all_ones_column() {
        let p = tiny_problem();
        let f = init_random(&p, &SolverConfig::<f64>::new(1)).unwrap();
        assert_eq!(f.w, array![[1.0], [1.0], [1.0]]);
    }

    #[test]
    fn same_seed_reproduces_factorization() {
        let p = tiny_problem();
        let cfg = SolverConfig::<f64>::new(2).with_seed(99);
        let a = init_random(&p, &cfg).unwrap();
        let b = init_random(&p, &cfg).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.h, b.h);
        assert_eq!(a.completed, b.completed);
    }

    #[test]
    fn zero_init_scale_gives_zero_h_and_norm_squared_objective() {
        let p = tiny_problem();
        let mut cfg = SolverConfig::<f64>::new(2);
        cfg.init_scale = 0.0;
        let f = init_random(&p, &cfg).unwrap();
        assert!(f.h.iter().all(|&v| v == 0.0));
        let x_sq: f64 = p.observed().iter().map(|v| v * v).sum();
        assert!((f.objective_trace[0] - x_sq).abs() < 1e-12);
    }

    #[test]
    fn zero_rank_is_config_error() {
        let p = tiny_problem();
        assert!(init_random(&p, &SolverConfig::<f64>::new(0)).is_err());
    }

    #[test]
    fn init_rows_are_on_the_simplex() {
        let p = tiny_problem();
        let f = init_random(&p, &SolverConfig::<f64>::new(3).with_seed(5)).unwrap();
        for row in f.w.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn subsample_plan_full_size_resolves_to_none() {
        let mut cfg = SolverConfig::<f64>::new(2);
        cfg.subsample_rows = Some(3);
        cfg.subsample_cols = Some(2);
        let plan = SubsamplePlan::from_config((3, 2), &cfg).unwrap();
        assert!(plan.rows.is_none() && plan.cols.is_none());
    }

    #[test]
    fn subsample_below_rank_is_error() {
        let mut cfg = SolverConfig::<f64>::new(3);
        cfg.subsample_rows = Some(2);
        assert!(SubsamplePlan::from_config((10, 5), &cfg).is_err());
    }

    #[test]
    fn schedule_sequence_repeats_last() {
        let s = Schedule::Sequence(vec![0.1, 0.2]);
        assert_eq!(s.value_at(0), 0.1);
        assert_eq!(s.value_at(5), 0.2);
    }
}
