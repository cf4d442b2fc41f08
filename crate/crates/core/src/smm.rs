//! The sliding-mask forecasting pipeline: mask, solve, extract, score,
//! cross-validate.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masking::{MaskedProblem, SlidingGeometry};
use crate::scalar::Scalar;
use crate::solver::{
    solve, ConstraintProfile, Factorization, SolverConfig, SolverKind, StopReason,
};

/// Nonnegative observation matrix: one series per row, one timestamp per
/// column.
#[derive(Debug, Clone)]
pub struct SeriesMatrix<S: Scalar>(Array2<S>);

impl<S: Scalar> SeriesMatrix<S> {
    pub fn new(data: Array2<S>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension("series matrix must be non-empty".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("series matrix".into()));
        }
        if data.iter().any(|v| *v < S::zero()) {
            return Err(Error::Config("series matrix must be nonnegative".into()));
        }
        Ok(Self(data))
    }

    pub fn view(&self) -> ArrayView2<'_, S> {
        self.0.view()
    }

    pub fn n_series(&self) -> usize {
        self.0.nrows()
    }

    /// Number of observed timestamps T.
    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Array2<S> {
        self.0
    }

    /// The first `t` timestamps as a new series matrix.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::Dimension(format!(
                "cannot truncate {} timestamps to {t}",
                self.len()
            )));
        }
        Ok(Self(self.0.slice(s![.., ..t]).to_owned()))
    }
}

/// Which masked program the pipeline solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Program {
    MNmf,
    MAmf,
}

impl Program {
    pub fn name(&self) -> &'static str {
        match self {
            Program::MNmf => "mnmf",
            Program::MAmf => "mamf",
        }
    }
}

/// A sliding-geometry candidate: period, window, stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryCandidate {
    pub period: usize,
    pub window: usize,
    pub stride: usize,
}

/// One fully specified hyperparameter choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<S: Scalar> {
    pub rank: usize,
    pub window: usize,
    pub lambda: S,
    pub period: usize,
    pub stride: usize,
}

impl<S: Scalar> Candidate<S> {
    /// Tie-break key: smaller K, then W, then lambda, then period, stride.
    fn key(&self) -> (usize, usize, S, usize, usize) {
        (self.rank, self.window, self.lambda, self.period, self.stride)
    }

    fn key_less(&self, other: &Self) -> bool {
        let (k1, w1, l1, p1, s1) = self.key();
        let (k2, w2, l2, p2, s2) = other.key();
        (k1, w1).cmp(&(k2, w2)).then_with(|| {
            l1.partial_cmp(&l2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((p1, s1).cmp(&(p2, s2)))
        }) == std::cmp::Ordering::Less
    }
}

/// Pipeline configuration: hyperparameter grids plus solver choice.
#[derive(Debug, Clone)]
pub struct SmmConfig<S: Scalar> {
    pub geometries: Vec<GeometryCandidate>,
    pub ranks: Vec<usize>,
    /// Penalty grid; only consulted by the archetypal program.
    pub lambdas: Vec<S>,
    pub program: Program,
    pub solver: SolverKind,
    pub solver_cfg: SolverConfig<S>,
}

impl<S: Scalar> SmmConfig<S> {
    pub fn new(program: Program, solver: SolverKind) -> Self {
        Self {
            geometries: Vec::new(),
            ranks: Vec::new(),
            lambdas: vec![S::zero()],
            program,
            solver,
            solver_cfg: SolverConfig::new(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.geometries.is_empty() || self.ranks.is_empty() {
            return Err(Error::Config("geometry and rank grids must be non-empty".into()));
        }
        match (self.program, self.solver) {
            (Program::MNmf, SolverKind::Als | SolverKind::Hals) => {}
            (Program::MAmf, SolverKind::Palm | SolverKind::Ipalm) => {}
            (p, s) => {
                return Err(Error::Config(format!(
                    "program {} cannot be solved by {}",
                    p.name(),
                    s.name()
                )))
            }
        }
        if self.program == Program::MAmf && self.lambdas.is_empty() {
            return Err(Error::Config("lambda grid must be non-empty for mAMF".into()));
        }
        Ok(())
    }

    fn lambda_grid(&self) -> Vec<S> {
        match self.program {
            Program::MNmf => vec![S::zero()],
            Program::MAmf => self.lambdas.clone(),
        }
    }

    fn candidates(&self) -> Vec<Candidate<S>> {
        let mut out = Vec::new();
        for g in &self.geometries {
            for &rank in &self.ranks {
                for &lambda in &self.lambda_grid() {
                    out.push(Candidate {
                        rank,
                        window: g.window,
                        lambda,
                        period: g.period,
                        stride: g.stride,
                    });
                }
            }
        }
        out
    }

    fn profile(&self, lambda: S) -> ConstraintProfile<S> {
        match self.program {
            Program::MNmf => ConstraintProfile::mnmf(),
            Program::MAmf => ConstraintProfile::mamf(lambda),
        }
    }
}

/// Forecast plus everything needed to report it.
#[derive(Debug, Clone)]
pub struct ForecastReport<S: Scalar> {
    /// N x F forecast, clamped at zero.
    pub forecast: Array2<S>,
    /// Validation-block scores when produced by cross-validation.
    pub rrmse: Option<S>,
    pub rmpe: Option<S>,
    pub chosen: Candidate<S>,
    /// Validation score per candidate, in grid order.
    pub cv_scores: Vec<(Candidate<S>, S)>,
    /// Forecast cells clamped up to zero.
    pub clamped_cells: usize,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_objective: S,
    pub kkt_residual: S,
}

/// Relative root-mean-squared error `|F - T|_F / |T|_F`.
pub fn rrmse<S: Scalar>(forecast: ArrayView2<'_, S>, truth: ArrayView2<'_, S>) -> Result<S> {
    if forecast.dim() != truth.dim() {
        return Err(Error::Dimension("rrmse shapes differ".into()));
    }
    let denom: S = truth.iter().map(|v| *v * *v).sum::<S>().sqrt();
    if denom == S::zero() {
        return Err(Error::UndefinedMetric("rrmse of an all-zero truth".into()));
    }
    let num: S = forecast
        .iter()
        .zip(truth.iter())
        .map(|(f, t)| (*f - *t) * (*f - *t))
        .sum::<S>()
        .sqrt();
    Ok(num / denom)
}

/// Relative mean-percentage error: entrywise-l1 analogue of [`rrmse`].
pub fn rmpe<S: Scalar>(forecast: ArrayView2<'_, S>, truth: ArrayView2<'_, S>) -> Result<S> {
    if forecast.dim() != truth.dim() {
        return Err(Error::Dimension("rmpe shapes differ".into()));
    }
    let denom: S = truth.iter().map(|v| v.abs()).sum();
    if denom == S::zero() {
        return Err(Error::UndefinedMetric("rmpe of an all-zero truth".into()));
    }
    let num: S = forecast
        .iter()
        .zip(truth.iter())
        .map(|(f, t)| (*f - *t).abs())
        .sum();
    Ok(num / denom)
}

/// Forecasts with the first candidate of every grid. Cross-validation is the
/// grid-searching front end; this is the single-shot path it builds on.
pub fn smm_forecast<S: Scalar>(
    m: &SeriesMatrix<S>,
    horizon: usize,
    cfg: &SmmConfig<S>,
) -> Result<ForecastReport<S>> {
    cfg.validate()?;
    let cand = *cfg
        .candidates()
        .first()
        .expect("validated grids are non-empty");
    smm_forecast_with(m, horizon, cand, cfg)
}

/// Forecasts with one explicit hyperparameter choice.
pub fn smm_forecast_with<S: Scalar>(
    m: &SeriesMatrix<S>,
    horizon: usize,
    cand: Candidate<S>,
    cfg: &SmmConfig<S>,
) -> Result<ForecastReport<S>> {
    if horizon == 0 {
        return Err(Error::Config(
            "horizon must be >= 1; an empty forecast is refused".into(),
        ));
    }
    let g = SlidingGeometry::for_series(
        m.n_series(),
        m.len(),
        horizon,
        cand.period,
        cand.window,
        cand.stride,
    )?;
    let problem = MaskedProblem::from_series(m.view(), g)?;
    let mut solver_cfg = cfg.solver_cfg.clone();
    solver_cfg.rank = cand.rank;
    let f: Factorization<S> = solve(cfg.solver, &problem, &cfg.profile(cand.lambda), &solver_cfg)?;

    let raw = problem.extract_forecast(f.completed.view())?;
    let mut clamped = 0usize;
    let forecast = raw.mapv(|v| {
        if v < S::zero() {
            clamped += 1;
            S::zero()
        } else {
            v
        }
    });
    Ok(ForecastReport {
        forecast,
        rrmse: None,
        rmpe: None,
        chosen: cand,
        cv_scores: Vec::new(),
        clamped_cells: clamped,
        iterations: f.iterations,
        stop_reason: f.stop_reason,
        final_objective: f.final_objective(),
        kkt_residual: f.kkt_residual,
    })
}

/// Hold-out cross-validation: hides the last `horizon` observed columns,
/// scores every candidate on them, selects the minimizer (ties break to the
/// smaller rank, then window, then lambda), refits on the full data and
/// forecasts the true future.
pub fn cross_validate<S: Scalar>(
    m: &SeriesMatrix<S>,
    horizon: usize,
    cfg: &SmmConfig<S>,
) -> Result<ForecastReport<S>> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::Config(
            "horizon must be >= 1; an empty forecast is refused".into(),
        ));
    }
    let t = m.len();
    if t <= horizon {
        return Err(Error::InsufficientData(format!(
            "need more than {horizon} observed timestamps, have {t}"
        )));
    }
    let t_train = t - horizon;
    let candidates = cfg.candidates();
    // Every candidate must fit both the full data and the hold-out split.
    for c in &candidates {
        SlidingGeometry::for_series(m.n_series(), t, horizon, c.period, c.window, c.stride)?;
        SlidingGeometry::for_series(m.n_series(), t_train, horizon, c.period, c.window, c.stride)?;
    }

    let truncated = m.truncated(t_train)?;
    let truth = m.view().slice(s![.., t_train..]).to_owned();

    let scored: Vec<(Candidate<S>, Result<(S, S)>)> = candidates
        .par_iter()
        .map(|&cand| {
            let score = smm_forecast_with(&truncated, horizon, cand, cfg).and_then(|report| {
                Ok((
                    rrmse(report.forecast.view(), truth.view())?,
                    rmpe(report.forecast.view(), truth.view())?,
                ))
            });
            (cand, score)
        })
        .collect();

    let mut cv_scores = Vec::with_capacity(scored.len());
    let mut best: Option<(Candidate<S>, S, S)> = None;
    for (cand, res) in scored {
        let (score, l1) = res?;
        cv_scores.push((cand, score));
        let replace = match &best {
            None => true,
            Some((bc, bs, _)) => score < *bs || (score == *bs && cand.key_less(bc)),
        };
        if replace {
            best = Some((cand, score, l1));
        }
    }
    let (chosen, val_rrmse, val_rmpe) = best.expect("at least one candidate");

    let mut report = smm_forecast_with(m, horizon, chosen, cfg)?;
    report.rrmse = Some(val_rrmse);
    report.rmpe = Some(val_rmpe);
    report.cv_scores = cv_scores;
    Ok(report)
}
