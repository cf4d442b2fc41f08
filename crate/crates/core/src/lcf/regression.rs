//! Profile forecasting backends for the clustered pipeline.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::solve_square;
use crate::scalar::Scalar;

/// How latent profiles are extended past the observed horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressorSpec<S: Scalar> {
    /// Multi-output linear map from a lag window to the next F values,
    /// ridge-regularized (intercept unpenalized), fit per profile on its
    /// sliding-window dataset.
    LagLeastSquares { window: usize, ridge: S },
    /// Simple exponential smoothing; the F-step forecast repeats the final
    /// smoothed level. A factor of one degenerates to the last observation.
    ExponentialSmoothing { factor: S },
}

impl<S: Scalar> RegressorSpec<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegressorSpec::LagLeastSquares { window, ridge } => {
                if *window == 0 {
                    return Err(Error::Config("lag window must be >= 1".into()));
                }
                if *ridge < S::zero() {
                    return Err(Error::Config("ridge must be >= 0".into()));
                }
            }
            RegressorSpec::ExponentialSmoothing { factor } => {
                if *factor <= S::zero() || *factor > S::one() {
                    return Err(Error::Config("smoothing factor must lie in (0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressorSpec::LagLeastSquares { .. } => "lag-least-squares",
            RegressorSpec::ExponentialSmoothing { .. } => "exponential-smoothing",
        }
    }
}

/// Supervised samples from one series: overlapping windows of length
/// `window` paired with the following `horizon` values.
pub fn sliding_window_dataset<S: Scalar>(
    series: ArrayView1<'_, S>,
    window: usize,
    horizon: usize,
) -> Result<(Array2<S>, Array2<S>)> {
    let t = series.len();
    if window == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be >= 1".into()));
    }
    if t < window + horizon {
        return Err(Error::InsufficientData(format!(
            "series length {t} below window {window} + horizon {horizon}"
        )));
    }
    let samples = t - window - horizon + 1;
    let mut inputs = Array2::zeros((samples, window));
    let mut outputs = Array2::zeros((samples, horizon));
    for j in 0..samples {
        inputs
            .row_mut(j)
            .assign(&series.slice(s![j..j + window]));
        outputs
            .row_mut(j)
            .assign(&series.slice(s![j + window..j + window + horizon]));
    }
    Ok((inputs, outputs))
}

/// Fits the regressor on every profile row and emits its F-step continuation.
pub fn fit_predict_profiles<S: Scalar>(
    profiles: ArrayView2<'_, S>,
    horizon: usize,
    spec: &RegressorSpec<S>,
) -> Result<Array2<S>> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let mut out = Array2::zeros((profiles.nrows(), horizon));
    for (i, row) in profiles.rows().into_iter().enumerate() {
        let forecast = match spec {
            RegressorSpec::LagLeastSquares { window, ridge } => {
                lag_forecast(row, horizon, *window, *ridge).map_err(|e| match e {
                    Error::InsufficientData(msg) => {
                        Error::InsufficientData(format!("profile row {i}: {msg}"))
                    }
                    other => other,
                })?
            }
            RegressorSpec::ExponentialSmoothing { factor } => {
                exponential_smoothing_forecast(row, horizon, *factor)
            }
        };
        out.row_mut(i).assign(&forecast);
    }
    Ok(out)
}

/// Final smoothed level repeated over the horizon. Affine-equivariant, so
/// profile standardization would cancel exactly and is skipped.
pub fn exponential_smoothing_forecast<S: Scalar>(
    series: ArrayView1<'_, S>,
    horizon: usize,
    factor: S,
) -> Array1<S> {
    let mut level = series[0];
    for &x in series.iter().skip(1) {
        level = factor * x + (S::one() - factor) * level;
    }
    Array1::from_elem(horizon, level)
}

fn lag_forecast<S: Scalar>(
    series: ArrayView1<'_, S>,
    horizon: usize,
    window: usize,
    ridge: S,
) -> Result<Array1<S>> {
    let t = series.len();
    if t < window + horizon {
        return Err(Error::InsufficientData(format!(
            "length {t} below window {window} + horizon {horizon}"
        )));
    }

    // Standardize for conditioning; a flat profile short-circuits.
    let tf = S::from_usize(t).unwrap();
    let mean = series.iter().copied().sum::<S>() / tf;
    let var = series.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / tf;
    let std = var.sqrt();
    if std == S::zero() {
        return Ok(Array1::from_elem(horizon, mean));
    }
    let z = series.mapv(|x| (x - mean) / std);

    let (inputs, outputs) = sliding_window_dataset(z.view(), window, horizon)?;
    let samples = inputs.nrows();
    // Design with an intercept column; ridge leaves the intercept free.
    let mut design = Array2::ones((samples, window + 1));
    design.slice_mut(s![.., ..window]).assign(&inputs);
    let mut gram = design.t().dot(&design);
    if ridge > S::zero() {
        for i in 0..window {
            gram[[i, i]] = gram[[i, i]] + ridge;
        }
    }

    let mut query = Array1::ones(window + 1);
    query
        .slice_mut(s![..window])
        .assign(&z.slice(s![t - window..]));

    let mut forecast = Array1::zeros(horizon);
    for f in 0..horizon {
        let rhs = design.t().dot(&outputs.column(f));
        let theta = solve_square(gram.view(), rhs.view());
        forecast[f] = query.dot(&theta) * std + mean;
    }
    Ok(forecast)
}
