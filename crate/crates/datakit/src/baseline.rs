//! Per-series exponential smoothing, the reference baseline in benchmarks.

use ndarray::Array2;
use nmfcast_core::lcf::{fit_predict_profiles, RegressorSpec};
use nmfcast_core::smm::SeriesMatrix;

/// Default smoothing factor used when none is configured.
pub const DEFAULT_SMOOTHING: f64 = 0.3;

/// Smooths every series and repeats its final level over the horizon.
pub fn baseline_exs(
    m: &SeriesMatrix<f64>,
    horizon: usize,
    factor: f64,
) -> nmfcast_core::Result<Array2<f64>> {
    fit_predict_profiles(
        m.view(),
        horizon,
        &RegressorSpec::ExponentialSmoothing { factor },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_forecast_constant() {
        let m = SeriesMatrix::new(Array2::from_elem((3, 6), 2.0)).unwrap();
        let f = baseline_exs(&m, 4, 0.5).unwrap();
        assert!(f.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn factor_one_repeats_last_observation() {
        let m = SeriesMatrix::new(
            Array2::from_shape_vec((1, 4), vec![5.0, 1.0, 9.0, 3.0]).unwrap(),
        )
        .unwrap();
        let f = baseline_exs(&m, 3, 1.0).unwrap();
        assert!(f.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn linear_ramp_matches_independent_recurrence() {
        let t = 12;
        let alpha = 0.35;
        let ramp: Vec<f64> = (0..t).map(|i| i as f64).collect();
        let m = SeriesMatrix::new(Array2::from_shape_vec((1, t), ramp.clone()).unwrap()).unwrap();
        let f = baseline_exs(&m, 2, alpha).unwrap();

        // Independent evaluation of the smoothing recurrence.
        let mut level = ramp[0];
        for &x in &ramp[1..] {
            level = alpha * x + (1.0 - alpha) * level;
        }
        for &v in f.iter() {
            assert!((v - level).abs() < 1e-12, "{v} vs {level}");
        }
    }
}
