//! Sliding block operator, mask operator and observed/hidden splits.
//!
//! Forecasting N series over F future timestamps is recast as completion of
//! the slid matrix: the timeline is cut into B blocks of P timestamps, W
//! consecutive blocks are piled per row group, and the bottom-right N x F
//! rectangle (the future of the last row group) is hidden.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Block geometry of the sliding operator.
///
/// The stride covers both regimes used in practice: `stride == 1` is the
/// fully sliding construction, `stride == window` gives non-overlapping
/// row groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlidingGeometry {
    n_series: usize,
    period: usize,
    n_blocks: usize,
    window: usize,
    horizon: usize,
    stride: usize,
}

impl SlidingGeometry {
    pub fn new(
        n_series: usize,
        period: usize,
        n_blocks: usize,
        window: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<Self> {
        if n_series == 0 || period == 0 || n_blocks == 0 {
            return Err(Error::Geometry("all counts must be positive".into()));
        }
        if window == 0 || window > n_blocks {
            return Err(Error::Geometry(format!(
                "window {window} must lie in 1..={n_blocks}"
            )));
        }
        if stride == 0 || stride > window {
            return Err(Error::Geometry(format!(
                "stride {stride} must lie in 1..={window}"
            )));
        }
        if (n_blocks - window) % stride != 0 {
            return Err(Error::Geometry(format!(
                "stride {stride} must divide n_blocks - window = {}",
                n_blocks - window
            )));
        }
        if horizon == 0 {
            return Err(Error::Geometry("horizon must be >= 1".into()));
        }
        // Only the last row group may touch unobserved timestamps, which
        // bounds the horizon by one stride worth of columns.
        if horizon > stride * period {
            return Err(Error::Geometry(format!(
                "horizon {horizon} exceeds stride*period = {}",
                stride * period
            )));
        }
        Ok(Self {
            n_series,
            period,
            n_blocks,
            window,
            horizon,
            stride,
        })
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Full timeline length B*P (= T + F).
    pub fn total_len(&self) -> usize {
        self.n_blocks * self.period
    }

    /// Observed timeline length T.
    pub fn observed_len(&self) -> usize {
        self.total_len() - self.horizon
    }

    /// Number of row groups produced by the sliding operator.
    pub fn row_groups(&self) -> usize {
        (self.n_blocks - self.window) / self.stride + 1
    }

    /// Output shape of the sliding operator: (row_groups * N, W * P).
    pub fn slid_shape(&self) -> (usize, usize) {
        (self.row_groups() * self.n_series, self.window * self.period)
    }

    /// Geometry valid for a series matrix of T observed columns and this
    /// horizon, derived from a candidate (period, window, stride).
    pub fn for_series(
        n_series: usize,
        t_observed: usize,
        horizon: usize,
        period: usize,
        window: usize,
        stride: usize,
    ) -> Result<Self> {
        let total = t_observed + horizon;
        if period == 0 || total % period != 0 {
            return Err(Error::Geometry(format!(
                "period {period} must divide T + F = {total}"
            )));
        }
        Self::new(n_series, period, total / period, window, horizon, stride)
    }
}

/// Applies the sliding operator to a series matrix.
///
/// Accepts either the full timeline (B*P columns) or the observed prefix
/// (B*P - F columns); missing future entries are written as zero. Row group
/// j holds blocks j*stride .. j*stride + window - 1 of every series, with
/// series stacked within the group.
pub fn apply_sliding<S: Scalar>(m: ArrayView2<'_, S>, g: &SlidingGeometry) -> Result<Array2<S>> {
    if m.nrows() != g.n_series() {
        return Err(Error::Dimension(format!(
            "expected {} series, got {} rows",
            g.n_series(),
            m.nrows()
        )));
    }
    let cols = m.ncols();
    if cols != g.total_len() && cols != g.observed_len() {
        return Err(Error::Geometry(format!(
            "series length {cols} matches neither T + F = {} nor T = {}",
            g.total_len(),
            g.observed_len()
        )));
    }
    let (rows_out, cols_out) = g.slid_shape();
    let mut out = Array2::zeros((rows_out, cols_out));
    for j in 0..g.row_groups() {
        let t0 = j * g.stride() * g.period();
        for i in 0..g.n_series() {
            for c in 0..cols_out {
                let t = t0 + c;
                if t < cols {
                    out[[j * g.n_series() + i, c]] = m[[i, t]];
                }
            }
        }
    }
    Ok(out)
}

/// Inverts the sliding operator on a complete slid matrix.
///
/// When a timestamp appears in several row groups the value is read from the
/// last group containing it, matching the forecast-extraction convention.
pub fn unslide<S: Scalar>(x: ArrayView2<'_, S>, g: &SlidingGeometry) -> Result<Array2<S>> {
    if x.dim() != g.slid_shape() {
        return Err(Error::Dimension(format!(
            "slid matrix shape {:?} does not match geometry {:?}",
            x.dim(),
            g.slid_shape()
        )));
    }
    let j_max = g.row_groups() - 1;
    let mut out = Array2::zeros((g.n_series(), g.total_len()));
    for b in 0..g.n_blocks() {
        let j = (b / g.stride()).min(j_max);
        let offset = (b - j * g.stride()) * g.period();
        for i in 0..g.n_series() {
            for t in 0..g.period() {
                out[[i, b * g.period() + t]] = x[[j * g.n_series() + i, offset + t]];
            }
        }
    }
    Ok(out)
}

/// A completion problem: the observed matrix with a hidden bottom-right
/// rectangle. Hidden cells are stored as explicit zeros; the rectangle keeps
/// them distinguishable from observed zeros.
#[derive(Debug, Clone)]
pub struct MaskedProblem<S: Scalar> {
    observed: Array2<S>,
    hidden_rows: usize,
    hidden_cols: usize,
    geometry: Option<SlidingGeometry>,
}

impl<S: Scalar> MaskedProblem<S> {
    /// Problem over `x` with the bottom-right `hidden_rows x hidden_cols`
    /// rectangle hidden. The rectangle cells of `x` are zeroed on ingest,
    /// so passing a fully known matrix hides its future block.
    pub fn new(mut x: Array2<S>, hidden_rows: usize, hidden_cols: usize) -> Result<Self> {
        if hidden_rows > x.nrows() || hidden_cols > x.ncols() {
            return Err(Error::Dimension(format!(
                "hidden rectangle {hidden_rows}x{hidden_cols} exceeds matrix {:?}",
                x.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("masked problem data".into()));
        }
        zero_rect(&mut x, hidden_rows, hidden_cols);
        Ok(Self {
            observed: x,
            hidden_rows,
            hidden_cols,
            geometry: None,
        })
    }

    /// Fully observed problem (identity mask).
    pub fn unmasked(x: Array2<S>) -> Result<Self> {
        Self::new(x, 0, 0)
    }

    /// Builds the completion problem for a series matrix under a sliding
    /// geometry. `m` may carry T (observed) or T + F (fully known) columns;
    /// in both cases the future block of the last row group is hidden.
    pub fn from_series(m: ArrayView2<'_, S>, g: SlidingGeometry) -> Result<Self> {
        let x = apply_sliding(m, &g)?;
        let mut p = Self::new(x, g.n_series(), g.horizon())?;
        p.geometry = Some(g);
        Ok(p)
    }

    pub fn observed(&self) -> ArrayView2<'_, S> {
        self.observed.view()
    }

    pub fn hidden_rows(&self) -> usize {
        self.hidden_rows
    }

    pub fn hidden_cols(&self) -> usize {
        self.hidden_cols
    }

    pub fn hidden_cell_count(&self) -> usize {
        self.hidden_rows * self.hidden_cols
    }

    pub fn is_masked(&self) -> bool {
        self.hidden_cell_count() > 0
    }

    pub fn geometry(&self) -> Option<&SlidingGeometry> {
        self.geometry.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.observed.dim()
    }

    fn check_shape(&self, x: ArrayView2<'_, S>) -> Result<()> {
        if x.dim() != self.observed.dim() {
            return Err(Error::Dimension(format!(
                "expected shape {:?}, got {:?}",
                self.observed.dim(),
                x.dim()
            )));
        }
        Ok(())
    }

    /// The mask operator T: copies `x` with hidden cells set to zero.
    pub fn apply_mask(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        self.check_shape(x)?;
        let mut out = x.to_owned();
        zero_rect(&mut out, self.hidden_rows, self.hidden_cols);
        Ok(out)
    }

    /// The complement T^perp: keeps only the hidden cells.
    pub fn apply_mask_complement(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        self.check_shape(x)?;
        let mut out = Array2::zeros(x.raw_dim());
        let (n, p) = x.dim();
        if self.hidden_rows > 0 && self.hidden_cols > 0 {
            let src = x.slice(s![n - self.hidden_rows.., p - self.hidden_cols..]);
            out.slice_mut(s![n - self.hidden_rows.., p - self.hidden_cols..])
                .assign(&src);
        }
        Ok(out)
    }

    /// The completion projection P_X: observed cells from the problem data,
    /// hidden cells from the product `w h`.
    pub fn completion_projection(
        &self,
        w: ArrayView2<'_, S>,
        h: ArrayView2<'_, S>,
    ) -> Result<Array2<S>> {
        let (n, p) = self.observed.dim();
        if w.nrows() != n || h.ncols() != p || w.ncols() != h.nrows() {
            return Err(Error::Dimension(format!(
                "w {:?} x h {:?} not conformable with observed {:?}",
                w.dim(),
                h.dim(),
                self.observed.dim()
            )));
        }
        let mut out = self.observed.clone();
        if self.hidden_rows > 0 && self.hidden_cols > 0 {
            let wh_block = w
                .slice(s![n - self.hidden_rows.., ..])
                .dot(&h.slice(s![.., p - self.hidden_cols..]));
            out.slice_mut(s![n - self.hidden_rows.., p - self.hidden_cols..])
                .assign(&wh_block);
        }
        Ok(out)
    }

    /// Overwrites the hidden rectangle of `n` with the matching block of the
    /// full product `wh`, leaving observed cells untouched.
    pub fn reproject(&self, n: &mut Array2<S>) {
        let (rows, cols) = n.dim();
        let obs = self
            .observed
            .slice(s![..rows - self.hidden_rows, ..])
            .to_owned();
        n.slice_mut(s![..rows - self.hidden_rows, ..]).assign(&obs);
        if self.hidden_rows > 0 {
            let obs_left = self
                .observed
                .slice(s![rows - self.hidden_rows.., ..cols - self.hidden_cols])
                .to_owned();
            n.slice_mut(s![rows - self.hidden_rows.., ..cols - self.hidden_cols])
                .assign(&obs_left);
        }
    }

    /// The four standard views of a matrix shaped like the observation.
    pub fn split_views(&self, x0: ArrayView2<'_, S>) -> Result<SplitViews<S>> {
        self.check_shape(x0)?;
        let (n, p) = x0.dim();
        let (hr, hc) = (self.hidden_rows, self.hidden_cols);

        let train = x0.slice(s![..n - hr, ..]).to_owned();
        let mut test = x0.slice(s![n - hr.., ..]).to_owned();
        if hr > 0 && hc > 0 {
            test.slice_mut(s![.., p - hc..]).fill(S::zero());
        }
        let past = x0.slice(s![.., ..p - hc]).to_owned();
        let mut future = x0.slice(s![.., p - hc..]).to_owned();
        if hr > 0 && hc > 0 {
            future.slice_mut(s![n - hr.., ..]).fill(S::zero());
        }
        Ok(SplitViews {
            train,
            test,
            past,
            future,
        })
    }

    /// Reads the hidden rectangle of a completed matrix back out as the
    /// N x F forecast block in series/timestamp order.
    pub fn extract_forecast(&self, completed: ArrayView2<'_, S>) -> Result<Array2<S>> {
        self.check_shape(completed)?;
        let (n, p) = completed.dim();
        Ok(completed
            .slice(s![n - self.hidden_rows.., p - self.hidden_cols..])
            .to_owned())
    }
}

/// Train/test/past/future views of an observation-shaped matrix.
#[derive(Debug, Clone)]
pub struct SplitViews<S: Scalar> {
    /// Rows above the hidden block, fully observed.
    pub train: Array2<S>,
    /// Rows of the hidden block, future columns zeroed.
    pub test: Array2<S>,
    /// All rows, columns before the hidden block.
    pub past: Array2<S>,
    /// Future columns, hidden rows zeroed.
    pub future: Array2<S>,
}

fn zero_rect<S: Scalar>(x: &mut Array2<S>, rows: usize, cols: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let (n, p) = x.dim();
    x.slice_mut(s![n - rows.., p - cols..]).fill(S::zero());
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_geometry() -> SlidingGeometry {
        // N=1, T+F=6, P=2, B=3, W=2, S=1, F=2.
        SlidingGeometry::new(1, 2, 3, 2, 2, 1).unwrap()
    }

    #[test]
    fn sliding_matches_definition_on_six_points() {
        let g = small_geometry();
        let m = array![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
        let x = apply_sliding(m.view(), &g).unwrap();
        assert_eq!(x, array![[1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0]]);
    }

    #[test]
    fn slid_shape_matches_electricity_weekly() {
        let g = SlidingGeometry::new(370, 4, 52, 5, 4, 1).unwrap();
        assert_eq!(g.slid_shape(), (17_760, 20));
        assert_eq!(g.row_groups(), 48);
    }

    #[test]
    fn unslide_inverts_sliding_on_full_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = SlidingGeometry::new(3, 2, 5, 3, 2, 1).unwrap();
        let m = Array2::from_shape_fn((3, 10), |_| rng.random_range(0.0..1.0));
        let x = apply_sliding(m.view(), &g).unwrap();
        let back = unslide(x.view(), &g).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unslide_inverts_with_stride_equal_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = SlidingGeometry::new(2, 3, 6, 2, 3, 2).unwrap();
        let m = Array2::from_shape_fn((2, 18), |_| rng.random_range(0.0..1.0));
        let x = apply_sliding(m.view(), &g).unwrap();
        let back = unslide(x.view(), &g).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn window_larger_than_blocks_rejected() {
        assert!(SlidingGeometry::new(1, 2, 3, 4, 2, 1).is_err());
    }

    #[test]
    fn indivisible_period_rejected() {
        assert!(SlidingGeometry::for_series(1, 5, 2, 3, 2, 1).is_err());
    }

    #[test]
    fn observed_input_pads_future_with_zeros() {
        let g = small_geometry();
        let m = array![[1.0, 2.0, 3.0, 4.0]];
        let x = apply_sliding(m.view(), &g).unwrap();
        assert_eq!(x, array![[1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 0.0, 0.0]]);
    }

    #[test]
    fn mask_zeroes_hidden_block() {
        let p = MaskedProblem::new(array![[1.0, 2.0], [3.0, 4.0]], 1, 1).unwrap();
        let masked = p.apply_mask(array![[1.0, 2.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(masked, array![[1.0, 2.0], [3.0, 0.0]]);
    }

    #[test]
    fn mask_is_idempotent_and_complement_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let p = MaskedProblem::new(x.clone(), 2, 2).unwrap();
        let once = p.apply_mask(x.view()).unwrap();
        let twice = p.apply_mask(once.view()).unwrap();
        assert_eq!(once, twice);
        let comp = p.apply_mask_complement(x.view()).unwrap();
        assert_eq!(&once + &comp, x);
    }

    #[test]
    fn completion_projection_identity_when_unmasked() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let p = MaskedProblem::unmasked(x.clone()).unwrap();
        let w = array![[1.0], [1.0]];
        let h = array![[9.0, 9.0]];
        assert_eq!(p.completion_projection(w.view(), h.view()).unwrap(), x);
    }

    #[test]
    fn completion_projection_satisfies_both_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(0.0..1.0));
        let p = MaskedProblem::new(x, 2, 2).unwrap();
        let w = Array2::from_shape_fn((5, 2), |_| rng.random_range(0.0..1.0));
        let h = Array2::from_shape_fn((2, 4), |_| rng.random_range(0.0..1.0));
        let n = p.completion_projection(w.view(), h.view()).unwrap();
        let wh = w.dot(&h);
        assert_eq!(p.apply_mask(n.view()).unwrap(), p.observed().to_owned());
        assert_eq!(
            p.apply_mask_complement(n.view()).unwrap(),
            p.apply_mask_complement(wh.view()).unwrap()
        );
    }

    #[test]
    fn split_views_on_two_by_two() {
        let x0 = array![[1.0, 2.0], [3.0, 4.0]];
        let p = MaskedProblem::new(x0.clone(), 1, 1).unwrap();
        let v = p.split_views(x0.view()).unwrap();
        assert_eq!(v.train, array![[1.0, 2.0]]);
        assert_eq!(v.test, array![[3.0, 0.0]]);
        assert_eq!(v.past, array![[1.0], [3.0]]);
        assert_eq!(v.future, array![[2.0], [0.0]]);
    }

    #[test]
    fn hidden_cell_never_leaks_into_views_and_mask_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x0 = Array2::from_shape_fn((5, 6), |_| rng.random_range(1.0..2.0));
        let p = MaskedProblem::new(x0.clone(), 2, 3).unwrap();
        let v = p.split_views(x0.view()).unwrap();
        // The hidden corner shows up zeroed in test and future views.
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(v.test[[r, 3 + c]], 0.0);
                assert_eq!(v.future[[3 + r, c]], 0.0);
            }
        }
        // Stacking train over test recovers the masked matrix.
        let masked = p.apply_mask(x0.view()).unwrap();
        for r in 0..3 {
            for c in 0..6 {
                assert_eq!(v.train[[r, c]], masked[[r, c]]);
            }
        }
        for r in 0..2 {
            for c in 0..6 {
                assert_eq!(v.test[[r, c]], masked[[3 + r, c]]);
            }
        }
    }

    #[test]
    fn extract_forecast_roundtrip_through_sliding() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g = SlidingGeometry::new(4, 3, 4, 2, 3, 1).unwrap();
        let full = Array2::from_shape_fn((4, 12), |_| rng.random_range(0.0..1.0));
        let p = MaskedProblem::from_series(full.view(), g).unwrap();
        let x0 = apply_sliding(full.view(), &g).unwrap();
        let fc = p.extract_forecast(x0.view()).unwrap();
        let truth = full.slice(s![.., 9..]).to_owned();
        assert_eq!(fc, truth);
    }

    #[test]
    fn zero_completion_gives_zero_forecast() {
        let g = small_geometry();
        let p = MaskedProblem::from_series(array![[1.0, 2.0, 3.0, 4.0]].view(), g).unwrap();
        let z = Array2::<f64>::zeros(p.shape());
        assert_eq!(
            p.extract_forecast(z.view()).unwrap(),
            Array2::zeros((1, 2))
        );
    }

    #[test]
    fn sliding_is_injective_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let g = SlidingGeometry::new(2, 2, 4, 2, 2, 1).unwrap();
        for _ in 0..50 {
            let a = Array2::from_shape_fn((2, 8), |_| rng.random_range(0.0..1.0));
            let mut b = a.clone();
            let i = rng.random_range(0..2);
            let j = rng.random_range(0..8);
            b[[i, j]] += 0.5;
            let xa = apply_sliding(a.view(), &g).unwrap();
            let xb = apply_sliding(b.view(), &g).unwrap();
            assert_ne!(xa, xb);
        }
    }

    #[test]
    fn every_timestamp_appears_in_some_row_group() {
        for (b, w, s) in [(6, 3, 1), (6, 2, 2), (9, 3, 3), (7, 4, 1)] {
            let g = SlidingGeometry::new(1, 2, b, w, 2, s).unwrap();
            let total = g.total_len();
            let m = Array2::from_shape_fn((1, total), |(_, t)| t as f64 + 1.0);
            let x = apply_sliding(m.view(), &g).unwrap();
            let mut seen = vec![false; total];
            for j in 0..g.row_groups() {
                for c in 0..g.window() * g.period() {
                    let t = j * g.stride() * g.period() + c;
                    assert_eq!(x[[j, c]], t as f64 + 1.0);
                    seen[t] = true;
                }
            }
            assert!(seen.iter().all(|&v| v), "uncovered timestamp for {b},{w},{s}");
            assert_eq!(g.row_groups(), (b - w) / s + 1);
        }
    }
}
