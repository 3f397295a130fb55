//! Windowed, standardized view of feature frames for the sequence models.

use std::collections::BTreeMap;

use crate::features::{FeatureCol, FeatureFrame};
use crate::numeric::Tensor2;

use super::DetectorError;

/// Channels the sequence models consume, in column order. Power is the
/// forecast target; the other three carry the balance/quality signals that
/// shift under tampering.
pub const DETECTOR_FEATURES: [FeatureCol; 4] = [
    FeatureCol::PowerKw,
    FeatureCol::ImbalanceKw,
    FeatureCol::PowerFactor,
    FeatureCol::LossPct,
];

/// Which chronological split an interval belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-meter standardized feature matrices plus chronological split
/// boundaries. Standardization (per feature, pooled across meters) uses
/// training rows only, so validation/test never leak into the scaling.
/// Windows are (meter, end) pairs covering rows [end−L, end) with the
/// forecast target at row `end`; a window never crosses a meter boundary.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    pub window_len: usize,
    pub feature_cols: Vec<FeatureCol>,
    /// Index of the forecast target column within `feature_cols`.
    pub power_col: usize,
    pub meters: Vec<String>,
    /// Standardized data per meter: rows = intervals, cols = features.
    pub data: Vec<Tensor2>,
    /// First validation index per meter (end of train region).
    pub train_end: Vec<usize>,
    /// First test index per meter (end of validation region).
    pub val_end: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WindowDataset {
    /// Build from per-meter frames with a (train, val, test) fraction split.
    pub fn build(
        frames: &BTreeMap<String, FeatureFrame>,
        window_len: usize,
        split: (f64, f64, f64),
    ) -> Result<Self, DetectorError> {
        Self::build_with_features(frames, window_len, split, &DETECTOR_FEATURES)
    }

    pub fn build_with_features(
        frames: &BTreeMap<String, FeatureFrame>,
        window_len: usize,
        split: (f64, f64, f64),
        feature_cols: &[FeatureCol],
    ) -> Result<Self, DetectorError> {
        if frames.is_empty() {
            return Err(DetectorError::EmptyWindows);
        }
        let (a, b, c) = split;
        if a <= 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(DetectorError::InvalidSplit { split: (a, b, c) });
        }
        let power_col = feature_cols
            .iter()
            .position(|&f| f == FeatureCol::PowerKw)
            .expect("detector features must include power");

        let meters: Vec<String> = frames.keys().cloned().collect();
        let f = feature_cols.len();

        // Pooled mean/std over training rows only.
        let mut sum = vec![0.0; f];
        let mut sumsq = vec![0.0; f];
        let mut count = 0usize;
        for m in &meters {
            let frame = &frames[m];
            let t1 = (frame.len() as f64 * a).floor() as usize;
            for (j, &col) in feature_cols.iter().enumerate() {
                for &v in &frame.col(col)[..t1] {
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
            }
            count += t1;
        }
        if count == 0 {
            return Err(DetectorError::EmptyWindows);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let std: Vec<f64> = sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / count as f64 - m * m).max(0.0);
                let s = var.sqrt();
                if s < 1e-9 {
                    1.0
                } else {
                    s
                }
            })
            .collect();

        let mut data = Vec::with_capacity(meters.len());
        let mut train_end = Vec::with_capacity(meters.len());
        let mut val_end = Vec::with_capacity(meters.len());
        for m in &meters {
            let frame = &frames[m];
            let n = frame.len();
            let mut t = Tensor2::zeros(n, f);
            for (j, &col) in feature_cols.iter().enumerate() {
                let vals = frame.col(col);
                for i in 0..n {
                    t.set(i, j, (vals[i] - mean[j]) / std[j]);
                }
            }
            data.push(t);
            train_end.push((n as f64 * a).floor() as usize);
            val_end.push((n as f64 * (a + b)).floor() as usize);
        }

        Ok(WindowDataset {
            window_len,
            feature_cols: feature_cols.to_vec(),
            power_col,
            meters,
            data,
            train_end,
            val_end,
            mean,
            std,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_cols.len()
    }

    /// All training windows as (meter index, target row) pairs: the window
    /// covers [end−L, end) and forecasts row `end`, which lies in the
    /// training region.
    pub fn train_windows(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (mi, t) in self.data.iter().enumerate() {
            let t1 = self.train_end[mi];
            for end in self.window_len..t1.min(t.rows) {
                out.push((mi, end));
            }
        }
        out
    }

    pub fn split_of(&self, meter_idx: usize, row: usize) -> Split {
        if row < self.train_end[meter_idx] {
            Split::Train
        } else if row < self.val_end[meter_idx] {
            Split::Val
        } else {
            Split::Test
        }
    }

    /// Copy window rows [end−L, end) into an L×F tensor.
    pub fn window(&self, meter_idx: usize, end: usize) -> Tensor2 {
        let src = &self.data[meter_idx];
        let l = self.window_len;
        let mut out = Tensor2::zeros(l, src.cols);
        for (r, row) in (end - l..end).enumerate() {
            out.row_mut(r).copy_from_slice(src.row(row));
        }
        out
    }

    /// Flattened window (row-major, length L·F) for the autoencoder.
    pub fn window_flat(&self, meter_idx: usize, end: usize) -> Vec<f64> {
        let src = &self.data[meter_idx];
        let l = self.window_len;
        let mut out = Vec::with_capacity(l * src.cols);
        for row in end - l..end {
            out.extend_from_slice(src.row(row));
        }
        out
    }

    pub fn target(&self, meter_idx: usize, end: usize) -> f64 {
        self.data[meter_idx].get(end, self.power_col)
    }
}
