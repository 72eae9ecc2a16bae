//! Multivariate series data model, ingestion, gap handling and
//! interpolation-quality metrics.

mod ingest;
mod interpolate;
mod metrics;
mod window;

pub use ingest::{
    ingest_csv, ingest_reader, parse_timestamp, schema_of, write_csv, ChannelSchema, SchemaRole,
};
pub use interpolate::{find_gaps, interpolate, Gap, InterpolationMethod, InterpolationReport};
pub use metrics::{dtw, mase, mase_multivariate};
pub use window::{sliding_windows, WindowSpec, WindowView};

use crate::error::{Error, Result};

/// Default upper bound on interpolated gap length, in samples.
pub const DEFAULT_MAX_GAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Target,
    Context,
}

/// Timestamped multivariate series on a uniform grid.
///
/// Channels are stored targets first, then context. Values are row-major
/// `T × (n + m)`. A masked cell holds `NaN`, but nothing downstream reads it:
/// the mask is authoritative.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    timestamps: Vec<i64>,
    values: Vec<f64>,
    missing: Vec<bool>,
    roles: Vec<ChannelRole>,
    names: Vec<String>,
    sample_period: i64,
}

impl SeriesFrame {
    /// Build a frame from row-major cells, `None` meaning missing.
    ///
    /// Channels may be given in any role order; they are reordered so that
    /// target channels come first (stable within each role).
    pub fn new(
        timestamps: Vec<i64>,
        names: Vec<String>,
        roles: Vec<ChannelRole>,
        cells: Vec<Option<f64>>,
        sample_period: i64,
    ) -> Result<Self> {
        let width = names.len();
        if roles.len() != width {
            return Err(Error::Precondition(format!(
                "{} channel names but {} roles",
                width,
                roles.len()
            )));
        }
        if cells.len() != timestamps.len() * width {
            return Err(Error::Precondition(format!(
                "expected {} cells for {} rows x {} channels, got {}",
                timestamps.len() * width,
                timestamps.len(),
                width,
                cells.len()
            )));
        }
        if !roles.contains(&ChannelRole::Target) {
            return Err(Error::NoTargets);
        }
        if sample_period <= 0 {
            return Err(Error::Precondition("sample period must be positive".into()));
        }
        for (row, pair) in timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != sample_period {
                return Err(Error::Precondition(format!(
                    "row {} breaks the uniform {}s grid",
                    row + 1,
                    sample_period
                )));
            }
        }

        let order: Vec<usize> = (0..width)
            .filter(|&c| roles[c] == ChannelRole::Target)
            .chain((0..width).filter(|&c| roles[c] == ChannelRole::Context))
            .collect();
        let rows = timestamps.len();
        let mut values = Vec::with_capacity(rows * width);
        let mut missing = Vec::with_capacity(rows * width);
        for t in 0..rows {
            for &c in &order {
                match cells[t * width + c] {
                    Some(v) if v.is_finite() => {
                        values.push(v);
                        missing.push(false);
                    }
                    _ => {
                        values.push(f64::NAN);
                        missing.push(true);
                    }
                }
            }
        }
        Ok(Self {
            timestamps,
            values,
            missing,
            roles: order.iter().map(|&c| roles[c]).collect(),
            names: order.iter().map(|&c| names[c].clone()).collect(),
            sample_period,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == ChannelRole::Target)
            .count()
    }

    pub fn n_context(&self) -> usize {
        self.width() - self.n_targets()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn sample_period(&self) -> i64 {
        self.sample_period
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_missing(&self, t: usize, c: usize) -> bool {
        self.missing[t * self.width() + c]
    }

    /// Observed value, or `None` if the cell is masked.
    pub fn get(&self, t: usize, c: usize) -> Option<f64> {
        let i = t * self.width() + c;
        (!self.missing[i]).then(|| self.values[i])
    }

    /// All cells of channel `c`, `None` where masked.
    pub fn channel(&self, c: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.get(t, c)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    pub(crate) fn set_observed(&mut self, t: usize, c: usize, v: f64) {
        let i = t * self.width() + c;
        self.values[i] = v;
        self.missing[i] = false;
    }

    /// Mark every target cell of the rows where `mask` holds as missing.
    pub fn mask_target_rows(&self, mask: &[bool]) -> SeriesFrame {
        let mut out = self.clone();
        let (w, n) = (self.width(), self.n_targets());
        for (t, _) in mask
            .iter()
            .enumerate()
            .take(self.len())
            .filter(|(_, m)| **m)
        {
            for c in 0..n {
                out.values[t * w + c] = f64::NAN;
                out.missing[t * w + c] = true;
            }
        }
        out
    }

    /// Rows `[start, start + len)` as a new frame.
    pub fn slice_rows(&self, start: usize, len: usize) -> SeriesFrame {
        let w = self.width();
        let end = (start + len).min(self.len());
        SeriesFrame {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values[start * w..end * w].to_vec(),
            missing: self.missing[start * w..end * w].to_vec(),
            roles: self.roles.clone(),
            names: self.names.clone(),
            sample_period: self.sample_period,
        }
    }

    /// Keep only the listed channels (by index), preserving target-first order.
    pub fn select_channels(&self, keep: &[usize]) -> Result<SeriesFrame> {
        let rows = self.len();
        let mut cells = Vec::with_capacity(rows * keep.len());
        for t in 0..rows {
            for &c in keep {
                cells.push(self.get(t, c));
            }
        }
        SeriesFrame::new(
            self.timestamps.clone(),
            keep.iter().map(|&c| self.names[c].clone()).collect(),
            keep.iter().map(|&c| self.roles[c]).collect(),
            cells,
            self.sample_period,
        )
    }

    /// Copy of the frame with all context channels removed.
    pub fn without_context(&self) -> SeriesFrame {
        let keep: Vec<usize> = (0..self.n_targets()).collect();
        self.select_channels(&keep)
            .expect("target channels always form a valid frame")
    }

    /// Split at `fraction` of the rows into (head, tail).
    pub fn split_at_fraction(&self, fraction: f64) -> (SeriesFrame, SeriesFrame) {
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let cut = cut.min(self.len());
        (
            self.slice_rows(0, cut),
            self.slice_rows(cut, self.len() - cut),
        )
    }
}

/// Masked cells compare equal regardless of their sentinel.
impl PartialEq for SeriesFrame {
    fn eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.names == other.names
            && self.roles == other.roles
            && self.sample_period == other.sample_period
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), m)| *m || a == b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_reorders_targets_first() {
        let frame = SeriesFrame::new(
            vec![0, 60],
            vec!["steps".into(), "HR".into()],
            vec![ChannelRole::Context, ChannelRole::Target],
            vec![Some(1.0), Some(70.0), None, Some(71.0)],
            60,
        )
        .unwrap();
        assert_eq!(frame.names(), &["HR".to_string(), "steps".to_string()]);
        assert_eq!(frame.get(0, 0), Some(70.0));
        assert!(frame.is_missing(1, 1));
        assert_eq!(frame.n_targets(), 1);
        assert_eq!(frame.n_context(), 1);
    }

    #[test]
    fn rejects_frames_without_targets() {
        let err = SeriesFrame::new(
            vec![0],
            vec!["CO2".into()],
            vec![ChannelRole::Context],
            vec![Some(400.0)],
            60,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoTargets));
    }

    #[test]
    fn rejects_irregular_grid() {
        let err = SeriesFrame::new(
            vec![0, 60, 180],
            vec!["HR".into()],
            vec![ChannelRole::Target],
            vec![Some(1.0); 3],
            60,
        );
        assert!(err.is_err());
    }
}
