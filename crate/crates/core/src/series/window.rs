use std::ops::Range;

use super::SeriesFrame;
use crate::error::{Error, Result};

/// Sliding-window geometry: `length = past_len + future_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
    pub past_len: usize,
    pub future_len: usize,
}

impl WindowSpec {
    pub fn new(length: usize, future_len: usize, stride: usize) -> Result<Self> {
        let spec = WindowSpec {
            length,
            stride,
            past_len: length.saturating_sub(future_len),
            future_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 16-sample windows, 8 past / 8 future.
    pub fn home() -> Self {
        WindowSpec {
            length: 16,
            stride: 1,
            past_len: 8,
            future_len: 8,
        }
    }

    /// 5-sample windows predicting the last sample.
    pub fn stress() -> Self {
        WindowSpec {
            length: 5,
            stride: 1,
            past_len: 4,
            future_len: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Precondition("window stride must be >= 1".into()));
        }
        if self.future_len == 0 {
            return Err(Error::Precondition("future length must be >= 1".into()));
        }
        if self.past_len + self.future_len != self.length {
            return Err(Error::Precondition(format!(
                "past {} + future {} != window length {}",
                self.past_len, self.future_len, self.length
            )));
        }
        Ok(())
    }

    /// Window start offsets for a series of `len` rows.
    pub fn offsets(&self, len: usize) -> impl Iterator<Item = usize> {
        let last = (len >= self.length).then(|| len - self.length);
        (0..=last.unwrap_or(0))
            .step_by(self.stride)
            .take(if last.is_some() { usize::MAX } else { 0 })
    }

    pub fn count(&self, len: usize) -> usize {
        if len < self.length {
            0
        } else {
            (len - self.length) / self.stride + 1
        }
    }
}

/// Borrowed view of rows `[start, start + len)` of a frame.
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    pub frame: &'a SeriesFrame,
    pub start: usize,
    pub len: usize,
}

impl<'a> WindowView<'a> {
    pub fn rows(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    /// Absolute time range covered, `[first, last]` in epoch seconds.
    pub fn time_range(&self) -> (i64, i64) {
        let ts = self.frame.timestamps();
        (ts[self.start], ts[self.start + self.len - 1])
    }

    pub fn get(&self, t: usize, c: usize) -> Option<f64> {
        self.frame.get(self.start + t, c)
    }
}

pub fn sliding_windows<'a>(frame: &'a SeriesFrame, spec: &WindowSpec) -> Vec<WindowView<'a>> {
    if spec.length > frame.len() {
        log::warn!(
            "window length {} exceeds series length {}; no windows",
            spec.length,
            frame.len()
        );
        return Vec::new();
    }
    spec.offsets(frame.len())
        .map(|start| WindowView {
            frame,
            start,
            len: spec.length,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::ChannelRole;

    fn frame(len: usize) -> SeriesFrame {
        SeriesFrame::new(
            (0..len as i64).collect(),
            vec!["x".into()],
            vec![ChannelRole::Target],
            vec![Some(0.0); len],
            1,
        )
        .unwrap()
    }

    #[test]
    fn window_counts() {
        let f = frame(10);
        assert_eq!(
            sliding_windows(&f, &WindowSpec::new(5, 1, 1).unwrap()).len(),
            6
        );
        let f = frame(16);
        assert_eq!(sliding_windows(&f, &WindowSpec::home()).len(), 1);
        let f = frame(100);
        let spec = WindowSpec::home().with_stride(8);
        let starts: Vec<_> = sliding_windows(&f, &spec).iter().map(|w| w.start).collect();
        assert_eq!(starts, (0..=84).step_by(8).collect::<Vec<_>>());
        assert_eq!(starts.len(), 11);
        assert_eq!(spec.count(100), 11);
    }

    #[test]
    fn too_long_window_is_empty() {
        let f = frame(4);
        assert!(sliding_windows(&f, &WindowSpec::home()).is_empty());
        assert_eq!(WindowSpec::home().offsets(4).count(), 0);
    }

    #[test]
    fn invalid_specs() {
        assert!(WindowSpec::new(16, 0, 1).is_err());
        assert!(WindowSpec::new(16, 8, 0).is_err());
        assert!(WindowSpec::new(4, 8, 1).is_err());
    }
}
