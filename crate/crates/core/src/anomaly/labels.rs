use crate::series::SeriesFrame;

/// Per-channel nearest-rank bounds; values strictly outside are breaches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentileBounds {
    pub low: f64,
    pub high: f64,
}

impl Default for PercentileBounds {
    fn default() -> Self {
        Self {
            low: 0.03,
            high: 0.97,
        }
    }
}

/// Label a timestep if any target channel lies below its `low` percentile or
/// above its `high` percentile. Missing cells never breach.
pub fn percentile_labels(frame: &SeriesFrame, bounds: PercentileBounds) -> Vec<bool> {
    let mut labels = vec![false; frame.len()];
    for c in 0..frame.n_targets() {
        let mut sorted: Vec<f64> = frame.channel(c).into_iter().flatten().collect();
        if sorted.is_empty() {
            continue;
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let lo_idx = ((bounds.low * n + 1e-9).floor() as usize).min(sorted.len() - 1);
        let hi_idx = ((bounds.high * n - 1e-9).ceil() as usize).clamp(1, sorted.len()) - 1;
        let (lo, hi) = (sorted[lo_idx], sorted[hi_idx]);
        for (t, label) in labels.iter_mut().enumerate() {
            if let Some(v) = frame.get(t, c) {
                *label |= v < lo || v > hi;
            }
        }
    }
    labels
}
