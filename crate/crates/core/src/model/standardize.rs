use crate::series::SeriesFrame;

/// Per-channel affine scaling fitted on observed training cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Below this a channel is treated as constant and only centred.
const MIN_STD: f64 = 1e-8;

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn fit(frames: &[SeriesFrame]) -> Self {
        let width = frames.first().map_or(0, |f| f.width());
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let mut count = vec![0usize; width];
        for frame in frames {
            for t in 0..frame.len() {
                for c in 0..width {
                    if let Some(v) = frame.get(t, c) {
                        sum[c] += v;
                        sq[c] += v * v;
                        count[c] += 1;
                    }
                }
            }
        }
        let mut mean = vec![0.0; width];
        let mut std = vec![1.0; width];
        for c in 0..width {
            if count[c] == 0 {
                continue;
            }
            let n = count[c] as f64;
            mean[c] = sum[c] / n;
            let var = (sq[c] / n - mean[c] * mean[c]).max(0.0);
            if var.sqrt() > MIN_STD * mean[c].abs().max(1.0) {
                std[c] = var.sqrt();
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, c: usize, v: f64) -> f64 {
        (v - self.mean[c]) / self.std[c]
    }

    pub fn invert(&self, c: usize, z: f64) -> f64 {
        z * self.std[c] + self.mean[c]
    }
}
