use crate::error::{Error, Result};
use crate::series::{ChannelRole, SeriesFrame};

/// Accepted inter-beat interval range, seconds (exclusive).
pub const MIN_IBI: f64 = 0.25;
pub const MAX_IBI: f64 = 3.0;
const REFRACTORY: f64 = 0.25;
/// MAD multiplier in the adaptive threshold.
const MAD_GAIN: f64 = 1.5;
const STAT_WINDOW_S: f64 = 2.0;
const PERIODICITY_SEGMENT_S: f64 = 8.0;
const PERIODICITY_MIN: f64 = 0.5;

/// Detected heartbeat times in seconds from the start of the waveform.
///
/// Consecutive beats further apart than [`MAX_IBI`] mark a break in the
/// recording and do not form an interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeatSeries {
    pub beat_times: Vec<f64>,
}

impl BeatSeries {
    pub fn new(mut beat_times: Vec<f64>) -> Self {
        beat_times.sort_by(f64::total_cmp);
        beat_times.dedup();
        Self { beat_times }
    }

    pub fn len(&self) -> usize {
        self.beat_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beat_times.is_empty()
    }

    /// Valid inter-beat intervals as `(end_time, interval)` pairs.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.beat_times
            .windows(2)
            .map(|w| (w[1], w[1] - w[0]))
            .filter(|(_, d)| *d > MIN_IBI && *d < MAX_IBI)
            .collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Adaptive threshold, recomputed every quarter second over a centred window.
fn thresholds(x: &[f64], rate: f64) -> Vec<f64> {
    let half = ((STAT_WINDOW_S * rate) / 2.0) as usize;
    let hop = ((rate / 4.0) as usize).max(1);
    let mut out = vec![0.0; x.len()];
    let mut buf = Vec::with_capacity(2 * half + 1);
    for start in (0..x.len()).step_by(hop) {
        let centre = (start + hop / 2).min(x.len() - 1);
        let lo = centre.saturating_sub(half);
        let hi = (centre + half + 1).min(x.len());
        buf.clear();
        buf.extend_from_slice(&x[lo..hi]);
        let med = median(&mut buf);
        let max = buf.last().copied().unwrap_or(med);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median(&mut buf);
        let thr = (med + MAD_GAIN * mad).max(med + 0.5 * (max - med));
        let end = (start + hop).min(x.len());
        out[start..end].iter_mut().for_each(|t| *t = thr);
    }
    out
}

/// Highest normalised autocorrelation over plausible beat lags.
fn periodicity(seg: &[f64], rate: f64) -> f64 {
    let n = seg.len();
    let mean = seg.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = seg.iter().map(|v| v - mean).collect();
    let var: f64 = c.iter().map(|v| v * v).sum();
    if var <= 0.0 {
        return 0.0;
    }
    let min_lag = (MIN_IBI * rate).ceil() as usize;
    let max_lag = ((2.0 * rate) as usize).min(n / 2);
    (min_lag..=max_lag)
        .map(|lag| {
            let s: f64 = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
            s / var * n as f64 / (n - lag) as f64
        })
        .fold(0.0, f64::max)
}

/// Find heartbeats in a pulse waveform sampled at `rate_hz`.
///
/// Peaks are local maxima above an adaptive threshold, at least 250 ms apart
/// (the larger of two close peaks wins). Stretches without a periodic
/// component are rejected wholesale, and beats that would create an interval
/// shorter than the physiological minimum are dropped.
pub fn detect_beats(raw: &[f64], rate_hz: f64) -> Result<BeatSeries> {
    if !(rate_hz >= 32.0) {
        return Err(Error::Precondition(format!(
            "sample rate {rate_hz} Hz below 32 Hz"
        )));
    }
    if raw.len() < 3 {
        return Ok(BeatSeries::default());
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let spread = raw.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        log::warn!("flat waveform: no beats");
        return Ok(BeatSeries::default());
    }
    let thr = thresholds(raw, rate_hz);
    let seg_len = (PERIODICITY_SEGMENT_S * rate_hz) as usize;
    let periodic: Vec<bool> = raw
        .chunks(seg_len)
        .map(|s| s.len() * 2 >= seg_len && periodicity(s, rate_hz) >= PERIODICITY_MIN)
        .collect();

    let refractory = (REFRACTORY * rate_hz).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..raw.len() - 1 {
        if !(raw[i] > raw[i - 1] && raw[i] >= raw[i + 1] && raw[i] > thr[i]) {
            continue;
        }
        if !periodic[i / seg_len] {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if raw[i] > raw[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    let mut beats: Vec<f64> = Vec::with_capacity(peaks.len());
    for p in peaks {
        let t = p as f64 / rate_hz;
        if beats.last().is_none_or(|last| t - last > MIN_IBI) {
            beats.push(t);
        }
    }
    Ok(BeatSeries { beat_times: beats })
}

/// Root mean square of successive differences, in the input's units.
pub fn rmssd(intervals: &[f64]) -> Option<f64> {
    if intervals.len() < 2 {
        return None;
    }
    let s: f64 = intervals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Some((s / (intervals.len() - 1) as f64).sqrt())
}

/// Sliding-window HR/HRV extraction settings, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvWindows {
    pub step: u32,
    pub window: u32,
}

impl Default for HrvWindows {
    fn default() -> Self {
        Self {
            step: 10,
            window: 60,
        }
    }
}

/// HR (bpm) and RMSSD (ms) over sliding windows covering `[0, duration_s]`.
///
/// Each row is stamped with its window's end, `start_epoch + end`. A window
/// needs two beats for HR and two intervals for RMSSD; otherwise the cell is
/// missing.
pub fn hr_hrv_windows(
    beats: &BeatSeries,
    duration_s: f64,
    start_epoch: i64,
    cfg: HrvWindows,
) -> Result<SeriesFrame> {
    if cfg.step == 0 || cfg.window == 0 {
        return Err(Error::Precondition(
            "step and window must be positive".into(),
        ));
    }
    let intervals = beats.intervals();
    let mut timestamps = Vec::new();
    let mut cells = Vec::new();
    let mut end = cfg.window as f64;
    while end <= duration_s + 1e-9 {
        let start = end - cfg.window as f64;
        // an interval belongs to the window when both of its beats do
        let ibis: Vec<f64> = intervals
            .iter()
            .filter(|(t, d)| *t <= end && t - d >= start)
            .map(|(_, d)| *d)
            .collect();
        let hr = (!ibis.is_empty()).then(|| 60.0 * ibis.len() as f64 / ibis.iter().sum::<f64>());
        let hrv = rmssd(&ibis).map(|v| v * 1000.0);
        timestamps.push(start_epoch + end.round() as i64);
        cells.push(hr);
        cells.push(hrv);
        end += cfg.step as f64;
    }
    SeriesFrame::new(
        timestamps,
        vec!["hr".into(), "hrv".into()],
        vec![ChannelRole::Target, ChannelRole::Target],
        cells,
        i64::from(cfg.step),
    )
}
