use std::io::Write;

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

use super::{PotThreshold, ScoreSeries};
use crate::error::{Error, Result};

/// A maximal run of timesteps whose score exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    /// First and last flagged row, inclusive.
    pub start: usize,
    pub end: usize,
    pub start_time: i64,
    pub end_time: i64,
    pub peak_index: usize,
    pub peak_score: f64,
    /// Target channels by descending error share at the peak.
    pub channels_ranked: Vec<String>,
    pub anomaly_type_id: usize,
}

impl AnomalyEvent {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, start: usize, end_inclusive: usize) -> bool {
        self.start <= end_inclusive && start <= self.end
    }
}

fn rank_channels(scores: &ScoreSeries, t: usize) -> Vec<String> {
    let mut idx: Vec<(usize, f64)> = (0..scores.n_channels())
        .filter_map(|c| scores.channel_error(t, c).map(|e| (c, e)))
        .collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.into_iter()
        .map(|(c, _)| scores.channel_names[c].clone())
        .collect()
}

/// Flag `S_t > tau` and merge consecutive flags into events.
pub fn detect(scores: &ScoreSeries, tau: f64, anomaly_type_id: usize) -> Vec<AnomalyEvent> {
    let mut events = Vec::new();
    let mut run: Option<(usize, usize, f64)> = None;
    let close =
        |events: &mut Vec<AnomalyEvent>, start: usize, end: usize, peak: usize, score: f64| {
            events.push(AnomalyEvent {
                start,
                end,
                start_time: scores.timestamps[start],
                end_time: scores.timestamps[end],
                peak_index: peak,
                peak_score: score,
                channels_ranked: rank_channels(scores, peak),
                anomaly_type_id,
            });
        };
    for (t, s) in scores.scores.iter().enumerate() {
        match (s.filter(|v| *v > tau), run.as_mut()) {
            (Some(v), Some((_, peak, best))) => {
                if v > *best {
                    *peak = t;
                    *best = v;
                }
            }
            (Some(v), None) => run = Some((t, t, v)),
            (None, Some(&mut (start, peak, best))) => {
                close(&mut events, start, t - 1, peak, best);
                run = None;
            }
            (None, None) => {}
        }
    }
    if let Some((start, peak, best)) = run {
        close(&mut events, start, scores.len() - 1, peak, best);
    }
    events
}

/// One line of the JSON event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub start: String,
    pub end: String,
    pub peak_time: String,
    pub start_index: usize,
    pub end_index: usize,
    pub peak_score: f64,
    pub tau: f64,
    pub fallback: bool,
    pub anomaly_type_id: usize,
    pub channels_ranked: Vec<String>,
}

pub(crate) fn iso8601(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.to_string())
}

impl EventRecord {
    pub fn new(event: &AnomalyEvent, scores: &ScoreSeries, threshold: &PotThreshold) -> Self {
        Self {
            start: iso8601(event.start_time),
            end: iso8601(event.end_time),
            peak_time: iso8601(scores.timestamps[event.peak_index]),
            start_index: event.start,
            end_index: event.end,
            peak_score: event.peak_score,
            tau: threshold.tau,
            fallback: threshold.fallback,
            anomaly_type_id: event.anomaly_type_id,
            channels_ranked: event.channels_ranked.clone(),
        }
    }
}

/// Write one JSON object per event, newline-terminated.
pub fn write_event_log<W: Write>(
    mut w: W,
    events: &[AnomalyEvent],
    scores: &ScoreSeries,
    threshold: &PotThreshold,
) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &EventRecord::new(e, scores, threshold))?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<event log>", e))?;
    }
    w.flush().map_err(|e| Error::io("<event log>", e))
}
