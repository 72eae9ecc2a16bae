//! Reconstruction-error scoring, extreme-value thresholds, event extraction
//! and percentile ground-truth labels.

mod events;
mod labels;
mod pot;
mod score;

pub use events::{detect, write_event_log, AnomalyEvent, EventRecord};
pub use labels::{percentile_labels, PercentileBounds};
pub use pot::{empirical_quantile, fit_gpd, fit_pot, Gpd, PotThreshold};
pub use score::{score, write_scores_csv, ScoreOptions, ScoreSeries};
