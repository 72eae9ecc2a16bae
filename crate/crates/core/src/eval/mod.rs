//! Benchmark plumbing: beat detection and HR/HRV extraction, blocked
//! cross-validation with point-wise metrics, and synthetic patients.

mod beats;
mod cv;
mod synth;

pub use beats::{detect_beats, hr_hrv_windows, rmssd, BeatSeries, HrvWindows};
pub use cv::{
    confusion, kfold_f1, read_labels_csv, write_labels_csv, Confusion, EvalReport, FoldDetector,
    FoldMetrics, KFoldOptions, ModelDetector, Summary,
};
pub use synth::{
    injected_labels, synth_patient, ChannelProfile, Injection, InjectionKind, InjectionPlan,
    SynthProfile,
};
