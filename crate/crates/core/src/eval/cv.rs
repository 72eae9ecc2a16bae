use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::anomaly::{fit_pot, score, PotThreshold, ScoreOptions};
use crate::error::{Error, Result};
use crate::model::{train, ModelConfig, TrainConfig};
use crate::par::{self, Execution};
use crate::series::SeriesFrame;

/// Point-wise confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn confusion(predicted: &[bool], labels: &[bool]) -> Confusion {
    let mut c = Confusion::default();
    for (p, l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn fnr(&self) -> f64 {
        ratio(self.fn_, self.tp + self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub start: usize,
    pub len: usize,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    /// `None` when the fold has no positive labels.
    pub f1: Option<f64>,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation; `NaN` for no values.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldMetrics>,
    /// Folds whose F1 is undefined; excluded from every summary.
    pub excluded: Vec<usize>,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub fpr: Summary,
    pub fnr: Summary,
}

/// Produces point-wise flags for a test block after fitting on the
/// surrounding training blocks.
pub trait FoldDetector: Sync {
    fn fit_predict(&self, train: &[SeriesFrame], test: &SeriesFrame) -> Result<Vec<bool>>;
}

impl<F> FoldDetector for F
where
    F: Fn(&[SeriesFrame], &SeriesFrame) -> Result<Vec<bool>> + Sync,
{
    fn fit_predict(&self, train: &[SeriesFrame], test: &SeriesFrame) -> Result<Vec<bool>> {
        self(train, test)
    }
}

/// Train the imputation model, calibrate POT on the training scores, flag
/// `S_t > tau` on the test block.
#[derive(Debug, Clone)]
pub struct ModelDetector {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub q: f64,
    pub u_quantile: f64,
    pub score_exec: Execution,
}

impl ModelDetector {
    pub fn calibrate(
        &self,
        train_frames: &[SeriesFrame],
    ) -> Result<(crate::model::TrainedModel, PotThreshold)> {
        let out = train(train_frames, &self.model, &self.train)?;
        let opts = ScoreOptions {
            exec: self.score_exec,
            anomaly_type_id: None,
        };
        let mut calib = Vec::new();
        for f in train_frames {
            if f.len() >= self.model.window_len {
                calib.extend(score(&out.model, f, opts)?.values());
            }
        }
        let threshold = fit_pot(&calib, self.q, self.u_quantile)?;
        Ok((out.model, threshold))
    }
}

impl FoldDetector for ModelDetector {
    fn fit_predict(&self, train_frames: &[SeriesFrame], test: &SeriesFrame) -> Result<Vec<bool>> {
        let (model, threshold) = self.calibrate(train_frames)?;
        let opts = ScoreOptions {
            exec: self.score_exec,
            anomaly_type_id: None,
        };
        let scores = score(&model, test, opts)?;
        Ok(scores
            .scores
            .iter()
            .map(|s| s.is_some_and(|v| v > threshold.tau))
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KFoldOptions {
    pub folds: usize,
    pub exec: Execution,
    /// Hide labelled rows' targets from the detector during fitting, so the
    /// model and its threshold only see normal behaviour.
    pub fit_on_normal: bool,
}

impl Default for KFoldOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            exec: Execution::default(),
            fit_on_normal: true,
        }
    }
}

/// Blocked k-fold evaluation: fold `i` tests on the `i`-th contiguous block
/// and trains on the blocks before and after it, kept as separate segments.
pub fn kfold_f1(
    frame: &SeriesFrame,
    labels: &[bool],
    detector: &dyn FoldDetector,
    opts: KFoldOptions,
) -> Result<EvalReport> {
    let KFoldOptions {
        folds,
        exec,
        fit_on_normal,
    } = opts;
    if labels.len() != frame.len() {
        return Err(Error::Precondition(format!(
            "{} labels for {} rows",
            labels.len(),
            frame.len()
        )));
    }
    if folds < 2 || folds > frame.len() {
        return Err(Error::Precondition(format!(
            "cannot split {} rows into {folds} folds",
            frame.len()
        )));
    }
    let len = frame.len();
    let bounds: Vec<(usize, usize)> = (0..folds)
        .map(|i| (i * len / folds, (i + 1) * len / folds))
        .collect();
    let results = par::map(exec, &bounds, |&(start, end)| -> Result<Confusion> {
        let fit_frame = |a: usize, b: usize| {
            let part = frame.slice_rows(a, b - a);
            if fit_on_normal {
                part.mask_target_rows(&labels[a..b])
            } else {
                part
            }
        };
        let mut train_frames = Vec::new();
        if start > 0 {
            train_frames.push(fit_frame(0, start));
        }
        if end < len {
            train_frames.push(fit_frame(end, len));
        }
        let test = frame.slice_rows(start, end - start);
        let flags = detector.fit_predict(&train_frames, &test)?;
        if flags.len() != test.len() {
            return Err(Error::Precondition(format!(
                "detector returned {} flags for {} rows",
                flags.len(),
                test.len()
            )));
        }
        Ok(confusion(&flags, &labels[start..end]))
    });
    let mut fold_metrics = Vec::with_capacity(folds);
    let mut excluded = Vec::new();
    for (i, (c, &(start, end))) in results.into_iter().zip(&bounds).enumerate() {
        let c = c?;
        let positives = c.tp + c.fn_;
        if positives == 0 {
            log::warn!("fold {i} has no positive labels; F1 undefined, fold excluded");
            excluded.push(i);
        }
        fold_metrics.push(FoldMetrics {
            fold: i,
            start,
            len: end - start,
            confusion: c,
            precision: c.precision(),
            recall: c.recall(),
            f1: (positives > 0).then(|| c.f1()),
            fpr: c.fpr(),
            fnr: c.fnr(),
        });
    }
    let kept: Vec<&FoldMetrics> = fold_metrics.iter().filter(|f| f.f1.is_some()).collect();
    let col =
        |g: fn(&FoldMetrics) -> f64| Summary::of(&kept.iter().map(|f| g(f)).collect::<Vec<_>>());
    Ok(EvalReport {
        precision: col(|f| f.precision),
        recall: col(|f| f.recall),
        f1: col(|f| f.f1.unwrap_or(f64::NAN)),
        fpr: col(|f| f.fpr),
        fnr: col(|f| f.fnr),
        folds: fold_metrics,
        excluded,
    })
}

/// `timestamp,label` rows with labels 0 or 1.
pub fn write_labels_csv<W: Write>(w: W, timestamps: &[i64], labels: &[bool]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "label"])?;
    for (t, l) in timestamps.iter().zip(labels) {
        out.write_record([t.to_string(), u8::from(*l).to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<labels>", e))
}

/// Read a label CSV and align it to `timestamps`; unlisted rows are 0.
pub fn read_labels_csv<R: Read>(r: R, timestamps: &[i64]) -> Result<Vec<bool>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut labels = vec![false; timestamps.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Config(format!("label row {}: expected timestamp,label", row + 1));
        let ts = rec
            .get(0)
            .and_then(crate::series::parse_timestamp)
            .ok_or_else(bad)?;
        let label = match rec.get(1).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(bad()),
        };
        if let Ok(i) = timestamps.binary_search(&ts) {
            labels[i] = label;
        }
    }
    Ok(labels)
}
