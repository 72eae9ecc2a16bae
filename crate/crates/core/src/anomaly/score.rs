use std::io::Write;

use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::par::{self, Execution};
use crate::series::{sliding_windows, SeriesFrame};

/// Per-timestep anomaly scores.
///
/// `scores[t]` is `None` where no window's future segment observed a target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub timestamps: Vec<i64>,
    pub scores: Vec<Option<f64>>,
    /// Windows contributing to each timestep.
    pub coverage: Vec<u32>,
    /// Coverage-averaged squared error, row-major `T × n`; `NaN` where unobserved.
    pub channel_errors: Vec<f64>,
    pub channel_names: Vec<String>,
    pub start_offset: usize,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    /// All defined scores, in time order.
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }

    pub fn channel_error(&self, t: usize, c: usize) -> Option<f64> {
        let v = self.channel_errors[t * self.n_channels() + c];
        (!v.is_nan()).then_some(v)
    }

    /// Restrict to rows `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> ScoreSeries {
        let n = self.n_channels();
        let scores = self.scores[start..start + len].to_vec();
        let start_offset = scores.iter().position(Option::is_some).unwrap_or(len);
        ScoreSeries {
            timestamps: self.timestamps[start..start + len].to_vec(),
            scores,
            coverage: self.coverage[start..start + len].to_vec(),
            channel_errors: self.channel_errors[start * n..(start + len) * n].to_vec(),
            channel_names: self.channel_names.clone(),
            start_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    pub exec: Execution,
    /// Prompt row to condition on; the model's configured row when `None`.
    pub anomaly_type_id: Option<usize>,
}

/// Slide stride-1 windows over `frame`, reconstruct each masked future and
/// average the squared errors that land on each timestep.
pub fn score(model: &TrainedModel, frame: &SeriesFrame, opts: ScoreOptions) -> Result<ScoreSeries> {
    model.check_frame(frame)?;
    if !model.params.is_trained() {
        return Err(Error::Untrained);
    }
    let mut model_ref = std::borrow::Cow::Borrowed(model);
    if let Some(id) = opts.anomaly_type_id {
        if id != model.config.anomaly_type_id {
            model_ref.to_mut().config.anomaly_type_id = id;
        }
    }
    let model = model_ref.as_ref();
    let cfg = &model.config;
    let n = frame.n_targets();
    let views = sliding_windows(frame, &cfg.window_spec(1));
    let per_window = par::map(opts.exec, &views, |view| -> Result<Option<Vec<f64>>> {
        let input = model.standardize(view);
        let (truth, observed) = input.future_targets(cfg.future_len);
        if !observed.iter().any(|o| *o) {
            return Ok(None);
        }
        let xhat = model.impute_input(&input)?;
        Ok(Some(
            xhat.data()
                .iter()
                .zip(&truth)
                .zip(&observed)
                .map(|((p, y), o)| if *o { (p - y).powi(2) } else { f64::NAN })
                .collect(),
        ))
    });

    let len = frame.len();
    let mut sum = vec![0.0; len * n];
    let mut count = vec![0u32; len * n];
    let mut coverage = vec![0u32; len];
    for (view, errs) in views.iter().zip(per_window) {
        let Some(errs) = errs? else { continue };
        let base = view.start + cfg.window_len - cfg.future_len;
        for (j, row) in errs.chunks(n).enumerate() {
            let t = base + j;
            let mut any = false;
            for (c, e) in row.iter().enumerate() {
                if !e.is_nan() {
                    sum[t * n + c] += e;
                    count[t * n + c] += 1;
                    any = true;
                }
            }
            coverage[t] += u32::from(any);
        }
    }
    let channel_errors: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, k)| if *k > 0 { s / f64::from(*k) } else { f64::NAN })
        .collect();
    let scores: Vec<Option<f64>> = channel_errors
        .chunks(n)
        .map(|row| {
            let seen: Vec<f64> = row.iter().copied().filter(|e| !e.is_nan()).collect();
            (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
        })
        .collect();
    if let Some(bad) = scores.iter().flatten().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            stage: "score".into(),
            detail: format!("score {bad}"),
        });
    }
    let start_offset = scores.iter().position(Option::is_some).unwrap_or(len);
    Ok(ScoreSeries {
        timestamps: frame.timestamps().to_vec(),
        scores,
        coverage,
        channel_errors,
        channel_names: frame.names()[..n].to_vec(),
        start_offset,
    })
}

/// `timestamp,score,coverage,err_<channel>...`; undefined cells are empty.
pub fn write_scores_csv<W: Write>(w: W, scores: &ScoreSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string(), "score".into(), "coverage".into()];
    header.extend(scores.channel_names.iter().map(|c| format!("err_{c}")));
    out.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
    for t in 0..scores.len() {
        let mut row = vec![
            scores.timestamps[t].to_string(),
            fmt(scores.scores[t]),
            scores.coverage[t].to_string(),
        ];
        row.extend((0..scores.n_channels()).map(|c| fmt(scores.channel_error(t, c))));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}
