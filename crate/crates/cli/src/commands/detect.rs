use std::io::Write;
use std::path::Path;

use pulse_core::anomaly::{
    detect, fit_pot, score, write_scores_csv, AnomalyEvent, EventRecord, PotThreshold,
    ScoreOptions, ScoreSeries,
};
use pulse_core::model::{load_model, TrainedModel};
use pulse_core::par;

use super::{check_fraction, exec, load_patients, patient_dir, Patient};
use crate::args::{DetectArgs, ThresholdArgs};
use crate::failure::{create_dir, create_file, require_dir, write_file, Failure};

pub fn calibrate(values: &[f64], args: &ThresholdArgs) -> Result<PotThreshold, Failure> {
    if args.threshold_fallback_only {
        log::warn!("tail fit disabled: using the empirical (1 - q) quantile");
        return Ok(PotThreshold::fallback(values, args.q, args.u_quantile)?);
    }
    fit_pot(values, args.q, args.u_quantile).map_err(|e| match e {
        pulse_core::Error::Precondition(m) => Failure::usage(m),
        other => other.into(),
    })
}

struct TypeRun {
    type_id: usize,
    scores: ScoreSeries,
    threshold: Option<PotThreshold>,
    events: Vec<AnomalyEvent>,
}

fn run_patient(args: &DetectArgs, p: &Patient, several: bool) -> Result<String, Failure> {
    let model_dir = patient_dir(&args.model, &p.name, several);
    require_dir(&model_dir, "model directory")?;
    let model: TrainedModel = load_model(&model_dir)?;
    let frame = if model.params.n_context() == 0 && p.frame.n_context() > 0 {
        p.frame.without_context()
    } else {
        p.frame.clone()
    };
    let types = if args.anomaly_types.is_empty() {
        vec![model.config.anomaly_type_id]
    } else {
        args.anomaly_types.clone()
    };
    if let Some(bad) = types.iter().find(|t| **t >= model.config.anomaly_types) {
        return Err(Failure::usage(format!(
            "anomaly type {bad} outside the model's {} prompt rows",
            model.config.anomaly_types
        )));
    }
    let cut = ((frame.len() as f64) * args.calibration_fraction).round() as usize;
    let mut runs = Vec::new();
    for &type_id in &types {
        let opts = ScoreOptions {
            exec: exec(),
            anomaly_type_id: Some(type_id),
        };
        let scores = score(&model, &frame, opts).map_err(|e| Failure::pipeline(format!("{}: {e}", p.name)))?;
        runs.push(TypeRun {
            type_id,
            scores,
            threshold: None,
            events: Vec::new(),
        });
    }
    let calib = |r: &TypeRun| -> Vec<f64> { r.scores.scores[..cut].iter().flatten().copied().collect() };
    if args.per_type_thresholds || runs.len() == 1 {
        for r in &mut runs {
            r.threshold = Some(calibrate(&calib(r), &args.threshold)?);
        }
    } else {
        let pooled: Vec<f64> = runs.iter().flat_map(calib).collect();
        let th = calibrate(&pooled, &args.threshold)?;
        for r in &mut runs {
            r.threshold = Some(th.clone());
        }
    }
    for r in &mut runs {
        let tau = r.threshold.as_ref().map(|t| t.tau).unwrap_or(f64::INFINITY);
        r.events = detect(&r.scores, tau, r.type_id);
    }

    let dir = patient_dir(&args.out.out, &p.name, several);
    create_dir(&dir)?;
    write_outputs(&dir, &runs)?;
    Ok(summary(&p.name, &runs))
}

fn write_outputs(dir: &Path, runs: &[TypeRun]) -> Result<(), Failure> {
    let single = runs.len() == 1;
    let mut records: Vec<(usize, usize, EventRecord)> = Vec::new();
    let mut thresholds = Vec::new();
    for r in runs {
        let name = if single {
            "scores.csv".to_string()
        } else {
            format!("scores_type{}.csv", r.type_id)
        };
        write_scores_csv(create_file(&dir.join(name))?, &r.scores)?;
        let th = r.threshold.as_ref().expect("threshold calibrated");
        thresholds.push(serde_json::json!({ "anomaly_type_id": r.type_id, "threshold": th }));
        for e in &r.events {
            records.push((e.start, r.type_id, EventRecord::new(e, &r.scores, th)));
        }
    }
    records.sort_by_key(|(start, t, _)| (*start, *t));
    let mut log = create_file(&dir.join("events.jsonl"))?;
    for (_, _, rec) in &records {
        let line = serde_json::to_string(rec).map_err(Failure::pipeline)?;
        writeln!(log, "{line}").map_err(Failure::pipeline)?;
    }
    log.flush().map_err(Failure::pipeline)?;
    let json = serde_json::to_string_pretty(&thresholds).map_err(Failure::pipeline)?;
    write_file(&dir.join("threshold.json"), json + "\n")
}

fn summary(name: &str, runs: &[TypeRun]) -> String {
    let mut out = format!("{name}\n  {:>4}  {:>6}  {:>12}  {:>12}  {}\n", "type", "events", "peak", "tau", "fallback");
    for r in runs {
        let th = r.threshold.as_ref().expect("threshold calibrated");
        let peak = r.events.iter().map(|e| e.peak_score).fold(f64::NAN, f64::max);
        let peak = if peak.is_nan() { "-".to_string() } else { format!("{peak:.4}") };
        out.push_str(&format!(
            "  {:>4}  {:>6}  {:>12}  {:>12.4}  {}\n",
            r.type_id,
            r.events.len(),
            peak,
            th.tau,
            th.fallback
        ));
    }
    out.pop();
    out
}

pub fn run(args: DetectArgs) -> Result<(), Failure> {
    check_fraction(args.calibration_fraction, "--calibration-fraction")?;
    let patients = load_patients(&args.data)?;
    let several = patients.len() > 1;
    let results = par::map(exec(), &patients, |p| run_patient(&args, p, several));
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}
