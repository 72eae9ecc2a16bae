use std::fs::File;

use pulse_core::anomaly::{percentile_labels, PercentileBounds};
use pulse_core::eval::{kfold_f1, read_labels_csv, KFoldOptions, ModelDetector};

use super::{exec, load_patients, model_config, patient_dir, train_config};
use crate::args::EvalArgs;
use crate::failure::{create_dir, require_file, write_file, Failure};

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    let cfg = model_config(&args.model)?;
    let tcfg = train_config(&args.model)?;
    if let Some(path) = &args.labels {
        require_file(path, "label file")?;
    }
    if args.folds < 2 {
        return Err(Failure::usage("--folds must be at least 2"));
    }
    let patients = load_patients(&args.data)?;
    let several = patients.len() > 1;
    let detector = ModelDetector {
        model: cfg,
        train: tcfg,
        q: args.threshold.q,
        u_quantile: args.threshold.u_quantile,
        score_exec: exec(),
    };
    for p in &patients {
        let frame = if args.model.no_context {
            p.frame.without_context()
        } else {
            p.frame.clone()
        };
        let labels = match &args.labels {
            Some(path) => {
                let f = File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
                read_labels_csv(f, frame.timestamps())?
            }
            None => percentile_labels(&frame, PercentileBounds::default()),
        };
        let opts = KFoldOptions {
            folds: args.folds,
            exec: exec(),
            fit_on_normal: !args.fit_on_all,
        };
        let report = kfold_f1(&frame, &labels, &detector, opts)?;
        let dir = patient_dir(&args.out.out, &p.name, several);
        create_dir(&dir)?;
        let json = serde_json::to_string_pretty(&report).map_err(Failure::pipeline)?;
        write_file(&dir.join("eval_report.json"), json + "\n")?;
        println!(
            "{}: F1 {:.3} ± {:.3}  precision {:.3}  recall {:.3}  FPR {:.4}  FNR {:.4}  ({} folds, {} excluded)",
            p.name,
            report.f1.mean,
            report.f1.std,
            report.precision.mean,
            report.recall.mean,
            report.fpr.mean,
            report.fnr.mean,
            report.folds.len(),
            report.excluded.len()
        );
    }
    Ok(())
}
