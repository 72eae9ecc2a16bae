use pulse_core::model::{save_model, train};
use pulse_core::par;

use super::{check_fraction, exec, load_patients, model_config, patient_dir, train_config};
use crate::args::TrainArgs;
use crate::failure::Failure;

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let cfg = model_config(&args.model)?;
    let tcfg = train_config(&args.model)?;
    check_fraction(args.model.train_fraction, "--train-fraction")?;
    let patients = load_patients(&args.data)?;
    let several = patients.len() > 1;
    let results = par::map(exec(), &patients, |p| -> Result<String, Failure> {
        let frame = if args.model.no_context {
            p.frame.without_context()
        } else {
            p.frame.clone()
        };
        let (train_part, _) = frame.split_at_fraction(args.model.train_fraction);
        let out = train(&[train_part], &cfg, &tcfg).map_err(|e| Failure::pipeline(format!("{}: {e}", p.name)))?;
        let dir = patient_dir(&args.out.out, &p.name, several);
        let files = save_model(&out.model, &dir)?;
        let trace: Vec<String> = out.loss_trace.iter().map(|l| format!("{l:.5}")).collect();
        Ok(format!(
            "{}: {} windows, loss [{}] -> {}",
            p.name,
            out.windows,
            trace.join(", "),
            files.checkpoint.display()
        ))
    });
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}
