use pulse_core::config::KvConfig;
use pulse_core::eval::{injected_labels, synth_patient, write_labels_csv, SynthProfile};
use pulse_core::series::{schema_of, write_csv};

use crate::args::SynthArgs;
use crate::failure::{create_dir, create_file, require_file, write_file, Failure};

pub fn run(args: SynthArgs) -> Result<(), Failure> {
    let mut profile = match (&args.preset, &args.profile) {
        (Some(name), None) => SynthProfile::preset(name)?,
        (None, Some(path)) => {
            require_file(path, "profile")?;
            SynthProfile::from_config(&KvConfig::load(path)?)?
        }
        (None, None) => SynthProfile::preset("stress")?,
        (Some(_), Some(_)) => return Err(Failure::usage("--preset and --profile are exclusive")),
    };
    if args.no_injections {
        profile = profile.without_injections();
    }
    if !(args.days > 0.0) {
        return Err(Failure::usage("--days must be positive"));
    }
    let (frame, injections) = synth_patient(&profile, args.days, args.seed)?;
    let out = &args.out.out;
    create_dir(out)?;
    write_csv(create_file(&out.join("data.csv"))?, &frame)?;
    write_file(&out.join("schema.cfg"), schema_of(&frame).to_config().render())?;
    write_file(&out.join("profile.cfg"), profile.to_config().render())?;
    let labels = injected_labels(frame.len(), &injections);
    write_labels_csv(create_file(&out.join("labels.csv"))?, frame.timestamps(), &labels)?;
    let json = serde_json::to_string_pretty(&injections).map_err(Failure::pipeline)?;
    write_file(&out.join("injections.json"), json + "\n")?;
    println!(
        "{} rows x {} channels, {} injected events, {} missing cells -> {}",
        frame.len(),
        frame.width(),
        injections.len(),
        frame.missing_count(),
        out.display()
    );
    Ok(())
}
