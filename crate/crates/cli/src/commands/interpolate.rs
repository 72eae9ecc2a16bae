use pulse_core::series::write_csv;

use super::{load_patients, patient_dir};
use crate::failure::{create_dir, create_file, Failure};
use crate::args::InterpolateArgs;

pub fn run(args: InterpolateArgs) -> Result<(), Failure> {
    let patients = load_patients(&args.data)?;
    let several = patients.len() > 1;
    for p in &patients {
        let dir = patient_dir(&args.out.out, &p.name, several);
        create_dir(&dir)?;
        let path = dir.join(format!("{}.interpolated.csv", p.name));
        write_csv(create_file(&path)?, &p.frame)?;
        println!(
            "{}: {} rows, {} cells still missing -> {}",
            p.name,
            p.frame.len(),
            p.frame.missing_count(),
            path.display()
        );
    }
    Ok(())
}
