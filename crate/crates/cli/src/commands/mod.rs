pub mod detect;
pub mod eval;
pub mod interpolate;
pub mod report;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use pulse_core::config::KvConfig;
use pulse_core::model::{GateKind, ModelConfig, TrainConfig};
use pulse_core::numerics::AdamConfig;
use pulse_core::par::Execution;
use pulse_core::series::{ingest_csv, interpolate, ChannelSchema, SeriesFrame};

use crate::args::{DataArgs, ModelArgs, WindowPreset};
use crate::failure::{require_file, Failure};

/// One input series after ingestion and gap filling.
pub struct Patient {
    pub name: String,
    pub frame: SeriesFrame,
}

pub fn exec() -> Execution {
    Execution::default()
}

pub fn load_schema(path: &Path) -> Result<ChannelSchema, Failure> {
    require_file(path, "schema file")?;
    ChannelSchema::load(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn load_patients(args: &DataArgs) -> Result<Vec<Patient>, Failure> {
    let schema = load_schema(&args.schema)?;
    for p in &args.data {
        require_file(p, "data file")?;
    }
    let mut out = Vec::with_capacity(args.data.len());
    for path in &args.data {
        let raw = ingest_csv(path, &schema).map_err(|e| Failure::pipeline(format!("{}: {e}", path.display())))?;
        let (frame, report) = interpolate(&raw, args.interp, args.max_gap);
        log::info!(
            "{}: filled {} gaps, left {} longer than {}",
            path.display(),
            report.filled.len(),
            report.skipped.len(),
            args.max_gap
        );
        out.push(Patient {
            name: stem(path),
            frame,
        });
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into())
}

/// `base` for a single patient, `base/<name>` for several.
pub fn patient_dir(base: &Path, name: &str, several: bool) -> PathBuf {
    if several {
        base.join(name)
    } else {
        base.to_path_buf()
    }
}

pub fn model_config(args: &ModelArgs) -> Result<ModelConfig, Failure> {
    let mut cfg = if args.full_scale {
        ModelConfig::full_scale()
    } else {
        ModelConfig::desk()
    };
    if args.window == WindowPreset::Stress {
        cfg = cfg.stress_window();
    }
    cfg.seed = args.seed;
    if args.vector_gates {
        cfg.gate = GateKind::Vector;
    }
    if let Some(path) = &args.model_config {
        require_file(path, "model config")?;
        let kv = KvConfig::load(path)?;
        apply_overrides(&mut cfg, &kv)?;
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ModelConfig, kv: &KvConfig) -> Result<(), Failure> {
    for (key, _) in kv.with_prefix("model") {
        let k = format!("model.{key}");
        match key {
            "blocks" => cfg.blocks = kv.require(&k)?,
            "heads" => cfg.heads = kv.require(&k)?,
            "d_model" => cfg.d_model = kv.require(&k)?,
            "patch_size" => cfg.patch_size = kv.require(&k)?,
            "window_len" => cfg.window_len = kv.require(&k)?,
            "future_len" => cfg.future_len = kv.require(&k)?,
            "prompt_count" => cfg.prompt_count = kv.require(&k)?,
            "anomaly_types" => cfg.anomaly_types = kv.require(&k)?,
            "anomaly_type_id" => cfg.anomaly_type_id = kv.require(&k)?,
            "ffn_hidden" => cfg.ffn_hidden = kv.require(&k)?,
            "dylinear_len" => cfg.dylinear_len = kv.require(&k)?,
            "dropout" => cfg.dropout = kv.require(&k)?,
            "seed" => cfg.seed = kv.require(&k)?,
            "channel_identity" => cfg.channel_identity = kv.require(&k)?,
            "mask_context_future" => cfg.mask_context_future = kv.require(&k)?,
            "gate" => {
                cfg.gate = match kv.require::<String>(&k)?.as_str() {
                    "scalar" => GateKind::Scalar,
                    "vector" => GateKind::Vector,
                    other => return Err(Failure::usage(format!("{k}: unknown gate kind {other:?}"))),
                }
            }
            other => return Err(Failure::usage(format!("unknown model setting model.{other}"))),
        }
    }
    Ok(())
}

pub fn train_config(args: &ModelArgs) -> Result<TrainConfig, Failure> {
    if !(args.lr > 0.0) || args.batch_size == 0 {
        return Err(Failure::usage("--lr must be positive and --batch-size at least 1"));
    }
    Ok(TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        stride: 1,
        exec: exec(),
        max_windows: args.max_windows,
    })
}

pub fn check_fraction(value: f64, flag: &str) -> Result<(), Failure> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("{flag} must lie in (0, 1], got {value}")))
    }
}
