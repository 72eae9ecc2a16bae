use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::{GateKind, ModelConfig, ModelParams, Standardizer, TrainedModel};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::numerics::{read_checkpoint, write_checkpoint, Tensor};

/// The two files that make up a saved model directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFiles {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
}

impl ModelFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            checkpoint: dir.join("model.ckpt"),
            manifest: dir.join("model.manifest"),
        }
    }
}

fn manifest(model: &TrainedModel) -> KvConfig {
    let c = &model.config;
    let mut kv = KvConfig::new();
    kv.set("model.blocks", c.blocks);
    kv.set("model.heads", c.heads);
    kv.set("model.d_model", c.d_model);
    kv.set("model.patch_size", c.patch_size);
    kv.set("model.window_len", c.window_len);
    kv.set("model.future_len", c.future_len);
    kv.set("model.prompt_count", c.prompt_count);
    kv.set("model.anomaly_types", c.anomaly_types);
    kv.set("model.anomaly_type_id", c.anomaly_type_id);
    kv.set("model.ffn_hidden", c.ffn_hidden);
    kv.set("model.dylinear_len", c.dylinear_len);
    kv.set("model.dropout", c.dropout);
    kv.set("model.seed", c.seed);
    kv.set(
        "model.gate",
        match c.gate {
            GateKind::Scalar => "scalar",
            GateKind::Vector => "vector",
        },
    );
    kv.set("model.channel_identity", c.channel_identity);
    kv.set("model.mask_context_future", c.mask_context_future);
    kv.set("data.n_targets", model.params.n_targets());
    kv.set("data.n_context", model.params.n_context());
    let trace: Vec<String> = model.loss_trace.iter().map(|l| format!("{l:e}")).collect();
    kv.set("train.loss_trace", trace.join(","));
    for (i, name) in model.channel_names.iter().enumerate() {
        kv.set(&format!("channel.{i}"), name);
    }
    kv
}

fn config_from(kv: &KvConfig) -> Result<ModelConfig> {
    let gate = match kv.require::<String>("model.gate")?.as_str() {
        "scalar" => GateKind::Scalar,
        "vector" => GateKind::Vector,
        other => return Err(Error::Config(format!("unknown gate kind {other:?}"))),
    };
    Ok(ModelConfig {
        blocks: kv.require("model.blocks")?,
        heads: kv.require("model.heads")?,
        d_model: kv.require("model.d_model")?,
        patch_size: kv.require("model.patch_size")?,
        window_len: kv.require("model.window_len")?,
        future_len: kv.require("model.future_len")?,
        prompt_count: kv.require("model.prompt_count")?,
        anomaly_types: kv.require("model.anomaly_types")?,
        anomaly_type_id: kv.require("model.anomaly_type_id")?,
        ffn_hidden: kv.require("model.ffn_hidden")?,
        dylinear_len: kv.require("model.dylinear_len")?,
        dropout: kv.require("model.dropout")?,
        seed: kv.require("model.seed")?,
        gate,
        channel_identity: kv.require("model.channel_identity")?,
        mask_context_future: kv.require("model.mask_context_future")?,
    })
}

/// Write `model.ckpt` and `model.manifest` into `dir`, creating it if needed.
pub fn save_model(model: &TrainedModel, dir: &Path) -> Result<ModelFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ModelFiles::in_dir(dir);
    let mut entries = model.params.named();
    let width = model.standardizer.mean.len();
    entries.push((
        "norm.mean".into(),
        Tensor::new(vec![width], model.standardizer.mean.clone())?,
    ));
    entries.push((
        "norm.std".into(),
        Tensor::new(vec![width], model.standardizer.std.clone())?,
    ));
    let f = File::create(&files.checkpoint).map_err(|e| Error::io(&files.checkpoint, e))?;
    write_checkpoint(BufWriter::new(f), &entries)?;
    std::fs::write(&files.manifest, manifest(model).render())
        .map_err(|e| Error::io(&files.manifest, e))?;
    Ok(files)
}

/// Load a model written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let files = ModelFiles::in_dir(dir);
    let kv = KvConfig::load(&files.manifest)?;
    let config = config_from(&kv)?;
    let n: usize = kv.require("data.n_targets")?;
    let m: usize = kv.require("data.n_context")?;
    let channel_names = (0..n + m)
        .map(|i| kv.require::<String>(&format!("channel.{i}")))
        .collect::<Result<Vec<_>>>()?;
    let f = File::open(&files.checkpoint).map_err(|e| Error::io(&files.checkpoint, e))?;
    let mut entries = read_checkpoint(BufReader::new(f))?;
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let i = entries
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing {name}")))?;
        let data = entries.remove(i).1.into_data();
        if data.len() != n + m {
            return Err(Error::Checkpoint(format!(
                "{name} has {} entries for {} channels",
                data.len(),
                n + m
            )));
        }
        Ok(data)
    };
    let standardizer = Standardizer {
        mean: take("norm.mean")?,
        std: take("norm.std")?,
    };
    let loss_trace = match kv.get("train.loss_trace") {
        None | Some("") => Vec::new(),
        Some(text) => text
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config("unreadable train.loss_trace".into()))?,
    };
    let mut params = ModelParams::from_named(&config, n, m, entries)?;
    params.mark_trained();
    Ok(TrainedModel {
        config,
        params,
        standardizer,
        channel_names,
        loss_trace,
    })
}
