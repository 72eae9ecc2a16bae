use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{forward_graph, reconstruction_loss};
use super::{ModelConfig, ModelParams, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::{exponential_decay, AdamConfig, AdamState, Graph, StepOutcome, Tensor};
use crate::par::{self, Execution};
use crate::series::{sliding_windows, SeriesFrame, WindowView};
use crate::tokenizer::WindowInput;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub stride: usize,
    pub exec: Execution,
    /// Cap on windows visited per epoch (a fresh random subset each epoch).
    pub max_windows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            stride: 1,
            exec: Execution::default(),
            max_windows: None,
        }
    }
}

/// Parameters plus everything needed to apply them to new data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub standardizer: Standardizer,
    pub channel_names: Vec<String>,
    /// Mean loss per training epoch; empty for models built by hand.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Mean training loss per epoch, in standardized units.
    pub loss_trace: Vec<f64>,
    pub skipped_steps: usize,
    pub windows: usize,
}

/// Standardized model inputs for every window of `frame`.
pub fn window_inputs(
    frame: &SeriesFrame,
    cfg: &ModelConfig,
    stride: usize,
    standardizer: &Standardizer,
) -> Vec<WindowInput> {
    sliding_windows(frame, &cfg.window_spec(stride))
        .iter()
        .map(|v| WindowInput::from_view(v, |c, x| standardizer.apply(c, x)))
        .collect()
}

fn has_future_target(input: &WindowInput, future_len: usize) -> bool {
    input.future_targets(future_len).1.iter().any(|o| *o)
}

/// Loss and flattened parameter gradient for one window.
pub fn loss_and_grad(
    params: &ModelParams,
    input: &WindowInput,
    cfg: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let leaves = params.register(&mut g);
    let fwd = forward_graph(&mut g, &leaves, input, cfg, rng)?;
    let loss = reconstruction_loss(&mut g, fwd.xhat, input, cfg.future_len)?;
    let grads = g.backward(loss);
    Ok((g.value(loss).data()[0], leaves.flat_grad(&grads, params)))
}

fn check_frames(frames: &[SeriesFrame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::Precondition("no training frames".into()));
    };
    for f in &frames[1..] {
        if f.names() != first.names() || f.roles() != first.roles() {
            return Err(Error::Precondition(
                "training frames disagree on channel layout".into(),
            ));
        }
    }
    Ok(())
}

/// Fit a model to the masked-future reconstruction objective.
///
/// Each frame is windowed separately, so windows never straddle a boundary
/// between frames.
pub fn train(
    frames: &[SeriesFrame],
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_frames(frames)?;
    cfg.validate()?;
    if tcfg.batch_size == 0 || tcfg.stride == 0 {
        return Err(Error::Precondition(
            "batch size and stride must be >= 1".into(),
        ));
    }
    let first = &frames[0];
    let standardizer = Standardizer::fit(frames);
    let inputs: Vec<WindowInput> = frames
        .iter()
        .flat_map(|f| window_inputs(f, cfg, tcfg.stride, &standardizer))
        .filter(|w| has_future_target(w, cfg.future_len))
        .collect();
    if inputs.is_empty() {
        return Err(Error::Precondition(format!(
            "no training window of {} samples with an observed future target",
            cfg.window_len
        )));
    }
    let mut params = ModelParams::init(cfg, first.n_targets(), first.n_context())?;
    let mut flat = params.flat();
    let mut adam = AdamState::new(flat.len());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut loss_trace = Vec::with_capacity(tcfg.epochs);
    let mut skipped = 0;

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let visit = tcfg.max_windows.map_or(order.len(), |m| m.min(order.len()));
        let lr = exponential_decay(tcfg.adam.lr, tcfg.adam.decay, epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order[..visit].chunks(tcfg.batch_size) {
            let results = par::map(tcfg.exec, batch, |&i| {
                let mut rng = (cfg.dropout > 0.0).then(|| {
                    ChaCha8Rng::seed_from_u64(
                        cfg.seed ^ ((epoch as u64) << 40) ^ (i as u64).wrapping_mul(0x9E37_79B9),
                    )
                });
                loss_and_grad(&params, &inputs[i], cfg, rng.as_mut())
            });
            let mut grad = vec![0.0; flat.len()];
            let mut loss = 0.0;
            for r in results {
                let (l, g) = r?;
                loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            loss *= scale;
            if let StepOutcome::Skipped { non_finite } =
                adam.step(&mut flat, &grad, lr, &tcfg.adam)?
            {
                log::warn!(
                    "epoch {epoch}: skipped step with {non_finite} non-finite gradient entries"
                );
                skipped += 1;
            } else {
                params.set_flat(&flat);
            }
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                stage: "training".into(),
                detail: format!("epoch {epoch} mean loss {mean}"),
            });
        }
        log::info!("epoch {epoch}: loss {mean:.5} lr {lr:.2e}");
        loss_trace.push(mean);
    }
    params.mark_trained();
    Ok(TrainOutcome {
        model: TrainedModel {
            config: cfg.clone(),
            params,
            standardizer,
            channel_names: first.names().to_vec(),
            loss_trace: loss_trace.clone(),
        },
        loss_trace,
        skipped_steps: skipped,
        windows: inputs.len(),
    })
}

impl TrainedModel {
    fn check_trained(&self) -> Result<()> {
        if self.params.is_trained() {
            Ok(())
        } else {
            Err(Error::Untrained)
        }
    }

    /// Check that `frame` carries the channels this model was trained on.
    pub fn check_frame(&self, frame: &SeriesFrame) -> Result<()> {
        if frame.names() != self.channel_names.as_slice() {
            return Err(Error::Precondition(format!(
                "frame channels {:?} do not match model channels {:?}",
                frame.names(),
                self.channel_names
            )));
        }
        Ok(())
    }

    /// Reconstructed future targets `[λ × n]` in standardized units.
    pub fn impute_input(&self, input: &WindowInput) -> Result<Tensor> {
        self.check_trained()?;
        let mut g = Graph::new();
        let leaves = self.params.register(&mut g);
        let fwd = forward_graph(&mut g, &leaves, input, &self.config, None)?;
        let out = g.value(fwd.xhat).clone();
        if !out.all_finite() {
            return Err(Error::NonFinite {
                stage: "impute".into(),
                detail: "reconstruction contains non-finite values".into(),
            });
        }
        Ok(out)
    }

    /// Reconstructed future targets `[λ × n]` in original units.
    pub fn impute(&self, view: &WindowView<'_>) -> Result<Tensor> {
        self.check_frame(view.frame)?;
        let input = WindowInput::from_view(view, |c, x| self.standardizer.apply(c, x));
        let mut out = self.impute_input(&input)?;
        let n = self.params.n_targets();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = self.standardizer.invert(i % n, *v);
        }
        Ok(out)
    }

    pub fn standardize(&self, view: &WindowView<'_>) -> WindowInput {
        WindowInput::from_view(view, |c, x| self.standardizer.apply(c, x))
    }
}
