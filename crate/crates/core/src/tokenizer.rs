//! Window-to-token layout.
//!
//! A window of `K` samples over `n` target and `m` context channels becomes
//! `Z ∈ R^{(p + K/k) × (n + m) × d}`: `p` prompt tokens first, then patch
//! tokens oldest-first. Target columns hold past patches followed by GEN
//! placeholders for the masked future; context columns hold patches over the
//! whole window.
//!
//! Every operation is built on the autodiff [`Graph`] so the model trains
//! through exactly the code exercised here. The plain-tensor functions run
//! the same graph code on constants.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::series::{ChannelRole, WindowView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub prompt_count: usize,
    pub future_len: usize,
    pub anomaly_type_id: usize,
    /// Replace context tokens over the future segment by GEN as well.
    pub mask_context_future: bool,
}

impl TokenizerConfig {
    pub fn validate(&self, window_len: usize) -> Result<()> {
        let (k, big_k, lambda) = (self.patch_size, window_len, self.future_len);
        if self.embed_dim == 0 {
            return Err(Error::Precondition(
                "embedding dimension d must be >= 1".into(),
            ));
        }
        if self.prompt_count == 0 {
            return Err(Error::Precondition("prompt count p must be >= 1".into()));
        }
        if k == 0 || lambda == 0 || lambda > big_k || lambda % k != 0 || (big_k - lambda) % k != 0 {
            return Err(Error::Precondition(format!(
                "patch size k={k} must divide future length λ={lambda} and past length K-λ with window K={big_k} (λ >= 1)"
            )));
        }
        Ok(())
    }

    pub fn past_tokens(&self, window_len: usize) -> usize {
        (window_len - self.future_len) / self.patch_size
    }

    pub fn future_tokens(&self) -> usize {
        self.future_len / self.patch_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeKind {
    Prompt,
    Past,
    Future,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeToken {
    pub kind: TimeKind,
    /// Window-relative sample range; empty for prompts.
    pub samples: Range<usize>,
}

/// Per-axis bookkeeping for a token tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisMeta {
    pub time: Vec<TimeToken>,
    pub channels: Vec<ChannelRole>,
    /// `[time × channel]`: every source sample of the token is missing.
    pub fully_missing: Vec<bool>,
}

impl AxisMeta {
    fn is_fully_missing(&self, t: usize, c: usize) -> bool {
        self.fully_missing[t * self.channels.len() + c]
    }
}

/// Dense `[time_tokens × channels × d]` tensor with axis metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTensor {
    pub data: Tensor,
    pub meta: AxisMeta,
}

impl TokenTensor {
    pub fn time_tokens(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn embed_dim(&self) -> usize {
        self.data.shape()[2]
    }

    /// Token vector at `(t, c)`.
    pub fn token(&self, t: usize, c: usize) -> &[f64] {
        let d = self.embed_dim();
        let i = (t * self.channels() + c) * d;
        &self.data.data()[i..i + d]
    }
}

/// One window of (standardised) samples, row-major `len × (n + m)`, with
/// missing cells zero-filled and flagged in `observed`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInput {
    pub len: usize,
    pub n_targets: usize,
    pub n_context: usize,
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

impl WindowInput {
    /// Copy a window, mapping each observed value through `transform(channel, value)`.
    pub fn from_view(view: &WindowView<'_>, transform: impl Fn(usize, f64) -> f64) -> Self {
        let width = view.frame.width();
        let mut values = Vec::with_capacity(view.len * width);
        let mut observed = Vec::with_capacity(view.len * width);
        for t in 0..view.len {
            for c in 0..width {
                match view.get(t, c) {
                    Some(v) => {
                        values.push(transform(c, v));
                        observed.push(true);
                    }
                    None => {
                        values.push(0.0);
                        observed.push(false);
                    }
                }
            }
        }
        Self {
            len: view.len,
            n_targets: view.frame.n_targets(),
            n_context: view.frame.n_context(),
            values,
            observed,
        }
    }

    pub fn width(&self) -> usize {
        self.n_targets + self.n_context
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.width() + c]
    }

    pub fn is_observed(&self, t: usize, c: usize) -> bool {
        self.observed[t * self.width() + c]
    }

    /// Future target block `[λ × n]` and its observed mask.
    pub fn future_targets(&self, future_len: usize) -> (Vec<f64>, Vec<bool>) {
        let start = self.len - future_len;
        let mut vals = Vec::with_capacity(future_len * self.n_targets);
        let mut obs = Vec::with_capacity(future_len * self.n_targets);
        for t in start..self.len {
            for c in 0..self.n_targets {
                vals.push(self.get(t, c));
                obs.push(self.is_observed(t, c));
            }
        }
        (vals, obs)
    }
}

/// Embedding weights as plain tensors.
#[derive(Debug, Clone, Copy)]
pub struct EmbedWeights<'t> {
    /// `[k × d]` shared by all target channels.
    pub target_w: &'t Tensor,
    pub target_b: &'t Tensor,
    /// `[k × d]` shared by all context channels.
    pub context_w: &'t Tensor,
    pub context_b: &'t Tensor,
    /// `[(n + m) × d]`, optional per-channel identity vectors.
    pub channel_id: Option<&'t Tensor>,
    /// `[d]`
    pub gen: &'t Tensor,
    /// `[anomaly_types × p × d]`
    pub prompt_bank: &'t Tensor,
}

/// The same weights registered on a graph.
#[derive(Debug, Clone, Copy)]
pub struct EmbedNodes {
    pub target_w: NodeId,
    pub target_b: NodeId,
    pub context_w: NodeId,
    pub context_b: NodeId,
    pub channel_id: Option<NodeId>,
    pub gen: NodeId,
    pub prompt_bank: NodeId,
}

impl<'t> EmbedWeights<'t> {
    fn register(&self, g: &mut Graph<'t>) -> EmbedNodes {
        EmbedNodes {
            target_w: g.constant_ref(self.target_w),
            target_b: g.constant_ref(self.target_b),
            context_w: g.constant_ref(self.context_w),
            context_b: g.constant_ref(self.context_b),
            channel_id: self.channel_id.map(|t| g.constant_ref(t)),
            gen: g.constant_ref(self.gen),
            prompt_bank: g.constant_ref(self.prompt_bank),
        }
    }
}

fn check_input(input: &WindowInput, cfg: &TokenizerConfig) -> Result<()> {
    cfg.validate(input.len)?;
    if input.n_targets == 0 {
        return Err(Error::NoTargets);
    }
    Ok(())
}

fn patch_meta(
    input: &WindowInput,
    cfg: &TokenizerConfig,
    rows: Range<usize>,
    channels: Range<usize>,
    role: ChannelRole,
) -> AxisMeta {
    let k = cfg.patch_size;
    let past_len = input.len - cfg.future_len;
    let mut time = Vec::new();
    let mut fully_missing = Vec::new();
    for j in rows {
        let samples = j * k..(j + 1) * k;
        let kind = if samples.start < past_len {
            TimeKind::Past
        } else {
            TimeKind::Future
        };
        for c in channels.clone() {
            fully_missing.push(samples.clone().all(|s| !input.is_observed(s, c)));
        }
        time.push(TimeToken { kind, samples });
    }
    AxisMeta {
        time,
        channels: vec![role; channels.len()],
        fully_missing,
    }
}

/// Linear patch embedding of `channels` over token rows `rows`.
fn embed_block(
    g: &mut Graph<'_>,
    input: &WindowInput,
    k: usize,
    rows: Range<usize>,
    channels: Range<usize>,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let (nt, nc) = (rows.len(), channels.len());
    let mut patches = Vec::with_capacity(nt * nc * k);
    for j in rows {
        for c in channels.clone() {
            for s in 0..k {
                let t = j * k + s;
                // missing samples are zero-imputed whatever their stored value
                patches.push(if input.is_observed(t, c) { input.get(t, c) } else { 0.0 });
            }
        }
    }
    let x = g.constant(Tensor::from_parts(vec![nt, nc, k], patches));
    let z = g.matmul(x, w)?;
    g.add(z, b)
}

/// Patch-embed past targets, future targets and context over the full window.
///
/// Returns `(z_past, z_future, z_ctx)` graph nodes; `z_ctx` is `None` when
/// there are no context channels.
pub fn embed_patches_graph(
    g: &mut Graph<'_>,
    input: &WindowInput,
    cfg: &TokenizerConfig,
    nodes: &EmbedNodes,
) -> Result<(NodeId, NodeId, Option<NodeId>)> {
    check_input(input, cfg)?;
    let k = cfg.patch_size;
    let (tp, tf) = (cfg.past_tokens(input.len), cfg.future_tokens());
    let n = input.n_targets;
    let past = embed_block(g, input, k, 0..tp, 0..n, nodes.target_w, nodes.target_b)?;
    let future = embed_block(
        g,
        input,
        k,
        tp..tp + tf,
        0..n,
        nodes.target_w,
        nodes.target_b,
    )?;
    let ctx = if input.n_context > 0 {
        Some(embed_block(
            g,
            input,
            k,
            0..tp + tf,
            n..input.width(),
            nodes.context_w,
            nodes.context_b,
        )?)
    } else {
        None
    };
    Ok((past, future, ctx))
}

/// Token metadata for `(z_past, z_future, z_ctx)`.
pub fn patch_metas(input: &WindowInput, cfg: &TokenizerConfig) -> (AxisMeta, AxisMeta, AxisMeta) {
    let (tp, tf) = (cfg.past_tokens(input.len), cfg.future_tokens());
    let n = input.n_targets;
    (
        patch_meta(input, cfg, 0..tp, 0..n, ChannelRole::Target),
        patch_meta(input, cfg, tp..tp + tf, 0..n, ChannelRole::Target),
        patch_meta(
            input,
            cfg,
            0..tp + tf,
            n..input.width(),
            ChannelRole::Context,
        ),
    )
}

/// Replace tokens by the GEN vector where `meta` marks them fully missing,
/// and, if `include_future`, everywhere on future time tokens.
pub fn mask_graph(
    g: &mut Graph<'_>,
    z: NodeId,
    meta: &AxisMeta,
    gen: NodeId,
    include_future: bool,
) -> Result<NodeId> {
    let shape = g.shape(z).to_vec();
    let (t_len, c_len, d) = (shape[0], shape[1], shape[2]);
    let replace: Vec<bool> = (0..t_len)
        .flat_map(|t| {
            let future = include_future && meta.time[t].kind == TimeKind::Future;
            (0..c_len).map(move |c| (t, c, future))
        })
        .map(|(t, c, future)| future || meta.is_fully_missing(t, c))
        .collect();
    if !replace.iter().any(|r| *r) {
        return Ok(z);
    }
    let gen_full = broadcast_vector(g, gen, t_len, c_len)?;
    if replace.iter().all(|r| *r) {
        return Ok(gen_full);
    }
    let keep_mask = Tensor::from_fn(&[t_len, c_len, d], |i| f64::from(!replace[i / d]));
    let swap_mask = Tensor::from_fn(&[t_len, c_len, d], |i| f64::from(replace[i / d]));
    let keep_mask = g.constant(keep_mask);
    let swap_mask = g.constant(swap_mask);
    let kept = g.mul(z, keep_mask)?;
    let swapped = g.mul(gen_full, swap_mask)?;
    g.add(kept, swapped)
}

/// `[d] -> [t × c × d]`
fn broadcast_vector(g: &mut Graph<'_>, v: NodeId, t: usize, c: usize) -> Result<NodeId> {
    let d = g.shape(v)[0];
    let v = g.reshape(v, &[1, 1, d])?;
    let v = g.expand(v, 0, t)?;
    g.expand(v, 1, c)
}

/// Sinusoidal time-position table for `rows` sample tokens after `prompts`
/// zero rows, repeated over `channels`.
pub fn position_encoding(prompts: usize, rows: usize, channels: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; (prompts + rows) * channels * d];
    for j in 0..rows {
        for c in 0..channels {
            for i in 0..d {
                let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
                let angle = j as f64 / rate;
                let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                data[((prompts + j) * channels + c) * d + i] = v;
            }
        }
    }
    Tensor::from_parts(vec![prompts + rows, channels, d], data)
}

/// Concatenate along time and channel axes, prepend the selected prompt row,
/// add position encoding and channel identities.
#[allow(clippy::too_many_arguments)]
pub fn assemble_graph(
    g: &mut Graph<'_>,
    z_past: NodeId,
    z_future: NodeId,
    z_ctx: Option<NodeId>,
    prompt_bank: NodeId,
    channel_id: Option<NodeId>,
    cfg: &TokenizerConfig,
) -> Result<NodeId> {
    let (sp, sf) = (g.shape(z_past).to_vec(), g.shape(z_future).to_vec());
    if sp.len() != 3 || sf.len() != 3 || sp[1] != sf[1] || sp[2] != sf[2] {
        return Err(Error::shape(
            "assemble",
            format!("past {sp:?} vs future {sf:?}"),
        ));
    }
    let targets = g.concat(&[z_past, z_future], 0)?;
    let rows = sp[0] + sf[0];
    let d = sp[2];
    let body = match z_ctx {
        Some(ctx) => {
            let sc = g.shape(ctx).to_vec();
            if sc.len() != 3 || sc[0] != rows || sc[2] != d {
                return Err(Error::shape(
                    "assemble",
                    format!("context {sc:?} does not span {rows} time tokens of width {d}"),
                ));
            }
            g.concat(&[targets, ctx], 1)?
        }
        None => targets,
    };
    let channels = g.shape(body)[1];
    let bank = g.shape(prompt_bank).to_vec();
    let p = cfg.prompt_count;
    if bank.len() != 3 || bank[1] != p || bank[2] != d {
        return Err(Error::shape(
            "assemble",
            format!("prompt bank {bank:?}, expected [types × {p} × {d}]"),
        ));
    }
    if cfg.anomaly_type_id >= bank[0] {
        return Err(Error::Precondition(format!(
            "anomaly type {} outside prompt bank of {} rows",
            cfg.anomaly_type_id, bank[0]
        )));
    }
    let prompt = g.slice(prompt_bank, 0, cfg.anomaly_type_id, 1)?;
    let prompt = g.reshape(prompt, &[p, 1, d])?;
    let prompt = g.expand(prompt, 1, channels)?;
    let z = g.concat(&[prompt, body], 0)?;
    let pos = g.constant(position_encoding(p, rows, channels, d));
    let mut z = g.add(z, pos)?;
    if let Some(id) = channel_id {
        let s = g.shape(id).to_vec();
        if s != [channels, d] {
            return Err(Error::shape(
                "assemble",
                format!("channel identities {s:?}, expected [{channels}, {d}]"),
            ));
        }
        z = g.add(z, id)?;
    }
    Ok(z)
}

/// Metadata of the assembled `Z`.
pub fn assembled_meta(past: &AxisMeta, future: &AxisMeta, ctx: &AxisMeta, p: usize) -> AxisMeta {
    let mut time: Vec<TimeToken> = (0..p)
        .map(|_| TimeToken {
            kind: TimeKind::Prompt,
            samples: 0..0,
        })
        .collect();
    time.extend(past.time.iter().cloned());
    time.extend(future.time.iter().cloned());
    let (n, m) = (past.channels.len(), ctx.channels.len());
    let mut channels = past.channels.clone();
    channels.extend(ctx.channels.iter().cloned());
    let mut fully_missing = vec![false; p * (n + m)];
    let tp = past.time.len();
    for t in 0..tp + future.time.len() {
        for c in 0..n {
            fully_missing.push(if t < tp {
                past.is_fully_missing(t, c)
            } else {
                future.is_fully_missing(t - tp, c)
            });
        }
        for c in 0..m {
            fully_missing.push(ctx.is_fully_missing(t, c));
        }
    }
    AxisMeta {
        time,
        channels,
        fully_missing,
    }
}

/// Full tokenizer pipeline used by the model: embed, mask, assemble.
pub fn tokens_graph(
    g: &mut Graph<'_>,
    input: &WindowInput,
    cfg: &TokenizerConfig,
    nodes: &EmbedNodes,
) -> Result<(NodeId, AxisMeta)> {
    check_input(input, cfg)?;
    let k = cfg.patch_size;
    let (tp, tf) = (cfg.past_tokens(input.len), cfg.future_tokens());
    let n = input.n_targets;
    let (m_past, m_future, m_ctx) = patch_metas(input, cfg);

    let past = embed_block(g, input, k, 0..tp, 0..n, nodes.target_w, nodes.target_b)?;
    let past = mask_graph(g, past, &m_past, nodes.gen, false)?;
    // future targets are never read: straight to GEN
    let future = broadcast_vector(g, nodes.gen, tf, n)?;
    let ctx = if input.n_context > 0 {
        let c = embed_block(
            g,
            input,
            k,
            0..tp + tf,
            n..input.width(),
            nodes.context_w,
            nodes.context_b,
        )?;
        Some(mask_graph(
            g,
            c,
            &m_ctx,
            nodes.gen,
            cfg.mask_context_future,
        )?)
    } else {
        None
    };
    let z = assemble_graph(
        g,
        past,
        future,
        ctx,
        nodes.prompt_bank,
        nodes.channel_id,
        cfg,
    )?;
    Ok((
        z,
        assembled_meta(&m_past, &m_future, &m_ctx, cfg.prompt_count),
    ))
}

fn token_tensor(g: &Graph<'_>, id: NodeId, meta: AxisMeta) -> TokenTensor {
    TokenTensor {
        data: g.value(id).clone(),
        meta,
    }
}

/// Plain-tensor patch embedding: `(z_past, z_future, z_ctx)`.
pub fn embed_patches(
    input: &WindowInput,
    cfg: &TokenizerConfig,
    weights: &EmbedWeights<'_>,
) -> Result<(TokenTensor, TokenTensor, TokenTensor)> {
    let mut g = Graph::new();
    let nodes = weights.register(&mut g);
    let (past, future, ctx) = embed_patches_graph(&mut g, input, cfg, &nodes)?;
    let (m_past, m_future, m_ctx) = patch_metas(input, cfg);
    let d = cfg.embed_dim;
    let ctx = match ctx {
        Some(id) => token_tensor(&g, id, m_ctx),
        None => TokenTensor {
            data: Tensor::zeros(&[input.len / cfg.patch_size, 0, d]),
            meta: m_ctx,
        },
    };
    Ok((
        token_tensor(&g, past, m_past),
        token_tensor(&g, future, m_future),
        ctx,
    ))
}

fn mask_value(z: &TokenTensor, gen: &Tensor, include_future: bool) -> Result<TokenTensor> {
    if gen.numel() != z.embed_dim() {
        return Err(Error::shape(
            "mask_future",
            format!(
                "GEN token of length {} for d={}",
                gen.numel(),
                z.embed_dim()
            ),
        ));
    }
    if z.channels() == 0 {
        return Ok(z.clone());
    }
    let mut g = Graph::new();
    let zi = g.constant_ref(&z.data);
    let gi = g.constant_ref(gen);
    let out = mask_graph(&mut g, zi, &z.meta, gi, include_future)?;
    Ok(token_tensor(&g, out, z.meta.clone()))
}

/// Replace every future token, and every fully-missing token, by `gen`.
pub fn mask_future(z: &TokenTensor, gen: &Tensor) -> Result<TokenTensor> {
    mask_value(z, gen, true)
}

/// Replace only fully-missing tokens by `gen`.
pub fn mask_missing(z: &TokenTensor, gen: &Tensor) -> Result<TokenTensor> {
    mask_value(z, gen, false)
}

/// Plain-tensor assembly of `Z`.
pub fn assemble(
    z_past: &TokenTensor,
    z_future: &TokenTensor,
    z_ctx: &TokenTensor,
    prompt_bank: &Tensor,
    channel_id: Option<&Tensor>,
    cfg: &TokenizerConfig,
) -> Result<TokenTensor> {
    let mut g = Graph::new();
    let past = g.constant_ref(&z_past.data);
    let future = g.constant_ref(&z_future.data);
    let ctx = (z_ctx.channels() > 0).then(|| g.constant_ref(&z_ctx.data));
    let bank = g.constant_ref(prompt_bank);
    let ids = channel_id.map(|t| g.constant_ref(t));
    let z = assemble_graph(&mut g, past, future, ctx, bank, ids, cfg)?;
    let meta = assembled_meta(&z_past.meta, &z_future.meta, &z_ctx.meta, cfg.prompt_count);
    Ok(token_tensor(&g, z, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Weights {
        tw: Tensor,
        tb: Tensor,
        cw: Tensor,
        cb: Tensor,
        gen: Tensor,
        bank: Tensor,
    }

    impl Weights {
        fn new(k: usize, d: usize, p: usize, fill: f64) -> Self {
            Self {
                tw: Tensor::from_fn(&[k, d], |i| fill * (1.0 + i as f64 * 0.1)),
                tb: Tensor::full(&[d], fill),
                cw: Tensor::from_fn(&[k, d], |i| fill * (0.5 - i as f64 * 0.05)),
                cb: Tensor::full(&[d], -fill),
                gen: Tensor::from_fn(&[d], |i| 10.0 + i as f64),
                bank: Tensor::from_fn(&[2, p, d], |i| 100.0 + i as f64),
            }
        }

        fn view(&self) -> EmbedWeights<'_> {
            EmbedWeights {
                target_w: &self.tw,
                target_b: &self.tb,
                context_w: &self.cw,
                context_b: &self.cb,
                channel_id: None,
                gen: &self.gen,
                prompt_bank: &self.bank,
            }
        }
    }

    fn input(len: usize, n: usize, m: usize) -> WindowInput {
        let width = n + m;
        WindowInput {
            len,
            n_targets: n,
            n_context: m,
            values: (0..len * width).map(|i| (i as f64 * 0.37).sin()).collect(),
            observed: vec![true; len * width],
        }
    }

    fn cfg(k: usize, d: usize, p: usize, lambda: usize) -> TokenizerConfig {
        TokenizerConfig {
            patch_size: k,
            embed_dim: d,
            prompt_count: p,
            future_len: lambda,
            anomaly_type_id: 0,
            mask_context_future: false,
        }
    }

    #[test]
    fn home_window_shapes() {
        let w = Weights::new(2, 4, 1, 0.3);
        let c = cfg(2, 4, 1, 8);
        let (past, future, ctx) = embed_patches(&input(16, 2, 3), &c, &w.view()).unwrap();
        assert_eq!(past.data.shape(), &[4, 2, 4]);
        assert_eq!(future.data.shape(), &[4, 2, 4]);
        assert_eq!(ctx.data.shape(), &[8, 3, 4]);
        let future = mask_future(&future, &w.gen).unwrap();
        let z = assemble(&past, &future, &ctx, &w.bank, None, &c).unwrap();
        assert_eq!(z.data.shape(), &[9, 5, 4]);
    }

    #[test]
    fn divisibility_and_prompt_preconditions() {
        let w = Weights::new(16, 4, 1, 0.3);
        // k = K leaves no room for λ > 0 divisible by k with a past segment
        assert!(embed_patches(&input(16, 1, 0), &cfg(16, 4, 1, 0), &w.view()).is_err());
        let w = Weights::new(3, 4, 1, 0.3);
        let err = embed_patches(&input(16, 1, 0), &cfg(3, 4, 1, 8), &w.view()).unwrap_err();
        assert!(err.to_string().contains("k=3"));
        assert!(cfg(2, 4, 0, 8).validate(16).is_err());
    }

    #[test]
    fn zero_weights_and_input_give_zero_tokens() {
        let w = Weights::new(2, 4, 1, 0.0);
        let mut x = input(16, 2, 1);
        x.values.iter_mut().for_each(|v| *v = 0.0);
        let (past, future, ctx) = embed_patches(&x, &cfg(2, 4, 1, 8), &w.view()).unwrap();
        for t in [past, future, ctx] {
            assert!(t.data.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gen_replacement_rules() {
        let w = Weights::new(2, 4, 1, 0.3);
        let c = cfg(2, 4, 1, 8);
        let mut x = input(16, 2, 0);
        // patch 1 (samples 2,3) of channel 0 fully missing, patch 2 of channel 1 half missing
        for (t, ch) in [(2, 0), (3, 0), (4, 1)] {
            x.observed[t * 2 + ch] = false;
            x.values[t * 2 + ch] = 0.0;
        }
        let (past, future, _) = embed_patches(&x, &c, &w.view()).unwrap();
        let masked_future = mask_future(&future, &w.gen).unwrap();
        for t in 0..4 {
            for ch in 0..2 {
                assert_eq!(masked_future.token(t, ch), w.gen.data());
            }
        }
        let masked_past = mask_missing(&past, &w.gen).unwrap();
        assert_eq!(masked_past.token(1, 0), w.gen.data());
        assert_ne!(masked_past.token(2, 1), w.gen.data());
        assert_eq!(masked_past.token(2, 1), past.token(2, 1));
        // idempotent
        assert_eq!(mask_future(&masked_future, &w.gen).unwrap(), masked_future);
    }

    #[test]
    fn assembled_meta_recovers_kinds() {
        let w = Weights::new(2, 4, 2, 0.3);
        let c = cfg(2, 4, 2, 4);
        let (past, future, ctx) = embed_patches(&input(8, 1, 2), &c, &w.view()).unwrap();
        let z = assemble(&past, &future, &ctx, &w.bank, None, &c).unwrap();
        let kinds: Vec<_> = z.meta.time.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TimeKind::Prompt,
                TimeKind::Prompt,
                TimeKind::Past,
                TimeKind::Past,
                TimeKind::Future,
                TimeKind::Future
            ]
        );
        assert_eq!(
            z.meta.channels,
            vec![
                ChannelRole::Target,
                ChannelRole::Context,
                ChannelRole::Context
            ]
        );
        assert_eq!(z.meta.time[4].samples, 4..6);
        // prompt rows carry the selected bank row on every channel
        for ch in 0..3 {
            assert_eq!(z.token(1, ch), &w.bank.data()[4..8]);
        }
    }

    #[test]
    fn assemble_rejects_bad_prompt_row() {
        let w = Weights::new(2, 4, 1, 0.3);
        let mut c = cfg(2, 4, 1, 8);
        let (past, future, ctx) = embed_patches(&input(16, 1, 1), &c, &w.view()).unwrap();
        c.anomaly_type_id = 5;
        assert!(assemble(&past, &future, &ctx, &w.bank, None, &c).is_err());
    }
}
