use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::Leaves;
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::tokenizer::{tokens_graph, AxisMeta, TokenTensor, WindowInput};

/// Node handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub z_in: NodeId,
    pub z_out: NodeId,
    /// `[λ × n]` reconstructed future targets.
    pub xhat: NodeId,
    /// Softmax weights of every attention layer, `[batch·heads × L × L]`.
    pub attention: Vec<NodeId>,
    pub meta: AxisMeta,
}

/// Scale `x` (`[T × ...]`) along axis 0 by `w` linearly resized to `T`.
pub fn dylinear(g: &mut Graph<'_>, x: NodeId, w: NodeId) -> Result<NodeId> {
    let shape = g.shape(x).to_vec();
    let s = g.linear_interp_resize(w, 0, shape[0])?;
    let mut bshape = vec![1; shape.len()];
    bshape[0] = shape[0];
    let mut s = g.reshape(s, &bshape)?;
    for (axis, &n) in shape.iter().enumerate().skip(1) {
        s = g.expand(s, axis, n)?;
    }
    g.mul(x, s)
}

fn affine_norm(g: &mut Graph<'_>, x: NodeId, leaves: &Leaves, prefix: &str) -> Result<NodeId> {
    let ln = g.layer_norm(x);
    let ln = g.mul(ln, leaves.get(&format!("{prefix}.ln_g")))?;
    g.add(ln, leaves.get(&format!("{prefix}.ln_b")))
}

fn dense(g: &mut Graph<'_>, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// Pre-norm multi-head self-attention over axis 1 of `x` (`[B × L × d]`).
fn attention(
    g: &mut Graph<'_>,
    x: NodeId,
    leaves: &Leaves,
    prefix: &str,
    heads: usize,
) -> Result<(NodeId, NodeId)> {
    let shape = g.shape(x).to_vec();
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    let dh = d / heads;
    let p = |s: &str| format!("{prefix}.{s}");
    let h = affine_norm(g, x, leaves, prefix)?;
    let q = dense(g, h, leaves.get(&p("wq")), leaves.get(&p("bq")))?;
    let k = dense(g, h, leaves.get(&p("wk")), leaves.get(&p("bk")))?;
    let v = dense(g, h, leaves.get(&p("wv")), leaves.get(&p("bv")))?;
    let split =
        |g: &mut Graph<'_>, t: NodeId, perm: &[usize], last: [usize; 2]| -> Result<NodeId> {
            let t = g.reshape(t, &[b, l, heads, dh])?;
            let t = g.transpose(t, perm)?;
            g.reshape(t, &[b * heads, last[0], last[1]])
        };
    let q = split(g, q, &[0, 2, 1, 3], [l, dh])?;
    let kt = split(g, k, &[0, 2, 3, 1], [dh, l])?;
    let v = split(g, v, &[0, 2, 1, 3], [l, dh])?;
    let scores = g.bmm(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    let weights = g.softmax(scores);
    let o = g.bmm(weights, v)?;
    let o = g.reshape(o, &[b, heads, l, dh])?;
    let o = g.transpose(o, &[0, 2, 1, 3])?;
    let o = g.reshape(o, &[b, l, d])?;
    let o = dense(g, o, leaves.get(&p("wo")), leaves.get(&p("bo")))?;
    Ok((o, weights))
}

/// Inverted dropout with a freshly drawn mask.
fn dropout(
    g: &mut Graph<'_>,
    x: NodeId,
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = g.shape(x).to_vec();
    let keep = 1.0 / (1.0 - rate);
    let mask = Tensor::from_fn(&shape, |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    let mask = g.constant(mask);
    g.mul(x, mask)
}

fn gated_residual(
    g: &mut Graph<'_>,
    x: NodeId,
    branch: NodeId,
    gate: NodeId,
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId> {
    let branch = dropout(g, branch, rate, rng)?;
    let s = g.sigmoid(gate);
    let branch = g.mul(branch, s)?;
    g.add(x, branch)
}

/// Blocks and tower applied to an assembled token tensor `z` (`[T × C × d]`).
pub fn network_graph(
    g: &mut Graph<'_>,
    z: NodeId,
    leaves: &Leaves,
    cfg: &ModelConfig,
    n_targets: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(NodeId, NodeId, Vec<NodeId>)> {
    let shape = g.shape(z).to_vec();
    if shape.len() != 3 || shape[2] != cfg.d_model {
        return Err(Error::shape(
            "forward",
            format!("token tensor {shape:?}, expected [T, C, {}]", cfg.d_model),
        ));
    }
    let tok = cfg.tokenizer();
    let (p, tp, tf) = (
        cfg.prompt_count,
        tok.past_tokens(cfg.window_len),
        tok.future_tokens(),
    );
    if shape[0] != p + tp + tf || shape[1] < n_targets {
        return Err(Error::shape(
            "forward",
            format!(
                "token tensor {shape:?}, expected {} time tokens and >= {n_targets} channels",
                p + tp + tf
            ),
        ));
    }
    let rate = cfg.dropout;
    let mut x = z;
    let mut attn = Vec::new();
    for b in 0..cfg.blocks {
        // time axis: each channel attends over its own tokens
        let xt = g.transpose(x, &[1, 0, 2])?;
        let (a, w) = attention(g, xt, leaves, &format!("block{b}.time"), cfg.heads)?;
        let a = g.transpose(a, &[1, 0, 2])?;
        x = gated_residual(
            g,
            x,
            a,
            leaves.get(&format!("block{b}.time.gate")),
            rate,
            rng.as_deref_mut(),
        )?;
        attn.push(w);

        // variable axis: each time token attends over channels
        let (v, w) = attention(g, x, leaves, &format!("block{b}.var"), cfg.heads)?;
        x = gated_residual(
            g,
            x,
            v,
            leaves.get(&format!("block{b}.var.gate")),
            rate,
            rng.as_deref_mut(),
        )?;
        attn.push(w);

        let pf = format!("block{b}.ffn");
        let h = affine_norm(g, x, leaves, &pf)?;
        let h = dense(
            g,
            h,
            leaves.get(&format!("{pf}.w1")),
            leaves.get(&format!("{pf}.b1")),
        )?;
        let h = g.gelu(h);
        let h = dylinear(g, h, leaves.get(&format!("{pf}.dyl")))?;
        let h = dense(
            g,
            h,
            leaves.get(&format!("{pf}.w2")),
            leaves.get(&format!("{pf}.b2")),
        )?;
        x = gated_residual(
            g,
            x,
            h,
            leaves.get(&format!("{pf}.gate")),
            rate,
            rng.as_deref_mut(),
        )?;
    }
    let z_out = x;

    let zf = g.slice(z_out, 0, p + tp, tf)?;
    let zf = g.slice(zf, 1, 0, n_targets)?;
    let dyl = dylinear(g, zf, leaves.get("tower.dyl"))?;
    let u = g.add(zf, dyl)?;
    let u = dense(g, u, leaves.get("tower.w1"), leaves.get("tower.b1"))?;
    let u = g.gelu(u);
    let u = dense(g, u, leaves.get("tower.w2"), leaves.get("tower.b2"))?;
    let y = dense(g, u, leaves.get("tower.proj_w"), leaves.get("tower.proj_b"))?;
    // [Tf, n, k] -> [λ, n]
    let y = g.transpose(y, &[1, 0, 2])?;
    let y = g.reshape(y, &[n_targets, cfg.future_len])?;
    let xhat = g.transpose(y, &[1, 0])?;
    Ok((z_out, xhat, attn))
}

/// Tokenize a window and run the network.
pub fn forward_graph<'p>(
    g: &mut Graph<'p>,
    leaves: &Leaves,
    input: &WindowInput,
    cfg: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardNodes> {
    if input.len != cfg.window_len {
        return Err(Error::shape(
            "forward",
            format!(
                "window of {} samples, model expects {}",
                input.len, cfg.window_len
            ),
        ));
    }
    let (z_in, meta) = tokens_graph(g, input, &cfg.tokenizer(), &leaves.embed())?;
    let (z_out, xhat, attention) = network_graph(g, z_in, leaves, cfg, input.n_targets, rng)?;
    Ok(ForwardNodes {
        z_in,
        z_out,
        xhat,
        attention,
        meta,
    })
}

/// Value-level forward from an assembled token tensor: `(Ẑ, X̂_F)`.
pub fn forward(
    z: &TokenTensor,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(TokenTensor, Tensor)> {
    let mut g = Graph::new();
    let leaves = params.register(&mut g);
    let zi = g.constant_ref(&z.data);
    let (z_out, xhat, _) = network_graph(&mut g, zi, &leaves, cfg, params.n_targets(), None)?;
    Ok((
        TokenTensor {
            data: g.value(z_out).clone(),
            meta: z.meta.clone(),
        },
        g.value(xhat).clone(),
    ))
}

/// Masked mean squared error of `xhat` against the window's future targets.
pub fn reconstruction_loss(
    g: &mut Graph<'_>,
    xhat: NodeId,
    input: &WindowInput,
    future_len: usize,
) -> Result<NodeId> {
    let (truth, observed) = input.future_targets(future_len);
    g.mse_loss(xhat, &truth, &observed)
}
