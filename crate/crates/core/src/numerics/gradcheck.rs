//! Finite-difference checks of the tape's analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};
use crate::error::Result;

/// Builds an output node from leaf nodes; any output shape is allowed.
pub type Builder = fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>;

/// A named op (or small composition) with the shapes of its inputs.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Vec<usize>>,
    pub build: Builder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
}

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Contract the output with a fixed random probe so every output cell
/// contributes to the scalar being differentiated.
fn scalar_of(g: &mut Graph<'_>, out: NodeId, probe: &Tensor) -> Result<NodeId> {
    if g.shape(out).is_empty() {
        return Ok(out);
    }
    let p = g.constant(probe.clone());
    let prod = g.mul(out, p)?;
    Ok(g.reduce_mean(prod))
}

fn evaluate(build: &dyn Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>, inputs: &[Tensor], probe: &mut Option<Tensor>, seed: u64) -> Result<f64> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t)).collect();
    let out = build(&mut g, &ids)?;
    let probe = probe.get_or_insert_with(|| random_tensor(g.shape(out), seed));
    let s = scalar_of(&mut g, out, probe)?;
    Ok(g.value(s).data()[0])
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Compare analytic and central-difference gradients for every input cell.
pub fn check_gradients(
    build: &dyn Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
    inputs: &[Tensor], eps: f64, floor: f64) -> Result<GradReport> {
    let probe_seed = 0x5eed;
    let mut probe = None;
    evaluate(build, inputs, &mut probe, probe_seed)?;
    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t)).collect();
        let out = build(&mut g, &ids)?;
        let s = scalar_of(&mut g, out, probe.as_ref().expect("probe set above"))?;
        let grads = g.backward(s);
        ids.iter()
            .zip(inputs)
            .map(|(id, t)| grads.get(*id).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let x = input.data()[i];
            work[k].data_mut()[i] = x + eps;
            let up = evaluate(build, &work, &mut probe, probe_seed)?;
            work[k].data_mut()[i] = x - eps;
            let down = evaluate(build, &work, &mut probe, probe_seed)?;
            work[k].data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[k].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradReport {
        max_rel_error: worst,
        checked,
    })
}

/// Random inputs for `case`, drawn from `seed`.
pub fn case_inputs(case: &GradCase, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    case.inputs
        .iter()
        .map(|s| Tensor::from_fn(s, |_| rng.random_range(-1.5..1.5)))
        .collect()
}

/// One case per differentiable op on the tape, plus composed graphs.
pub fn op_cases() -> Vec<GradCase> {
    fn case(name: &'static str, inputs: &[&[usize]], build: Builder) -> GradCase {
        GradCase {
            name,
            inputs: inputs.iter().map(|s| s.to_vec()).collect(),
            build,
        }
    }
    vec![
        case("matmul", &[&[3, 4], &[4, 2]], |g, x| g.matmul(x[0], x[1])),
        case("bmm", &[&[2, 3, 4], &[2, 4, 2]], |g, x| g.bmm(x[0], x[1])),
        case("add", &[&[2, 3], &[2, 3]], |g, x| g.add(x[0], x[1])),
        case("add_broadcast", &[&[2, 3, 4], &[4]], |g, x| g.add(x[0], x[1])),
        case("mul", &[&[3, 4], &[3, 4]], |g, x| g.mul(x[0], x[1])),
        case("mul_broadcast", &[&[2, 3], &[3]], |g, x| g.mul(x[0], x[1])),
        case("mul_scalar", &[&[2, 3], &[1]], |g, x| g.mul(x[0], x[1])),
        case("scale", &[&[5]], |g, x| Ok(g.scale(x[0], -0.7))),
        case("softmax", &[&[3, 5]], |g, x| Ok(g.softmax(x[0]))),
        case("layer_norm", &[&[3, 6]], |g, x| Ok(g.layer_norm(x[0]))),
        case("gelu", &[&[7]], |g, x| Ok(g.gelu(x[0]))),
        case("sigmoid", &[&[7]], |g, x| Ok(g.sigmoid(x[0]))),
        case("transpose", &[&[2, 3, 4]], |g, x| g.transpose(x[0], &[2, 0, 1])),
        case("reshape", &[&[2, 6]], |g, x| g.reshape(x[0], &[3, 4])),
        case("concat", &[&[2, 3], &[2, 2]], |g, x| g.concat(&[x[0], x[1]], 1)),
        case("slice", &[&[4, 3]], |g, x| g.slice(x[0], 0, 1, 2)),
        case("resize_up", &[&[3, 2]], |g, x| g.linear_interp_resize(x[0], 0, 7)),
        case("resize_down", &[&[6, 2]], |g, x| g.linear_interp_resize(x[0], 0, 4)),
        case("expand", &[&[2, 1, 3]], |g, x| g.expand(x[0], 1, 4)),
        case("reduce_mean", &[&[3, 3]], |g, x| Ok(g.reduce_mean(x[0]))),
        case("mse_loss", &[&[2, 3]], |g, x| {
            let target = [0.5, -0.2, 0.0, 1.0, 0.3, -1.0];
            let observed = [true, false, true, true, false, true];
            g.mse_loss(x[0], &target, &observed)
        }),
        case("composed_attention", &[&[3, 4], &[4, 4], &[4, 4]], |g, x| {
            let q = g.matmul(x[0], x[1])?;
            let kt = g.matmul(x[0], x[2])?;
            let kt = g.transpose(kt, &[1, 0])?;
            let s = g.matmul(q, kt)?;
            let s = g.scale(s, 0.5);
            Ok(g.softmax(s))
        }),
        case("composed_block", &[&[4, 3], &[3, 3], &[3]], |g, x| {
            let h = g.layer_norm(x[0]);
            let h = g.matmul(h, x[1])?;
            let h = g.add(h, x[2])?;
            let h = g.gelu(h);
            let h = g.add(h, x[0])?;
            Ok(g.sigmoid(h))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_leaf_accumulates() {
        let ok = check_gradients(&|g, x| g.mul(x[0], x[0]), &[Tensor::full(&[2], 0.8)], 1e-6, 1e-6).unwrap();
        assert!(ok.max_rel_error < 1e-6);
        assert_eq!(ok.checked, 2);
    }
}
