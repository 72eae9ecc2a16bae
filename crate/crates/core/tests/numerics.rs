use proptest::prelude::*;
use pulse_core::numerics::gradcheck::{case_inputs, check_gradients, op_cases, DEFAULT_EPS, DEFAULT_FLOOR};
use pulse_core::numerics::{exponential_decay, Graph, NodeId, Tensor};
use pulse_core::Result;

#[test]
fn every_op_matches_finite_differences() {
    for case in op_cases() {
        for seed in 0..3 {
            let inputs = case_inputs(&case, seed);
            let r = check_gradients(&case.build, &inputs, DEFAULT_EPS, DEFAULT_FLOOR).unwrap();
            assert!(
                r.max_rel_error <= 1e-3,
                "{} seed {seed}: relative error {:.3e}",
                case.name,
                r.max_rel_error
            );
        }
    }
}

#[test]
fn decay_ratio_after_five_epochs() {
    assert!((exponential_decay(1.0, 0.9, 5) - 0.59049).abs() < 1e-12);
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Gelu,
    Sigmoid,
    Softmax,
    LayerNorm,
    Scale,
    MulW,
    AddW,
    MatW,
    Square,
}

fn apply(g: &mut Graph<'_>, h: NodeId, w: NodeId, step: Step) -> Result<NodeId> {
    Ok(match step {
        Step::Gelu => g.gelu(h),
        Step::Sigmoid => g.sigmoid(h),
        Step::Softmax => g.softmax(h),
        Step::LayerNorm => g.layer_norm(h),
        Step::Scale => g.scale(h, 1.3),
        Step::MulW => g.mul(h, w)?,
        Step::AddW => g.add(h, w)?,
        Step::MatW => {
            let wt = g.transpose(w, &[1, 0])?;
            let sq = g.matmul(wt, w)?;
            g.matmul(h, sq)?
        }
        Step::Square => g.mul(h, h)?,
    })
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        Just(Step::Gelu),
        Just(Step::Sigmoid),
        Just(Step::Softmax),
        Just(Step::LayerNorm),
        Just(Step::Scale),
        Just(Step::MulW),
        Just(Step::AddW),
        Just(Step::MatW),
        Just(Step::Square),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composed_graphs_match_finite_differences(
        steps in prop::collection::vec(step(), 1..=6),
        xs in prop::collection::vec(-1.0f64..1.0, 12),
        ws in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let inputs = [
            Tensor::new(vec![3, 4], xs).unwrap(),
            Tensor::new(vec![3, 4], ws).unwrap(),
        ];
        let build = |g: &mut Graph<'_>, x: &[NodeId]| {
            let mut h = x[0];
            for s in &steps {
                h = apply(g, h, x[1], *s)?;
            }
            Ok(h)
        };
        let r = check_gradients(&build, &inputs, DEFAULT_EPS, 1e-4).unwrap();
        prop_assert!(r.max_rel_error <= 1e-3, "{:?}: {:.3e}", steps, r.max_rel_error);
    }
}
