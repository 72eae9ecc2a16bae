use proptest::prelude::*;
use pulse_core::numerics::Tensor;
use pulse_core::tokenizer::{
    assemble, embed_patches, mask_future, EmbedWeights, TimeKind, TokenTensor, TokenizerConfig, WindowInput,
};

#[derive(Debug, Clone, Copy)]
struct Case {
    k: usize,
    past_tokens: usize,
    future_tokens: usize,
    n: usize,
    m: usize,
    p: usize,
    d: usize,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..5, 0usize..6, 1usize..6, 1usize..4, 0usize..4, 1usize..4, 1usize..9).prop_map(
        |(k, past_tokens, future_tokens, n, m, p, d)| Case {
            k,
            past_tokens,
            future_tokens,
            n,
            m,
            p,
            d,
        },
    )
}

fn build(c: Case, values: &[f64]) -> TokenTensor {
    let big_k = c.k * (c.past_tokens + c.future_tokens);
    let cfg = TokenizerConfig {
        patch_size: c.k,
        embed_dim: c.d,
        prompt_count: c.p,
        future_len: c.k * c.future_tokens,
        anomaly_type_id: 1,
        mask_context_future: false,
    };
    let seq = |shape: &[usize], s: f64| Tensor::from_fn(shape, |i| ((i as f64 + s) * 0.61 + 0.3).sin());
    let (tw, tb, cw, cb) = (seq(&[c.k, c.d], 0.0), seq(&[c.d], 1.0), seq(&[c.k, c.d], 2.0), seq(&[c.d], 3.0));
    let gen = seq(&[c.d], 4.0);
    let bank = seq(&[2, c.p, c.d], 5.0);
    let weights = EmbedWeights {
        target_w: &tw,
        target_b: &tb,
        context_w: &cw,
        context_b: &cb,
        channel_id: None,
        gen: &gen,
        prompt_bank: &bank,
    };
    let width = c.n + c.m;
    let input = WindowInput {
        len: big_k,
        n_targets: c.n,
        n_context: c.m,
        values: (0..big_k * width).map(|i| values[i % values.len()] + i as f64 * 1e-3).collect(),
        observed: vec![true; big_k * width],
    };
    let (past, future, ctx) = embed_patches(&input, &cfg, &weights).unwrap();
    assert_eq!(past.data.shape(), &[c.past_tokens, c.n, c.d]);
    assert_eq!(future.data.shape(), &[c.future_tokens, c.n, c.d]);
    assert_eq!(ctx.data.shape(), &[big_k / c.k, c.m, c.d]);
    let masked = mask_future(&future, &gen).unwrap();
    assert_eq!(mask_future(&masked, &gen).unwrap(), masked);
    assemble(&past, &masked, &ctx, &bank, None, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shape_law(c in case(), values in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let z = build(c, &values);
        let big_k = c.k * (c.past_tokens + c.future_tokens);
        prop_assert_eq!(z.data.shape(), &[c.p + big_k / c.k, c.n + c.m, c.d]);
        prop_assert_eq!(z.meta.time.len(), z.time_tokens());
        prop_assert_eq!(z.meta.channels.len(), z.channels());
        // prompts form a contiguous prefix, then past, then future
        let kinds: Vec<TimeKind> = z.meta.time.iter().map(|t| t.kind).collect();
        let mut expected = vec![TimeKind::Prompt; c.p];
        expected.extend(vec![TimeKind::Past; c.past_tokens]);
        expected.extend(vec![TimeKind::Future; c.future_tokens]);
        prop_assert_eq!(kinds, expected);
    }

    #[test]
    fn distinct_past_values_give_distinct_tokens(c in case(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        prop_assume!(c.past_tokens > 0 && (a - b).abs() > 1e-6);
        prop_assert_ne!(build(c, &[a]).data, build(c, &[b]).data);
    }
}
