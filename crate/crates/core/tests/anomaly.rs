use proptest::prelude::*;
use pulse_core::anomaly::{detect, percentile_labels, score, PercentileBounds, ScoreOptions, ScoreSeries};
use pulse_core::eval::{synth_patient, SynthProfile};
use pulse_core::model::{train, ModelConfig, TrainConfig, TrainedModel};
use pulse_core::series::{ChannelRole, SeriesFrame};

fn frame(names: &[&str], roles: &[ChannelRole], cols: &[Vec<f64>], period: i64) -> SeriesFrame {
    let len = cols[0].len();
    let cells = (0..len)
        .flat_map(|t| cols.iter().map(move |c| Some(c[t])))
        .collect();
    SeriesFrame::new(
        (0..len as i64).map(|t| t * period).collect(),
        names.iter().map(|s| s.to_string()).collect(),
        roles.to_vec(),
        cells,
        period,
    )
    .unwrap()
}

fn series(scores: &[Option<f64>]) -> ScoreSeries {
    ScoreSeries {
        timestamps: (0..scores.len() as i64).collect(),
        scores: scores.to_vec(),
        coverage: scores.iter().map(|s| u32::from(s.is_some())).collect(),
        channel_errors: scores.iter().map(|s| s.unwrap_or(f64::NAN)).collect(),
        channel_names: vec!["hr".into()],
        start_offset: scores.iter().position(Option::is_some).unwrap_or(scores.len()),
    }
}

fn sine_model() -> (TrainedModel, Vec<f64>, Vec<f64>) {
    let hr: Vec<f64> = (0..500)
        .map(|t| 65.0 + 6.0 * (t as f64 * 0.25).sin() + 0.5 * (t as f64 * 1.7).cos())
        .collect();
    let ctx: Vec<f64> = (0..500).map(|t| (t as f64 * 0.25).cos()).collect();
    let f = frame(&["hr", "motion"], &[ChannelRole::Target, ChannelRole::Context], &[hr.clone(), ctx.clone()], 60);
    let tcfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..Default::default()
    };
    let model = train(&[f], &ModelConfig::desk(), &tcfg).unwrap().model;
    (model, hr, ctx)
}

#[test]
fn spike_produces_the_largest_score() {
    let (model, mut hr, ctx) = sine_model();
    let sd = model.standardizer.std[0];
    let t_star = 250;
    hr[t_star] += 10.0 * sd;
    let f = frame(&["hr", "motion"], &[ChannelRole::Target, ChannelRole::Context], &[hr, ctx], 60);
    let s = score(&model, &f, ScoreOptions::default()).unwrap();
    let (argmax, _) = s
        .scores
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(argmax, t_star);
    // the first K - lambda rows are never inside a future segment
    assert_eq!(s.start_offset, 8);
    assert!(s.coverage[8..].iter().all(|c| *c >= 1));
}

#[test]
fn percentile_examples() {
    let vals: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0 + 0.001).collect();
    let f = frame(&["x"], &[ChannelRole::Target], &[vals.clone()], 1);
    let labels = percentile_labels(&f, PercentileBounds::default());
    assert_eq!(labels.iter().filter(|l| **l).count(), 6);
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    for (t, l) in labels.iter().enumerate() {
        assert_eq!(*l, vals[t] < sorted[3] || vals[t] > sorted[96]);
    }

    let flat = frame(&["x"], &[ChannelRole::Target], &[vec![4.0; 50]], 1);
    assert!(percentile_labels(&flat, PercentileBounds::default()).iter().all(|l| !l));

    // channel a breaches at t = 0, channel b at t = 1
    let mut a = vec![1.0; 40];
    let mut b = vec![1.0; 40];
    a[0] = 9.0;
    b[1] = -9.0;
    let two = frame(&["a", "b"], &[ChannelRole::Target, ChannelRole::Target], &[a, b], 1);
    let labels = percentile_labels(&two, PercentileBounds::default());
    let hits: Vec<usize> = (0..40).filter(|t| labels[*t]).collect();
    assert_eq!(hits, vec![0, 1]);
}

#[test]
fn no_exceedance_means_no_events() {
    let s = series(&[Some(0.1), Some(0.3), None, Some(0.2)]);
    assert!(detect(&s, 0.5, 0).is_empty());
}

fn runs(flags: &[bool]) -> usize {
    flags
        .iter()
        .enumerate()
        .filter(|(t, f)| **f && (*t == 0 || !flags[t - 1]))
        .count()
}

proptest! {
    #[test]
    fn events_are_maximal_runs(raw in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..10.0), 1..300), tau in 0.0f64..10.0) {
        let s = series(&raw);
        let events = detect(&s, tau, 0);
        let flags: Vec<bool> = raw.iter().map(|v| v.is_some_and(|x| x > tau)).collect();
        prop_assert_eq!(events.len(), runs(&flags));
        for e in &events {
            prop_assert!(e.end >= e.start);
            prop_assert!(e.peak_score > tau);
            prop_assert!((e.start..=e.end).all(|t| flags[t]));
        }
    }

    #[test]
    fn raising_tau_nests_flagged_sets(raw in prop::collection::vec(prop::option::of(0.0f64..10.0), 1..200), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = series(&raw);
        let cover = |tau| {
            let mut f = vec![false; raw.len()];
            for e in detect(&s, tau, 0) {
                f[e.start..=e.end].fill(true);
            }
            f
        };
        let (low, high) = (cover(lo), cover(hi));
        prop_assert!(high.iter().zip(&low).all(|(h, l)| !h || *l));
    }
}

#[test]
#[ignore = "fails at desk budgets: a pure-noise context channel raises mean scores by 40-240%"]
fn noise_context_barely_moves_scores() {
    let (base, _) = synth_patient(&SynthProfile::activity_fixture(), 1.5, 11).unwrap();
    let noisy = {
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut noise = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let hr: Vec<f64> = base.channel(0).into_iter().map(|v| v.unwrap()).collect();
        let act: Vec<f64> = base.channel(1).into_iter().map(|v| v.unwrap()).collect();
        let junk: Vec<f64> = (0..hr.len()).map(|_| noise()).collect();
        frame(
            &["hr", "activity", "junk"],
            &[ChannelRole::Target, ChannelRole::Context, ChannelRole::Context],
            &[hr, act, junk],
            base.sample_period(),
        )
    };
    let tcfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let mean_score = |f: &SeriesFrame| {
        let model = train(std::slice::from_ref(f), &ModelConfig::desk(), &tcfg).unwrap().model;
        let v = score(&model, f, ScoreOptions::default()).unwrap().values();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (a, b) = (mean_score(&base), mean_score(&noisy));
    eprintln!("mean score without noise channel {a:.4}, with {b:.4}");
    assert!((a - b).abs() / a < 0.10);
}
