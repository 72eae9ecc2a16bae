use proptest::prelude::*;
use pulse_core::eval::{confusion, detect_beats, kfold_f1, rmssd, KFoldOptions};
use pulse_core::series::{ChannelRole, SeriesFrame};
use pulse_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const RATE: f64 = 64.0;

/// Gaussian pulses at the given beat times, plus optional noise.
fn pulse_wave(beats: &[f64], seconds: f64, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..(seconds * RATE) as usize)
        .map(|i| {
            let t = i as f64 / RATE;
            let s: f64 = beats
                .iter()
                .map(|b| (-(t - b).powi(2) / (2.0 * 0.04f64.powi(2))).exp())
                .sum();
            s + noise * normal.sample(&mut rng)
        })
        .collect()
}

#[test]
fn sixty_bpm_pulse_train() {
    let beats: Vec<f64> = (0..120).map(|i| 0.5 + i as f64).collect();
    let wave = pulse_wave(&beats, 120.0, 0.02, 1);
    let found = detect_beats(&wave, RATE).unwrap();
    let ibis: Vec<f64> = found.intervals().iter().map(|(_, d)| *d).collect();
    let bpm = 60.0 * ibis.len() as f64 / ibis.iter().sum::<f64>();
    assert!((bpm - 60.0).abs() <= 1.0, "{bpm} bpm");
    assert!((found.len() as i64 - 120).abs() <= 2, "{} beats", found.len());
}

#[test]
fn pure_noise_is_mostly_rejected() {
    let seconds = 120.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let wave: Vec<f64> = (0..(seconds * RATE) as usize).map(|_| normal.sample(&mut rng)).collect();
    let found = detect_beats(&wave, RATE).unwrap();
    // one beat per refractory period is the most any detector could report
    let plausible_max = seconds / 0.25;
    assert!((found.len() as f64) < 0.1 * plausible_max, "{} beats", found.len());
}

#[test]
fn double_peaks_within_refractory_count_once() {
    let mut beats = Vec::new();
    for i in 0..60 {
        let t = 0.5 + i as f64;
        beats.push(t);
        beats.push(t + 0.1);
    }
    let wave = pulse_wave(&beats, 60.0, 0.0, 0);
    let found = detect_beats(&wave, RATE).unwrap();
    assert!((found.len() as i64 - 60).abs() <= 1, "{} beats", found.len());
}

proptest! {
    #[test]
    fn rmssd_is_reversal_invariant(ibis in prop::collection::vec(0.3f64..2.5, 2..60)) {
        let mut rev = ibis.clone();
        rev.reverse();
        let (a, b) = (rmssd(&ibis).unwrap(), rmssd(&rev).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}

fn labelled_frame(labels: &[bool]) -> SeriesFrame {
    SeriesFrame::new(
        (0..labels.len() as i64).collect(),
        vec!["x".into()],
        vec![ChannelRole::Target],
        labels.iter().map(|l| Some(f64::from(u8::from(*l)))).collect(),
        1,
    )
    .unwrap()
}

fn row_flags(test: &SeriesFrame, all: &[bool]) -> Vec<bool> {
    test.timestamps().iter().map(|t| all[*t as usize]).collect()
}

fn labels_with_events(len: usize) -> Vec<bool> {
    (0..len).map(|t| t % 37 < 3).collect()
}

#[test]
fn perfect_detector_scores_one() {
    let labels = labels_with_events(500);
    let frame = labelled_frame(&labels);
    let det = |_: &[SeriesFrame], test: &SeriesFrame| -> Result<Vec<bool>> { Ok(row_flags(test, &labels)) };
    let r = kfold_f1(&frame, &labels, &det, KFoldOptions::default()).unwrap();
    assert!(r.folds.iter().all(|f| f.f1 == Some(1.0)));
    assert_eq!(r.f1.mean, 1.0);
    assert_eq!(r.fpr.mean, 0.0);
}

#[test]
fn flag_everything_gives_positive_rate_precision() {
    let labels = labels_with_events(500);
    let frame = labelled_frame(&labels);
    let det = |_: &[SeriesFrame], test: &SeriesFrame| -> Result<Vec<bool>> { Ok(vec![true; test.len()]) };
    let r = kfold_f1(&frame, &labels, &det, KFoldOptions::default()).unwrap();
    for f in &r.folds {
        let block = &labels[f.start..f.start + f.len];
        let rate = block.iter().filter(|l| **l).count() as f64 / block.len() as f64;
        assert!((f.precision - rate).abs() < 1e-12);
        assert_eq!(f.recall, 1.0);
    }
}

#[test]
fn fold_without_positives_is_excluded() {
    let mut labels = vec![false; 100];
    labels[5] = true;
    labels[90] = true;
    let frame = labelled_frame(&labels);
    let det = |_: &[SeriesFrame], test: &SeriesFrame| -> Result<Vec<bool>> { Ok(vec![false; test.len()]) };
    let r = kfold_f1(&frame, &labels, &det, KFoldOptions::default()).unwrap();
    assert_eq!(r.excluded, vec![1, 2, 3]);
    assert_eq!(r.f1.mean, 0.0);
}

#[test]
fn labelled_rows_are_hidden_from_fitting() {
    let labels = labels_with_events(200);
    let frame = labelled_frame(&labels);
    let det = |train: &[SeriesFrame], test: &SeriesFrame| -> Result<Vec<bool>> {
        for f in train {
            for t in 0..f.len() {
                assert!(f.get(t, 0) != Some(1.0), "labelled row visible to the detector");
            }
        }
        Ok(vec![false; test.len()])
    };
    kfold_f1(&frame, &labels, &det, KFoldOptions::default()).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_the_series_and_f1_is_consistent(len in 10usize..400, folds in 2usize..8, seed in 0u64..1000) {
        prop_assume!(folds <= len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..len).map(|_| rng.random_bool(0.2)).collect();
        let guesses: Vec<bool> = (0..len).map(|_| rng.random_bool(0.3)).collect();
        let frame = labelled_frame(&labels);
        let det = |_: &[SeriesFrame], test: &SeriesFrame| -> Result<Vec<bool>> { Ok(row_flags(test, &guesses)) };
        let opts = KFoldOptions { folds, ..Default::default() };
        let r = kfold_f1(&frame, &labels, &det, opts).unwrap();
        let mut next = 0;
        for f in &r.folds {
            prop_assert_eq!(f.start, next);
            prop_assert!(f.len > 0);
            next += f.len;
            let c = f.confusion;
            prop_assert_eq!(c, confusion(&guesses[f.start..next], &labels[f.start..next]));
            for rate in [f.precision, f.recall, f.fpr, f.fnr] {
                prop_assert!((0.0..=1.0).contains(&rate));
            }
            if let Some(f1) = f.f1 {
                let (p, rc) = (c.tp as f64 / (c.tp + c.fp).max(1) as f64, c.tp as f64 / (c.tp + c.fn_) as f64);
                let want = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
                prop_assert!((f1 - want).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(next, len);
    }
}
