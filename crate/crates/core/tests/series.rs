use proptest::prelude::*;
use pulse_core::series::{
    dtw, find_gaps, interpolate, mase, sliding_windows, ChannelRole, InterpolationMethod, SeriesFrame, WindowSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_channel(cells: Vec<Option<f64>>) -> SeriesFrame {
    SeriesFrame::new(
        (0..cells.len() as i64).map(|t| t * 60).collect(),
        vec!["x".into()],
        vec![ChannelRole::Target],
        cells,
        60,
    )
    .unwrap()
}

fn two_channels(cells: Vec<Option<f64>>) -> SeriesFrame {
    let rows = cells.len() / 2;
    SeriesFrame::new(
        (0..rows as i64).collect(),
        vec!["a".into(), "b".into()],
        vec![ChannelRole::Target, ChannelRole::Context],
        cells,
        1,
    )
    .unwrap()
}

/// Every monotone warping path from (0,0) to (n-1,m-1), minimum total cost.
fn brute_force_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
        let here = (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(walk(a, b, i + 1, j));
        }
        if j + 1 < b.len() {
            best = best.min(walk(a, b, i, j + 1));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(walk(a, b, i + 1, j + 1));
        }
        here + best
    }
    walk(a, b, 0, 0)
}

#[test]
fn dtw_examples() {
    assert_eq!(dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0]), 0.0);
    assert_eq!(brute_force_dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0]), 0.0);
    let a = [0.3, -1.0, 2.0, 0.5];
    assert_eq!(dtw(&a, &a), 0.0);
}

#[test]
fn dtw_is_symmetric_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let a: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!((dtw(&a, &b) - dtw(&b, &a)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn dtw_matches_brute_force(a in prop::collection::vec(-3.0f64..3.0, 1..6), b in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        prop_assert!((dtw(&a, &b) - brute_force_dtw(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn dtw_never_worse_than_lockstep(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..60)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let lockstep: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!(dtw(&a, &b) <= lockstep + 1e-9);
    }

    #[test]
    fn mase_matches_hand_formula(steps in prop::collection::vec(-1.0f64..1.0, 4..80), noise in prop::collection::vec(-0.5f64..0.5, 80)) {
        // random walk split into a reference half and an evaluation half
        let walk: Vec<f64> = steps.iter().scan(0.0, |s, d| { *s += d; Some(*s) }).collect();
        let half = walk.len() / 2;
        let (reference, actual) = walk.split_at(half);
        let predicted: Vec<f64> = actual.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let mut naive = 0.0;
        for i in 1..reference.len() {
            naive += (reference[i] - reference[i - 1]).abs();
        }
        naive /= (reference.len() - 1) as f64;
        prop_assume!(naive > 0.0);
        let mut mae = 0.0;
        for i in 0..actual.len() {
            mae += (predicted[i] - actual[i]).abs();
        }
        mae /= actual.len() as f64;
        prop_assert!((mase(&predicted, actual, reference).unwrap() - mae / naive).abs() < 1e-12);
    }

    #[test]
    fn interpolation_respects_observed_cells_and_gap_limit(
        cells in prop::collection::vec(prop::option::weighted(0.7, -10.0f64..10.0), 4..120),
        max_gap in 0usize..8,
        window in any::<bool>(),
    ) {
        let mut cells = cells;
        if cells.len() % 2 == 1 {
            cells.pop();
        }
        // keep at least one observed cell per channel
        cells[0] = Some(1.0);
        cells[1] = Some(2.0);
        let frame = two_channels(cells);
        let method = if window { InterpolationMethod::NearestWindow } else { InterpolationMethod::NearestNeighbor };
        let (out, report) = interpolate(&frame, method, max_gap);
        let gaps = find_gaps(&frame);
        prop_assert_eq!(report.filled.len() + report.skipped.len(), gaps.len());
        for t in 0..frame.len() {
            for c in 0..frame.width() {
                if !frame.is_missing(t, c) {
                    prop_assert_eq!(out.get(t, c), frame.get(t, c));
                }
            }
        }
        for g in &gaps {
            for t in g.start..g.start + g.length {
                prop_assert_eq!(out.is_missing(t, g.channel), g.length > max_gap);
            }
        }
        if max_gap == 0 {
            prop_assert_eq!(&out, &frame);
        }
    }

    #[test]
    fn gaps_cover_exactly_the_mask(cells in prop::collection::vec(prop::option::weighted(0.6, 0.0f64..1.0), 2..100)) {
        let mut cells = cells;
        if cells.len() % 2 == 1 {
            cells.pop();
        }
        let frame = two_channels(cells);
        let mut covered = vec![false; frame.len() * 2];
        for g in find_gaps(&frame) {
            prop_assert!(g.length >= 1);
            for t in g.start..g.start + g.length {
                prop_assert!(!covered[t * 2 + g.channel]);
                covered[t * 2 + g.channel] = true;
            }
            // maximal: the cells just outside the run are observed
            if g.start > 0 {
                prop_assert!(!frame.is_missing(g.start - 1, g.channel));
            }
            if g.start + g.length < frame.len() {
                prop_assert!(!frame.is_missing(g.start + g.length, g.channel));
            }
        }
        for t in 0..frame.len() {
            for c in 0..2 {
                prop_assert_eq!(covered[t * 2 + c], frame.is_missing(t, c));
            }
        }
    }

    #[test]
    fn window_offsets_are_an_arithmetic_progression(t_len in 1usize..200, k in 2usize..40, stride in 1usize..10) {
        let frame = one_channel(vec![Some(0.0); t_len]);
        let spec = WindowSpec::new(k, 1, stride).unwrap();
        let views = sliding_windows(&frame, &spec);
        let expected = if k > t_len { 0 } else { (t_len - k) / stride + 1 };
        prop_assert_eq!(views.len(), expected);
        for (i, v) in views.iter().enumerate() {
            prop_assert_eq!(v.start, i * stride);
            prop_assert!(v.start + v.len <= t_len);
            prop_assert_eq!(v.len, k);
        }
    }
}

#[test]
fn nearest_window_beats_nearest_neighbour_on_sine_gaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut wins = 0;
    for _ in 0..100 {
        // smooth relative to the gap: at least 50 samples per cycle
        let period = rng.random_range(50.0..150.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.5..5.0);
        let truth: Vec<f64> = (0..120)
            .map(|t| amp * (std::f64::consts::TAU * t as f64 / period + phase).sin())
            .collect();
        let start = rng.random_range(10..107);
        let cells: Vec<Option<f64>> = truth
            .iter()
            .enumerate()
            .map(|(t, v)| (!(start..start + 3).contains(&t)).then_some(*v))
            .collect();
        let frame = one_channel(cells);
        let fill = |m| {
            let (out, _) = interpolate(&frame, m, 5);
            (0..out.len()).map(|t| out.get(t, 0).unwrap()).collect::<Vec<f64>>()
        };
        let region = start - 2..start + 5;
        let d_window = dtw(&fill(InterpolationMethod::NearestWindow)[region.clone()], &truth[region.clone()]);
        let d_neighbour = dtw(&fill(InterpolationMethod::NearestNeighbor)[region.clone()], &truth[region]);
        if d_window <= d_neighbour {
            wins += 1;
        }
    }
    eprintln!("nearest-window won {wins}/100");
    assert!(wins >= 80, "nearest-window won {wins}/100");
}

#[test]
fn window_count_examples() {
    let count = |t, k, s| sliding_windows(&one_channel(vec![Some(1.0); t]), &WindowSpec::new(k, 1, s).unwrap()).len();
    assert_eq!(count(10, 5, 1), 6);
    assert_eq!(count(16, 16, 1), 1);
    assert_eq!(count(100, 16, 8), 11);
}

#[test]
fn gaps_touching_either_end_are_filled_from_the_one_side() {
    // row-major pairs (a, b); `a` misses rows 0..2, `b` misses rows 4..6
    let cells = vec![
        None, Some(1.0),
        None, Some(2.0),
        Some(5.0), Some(3.0),
        Some(6.0), Some(4.0),
        Some(7.0), None,
        Some(8.0), None,
    ];
    for method in [InterpolationMethod::NearestNeighbor, InterpolationMethod::NearestWindow] {
        let (out, report) = interpolate(&two_channels(cells.clone()), method, 5);
        assert_eq!(report.filled.len(), 2);
        assert_eq!(out.missing_count(), 0);
        if method == InterpolationMethod::NearestNeighbor {
            assert_eq!(out.channel(0)[..2], [Some(5.0), Some(5.0)]);
            assert_eq!(out.channel(1)[4..], [Some(4.0), Some(4.0)]);
        }
    }
}
