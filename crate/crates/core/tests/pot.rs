use pulse_core::anomaly::{fit_gpd, fit_pot};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};

fn exponential(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Exp::new(1.0).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Inverse-CDF draws from GPD(xi, sigma).
fn gpd_samples(seed: u64, n: usize, xi: f64, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(0.0f64, 1.0).unwrap();
    (0..n)
        .map(|_| sigma / xi * ((1.0 - u.sample(&mut rng)).powf(-xi) - 1.0))
        .collect()
}

#[test]
fn exponential_tail_quantile() {
    let truth = -(1e-3f64).ln();
    for seed in 0..5 {
        let scores = exponential(seed, 100_000);
        let t = fit_pot(&scores, 1e-3, 0.98).unwrap();
        assert!(!t.fallback);
        let rel = (t.tau - truth).abs() / truth;
        eprintln!("seed {seed}: tau {:.4} xi {:.4}", t.tau, t.gpd.unwrap().xi);
        assert!(rel <= 0.10, "seed {seed}: tau {} vs {truth}", t.tau);
    }
}

#[test]
fn tau_inverts_the_fitted_tail() {
    for seed in 0..5 {
        let scores = gpd_samples(100 + seed, 20_000, 0.15, 2.0);
        let t = fit_pot(&scores, 1e-3, 0.98).unwrap();
        assert!(t.tau >= t.u);
        assert!(t.gpd.unwrap().sigma > 0.0);
        let p = t.tail_probability(t.tau).unwrap();
        assert!((p - t.q).abs() <= 1e-9, "{p} vs {}", t.q);
    }
}

#[test]
fn recovers_gpd_shape() {
    for seed in 0..3 {
        let y = gpd_samples(seed, 50_000, 0.2, 1.0);
        let g = fit_gpd(&y).unwrap();
        assert!((g.xi - 0.2).abs() <= 0.1, "xi {}", g.xi);
        assert!((g.sigma - 1.0).abs() <= 0.1, "sigma {}", g.sigma);
    }
}

#[test]
fn negative_shape_is_reachable() {
    let y = gpd_samples(9, 20_000, -0.3, 1.0);
    let g = fit_gpd(&y).unwrap();
    assert!((g.xi + 0.3).abs() <= 0.1, "xi {}", g.xi);
}

#[test]
fn thin_tail_falls_back() {
    let scores: Vec<f64> = (0..1000).map(f64::from).collect();
    let t = fit_pot(&scores, 1e-3, 0.98).unwrap();
    assert!(t.fallback);
    assert_eq!(t.tau, 998.0);
}
