use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum exceedances over `u` before a tail fit is attempted.
pub const MIN_EXCEEDANCES: usize = 50;

/// Generalized Pareto tail: shape `xi`, scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gpd {
    pub xi: f64,
    pub sigma: f64,
}

impl Gpd {
    /// Log-likelihood of excesses `y`; `-inf` outside the support.
    pub fn log_likelihood(&self, y: &[f64]) -> f64 {
        if !(self.sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = y.len() as f64;
        if self.xi.abs() < 1e-9 {
            return -n * self.sigma.ln() - y.iter().sum::<f64>() / self.sigma;
        }
        let mut s = 0.0;
        for &v in y {
            let z = 1.0 + self.xi * v / self.sigma;
            if z <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += z.ln();
        }
        -n * self.sigma.ln() - (1.0 + 1.0 / self.xi) * s
    }

    /// `P(Y > y)` for an excess `y`.
    pub fn survival(&self, y: f64) -> f64 {
        if self.xi.abs() < 1e-6 {
            (-y / self.sigma).exp()
        } else {
            (1.0 + self.xi * y / self.sigma)
                .max(0.0)
                .powf(-1.0 / self.xi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotThreshold {
    /// Initial threshold: empirical `u_quantile` of the calibration scores.
    pub u: f64,
    pub u_quantile: f64,
    /// Fitted tail; absent on the fallback path.
    pub gpd: Option<Gpd>,
    pub q: f64,
    pub tau: f64,
    pub n_total: usize,
    pub n_exceed: usize,
    pub fallback: bool,
}

impl PotThreshold {
    /// Modelled probability that a score exceeds `x >= u`.
    pub fn tail_probability(&self, x: f64) -> Option<f64> {
        let gpd = self.gpd?;
        Some(self.n_exceed as f64 / self.n_total as f64 * gpd.survival(x - self.u))
    }

    /// Empirical `(1 - q)` quantile, used when the tail is too thin to fit.
    pub fn fallback(scores: &[f64], q: f64, u_quantile: f64) -> Result<Self> {
        let sorted = sorted_finite(scores)?;
        let u = empirical_quantile(&sorted, u_quantile);
        Ok(Self {
            u,
            u_quantile,
            gpd: None,
            q,
            tau: empirical_quantile(&sorted, 1.0 - q),
            n_total: sorted.len(),
            n_exceed: sorted.iter().filter(|s| **s > u).count(),
            fallback: true,
        })
    }
}

fn sorted_finite(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Precondition("no calibration scores".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            stage: "pot".into(),
            detail: format!("calibration score {bad}"),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Nearest-rank quantile of ascending `sorted`: the smallest value with at
/// least a `p` fraction of the sample at or below it.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

fn moments_fit(y: &[f64]) -> Option<Gpd> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if !(var > 0.0) || !(mean > 0.0) {
        return None;
    }
    let r = mean * mean / var;
    Some(Gpd {
        xi: 0.5 * (1.0 - r),
        sigma: 0.5 * mean * (r + 1.0),
    })
}

/// Profile-likelihood equation in `theta = xi / sigma`; zero at stationary points.
fn grimshaw_w(y: &[f64], theta: f64) -> f64 {
    let n = y.len() as f64;
    let (mut u, mut v) = (0.0, 0.0);
    for &x in y {
        let s = 1.0 + theta * x;
        u += 1.0 / s;
        v += s.ln();
    }
    (u / n) * (1.0 + v / n) - 1.0
}

fn grimshaw_gpd(y: &[f64], theta: f64) -> Gpd {
    let n = y.len() as f64;
    let xi = y.iter().map(|x| (1.0 + theta * x).ln()).sum::<f64>() / n;
    Gpd {
        xi,
        sigma: xi / theta,
    }
}

fn bisect(y: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = grimshaw_w(y, lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let f_mid = grimshaw_w(y, mid);
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-14 * hi.abs().max(lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn roots_in(y: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev = (grid[0], grimshaw_w(y, grid[0]));
    for &t in &grid[1..] {
        let f = grimshaw_w(y, t);
        if f.is_finite() && prev.1.is_finite() && (f < 0.0) != (prev.1 < 0.0) {
            roots.push(bisect(y, prev.0, t));
        }
        prev = (t, f);
    }
    roots
}

/// Fit a GPD to positive excesses: method-of-moments start, then every
/// stationary point of the likelihood found along `theta`, keeping the
/// candidate with the highest likelihood.
pub fn fit_gpd(excesses: &[f64]) -> Option<Gpd> {
    let y: Vec<f64> = excesses.iter().copied().filter(|v| *v >= 0.0).collect();
    if y.len() < 2 {
        return None;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return None;
    }
    let y_max = y.iter().copied().fold(0.0, f64::max);
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = 1e-8 / mean;

    let mut candidates = vec![Gpd {
        xi: 0.0,
        sigma: mean,
    }];
    candidates.extend(moments_fit(&y));

    const STEPS: usize = 200;
    let lower = -1.0 / y_max;
    let neg: Vec<f64> = (0..=STEPS)
        .map(|i| lower + eps + (-eps - lower - eps) * i as f64 / STEPS as f64)
        .collect();
    let upper = if y_min > 0.0 {
        (2.0 * (mean - y_min) / (y_min * y_min)).max(10.0 * eps)
    } else {
        1e6 / mean
    };
    let pos: Vec<f64> = (0..=STEPS)
        .map(|i| eps * (upper / eps).powf(i as f64 / STEPS as f64))
        .collect();
    for theta in roots_in(&y, &neg).into_iter().chain(roots_in(&y, &pos)) {
        let g = grimshaw_gpd(&y, theta);
        if g.sigma > 0.0 && g.xi.is_finite() {
            candidates.push(g);
        }
    }
    candidates
        .into_iter()
        .map(|g| (g.log_likelihood(&y), g))
        .filter(|(ll, _)| ll.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, g)| g)
}

/// Peaks-over-threshold calibration of `tau` at exceedance risk `q`.
pub fn fit_pot(scores: &[f64], q: f64, u_quantile: f64) -> Result<PotThreshold> {
    if !(u_quantile > 0.0 && u_quantile < 1.0) || !(q > 0.0 && q < 1.0 - u_quantile) {
        return Err(Error::Precondition(format!(
            "need 0 < q < 1 - u_quantile, got q={q}, u_quantile={u_quantile}"
        )));
    }
    let sorted = sorted_finite(scores)?;
    let u = empirical_quantile(&sorted, u_quantile);
    let excesses: Vec<f64> = sorted.iter().filter(|s| **s > u).map(|s| s - u).collect();
    if excesses.len() < MIN_EXCEEDANCES {
        log::warn!(
            "{} exceedances over u={u:.4} (< {MIN_EXCEEDANCES}); using the empirical quantile",
            excesses.len()
        );
        return PotThreshold::fallback(scores, q, u_quantile);
    }
    let Some(gpd) = fit_gpd(&excesses) else {
        log::warn!("tail fit failed; using the empirical quantile");
        return PotThreshold::fallback(scores, q, u_quantile);
    };
    let (n_total, n_exceed) = (sorted.len(), excesses.len());
    let r = q * n_total as f64 / n_exceed as f64;
    let tau = if gpd.xi.abs() < 1e-6 {
        u - gpd.sigma * r.ln()
    } else {
        u + gpd.sigma / gpd.xi * (r.powf(-gpd.xi) - 1.0)
    };
    Ok(PotThreshold {
        u,
        u_quantile,
        gpd: Some(gpd),
        q,
        tau,
        n_total,
        n_exceed,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&s, 0.98), 98.0);
        assert_eq!(empirical_quantile(&s, 0.999), 100.0);
        assert_eq!(empirical_quantile(&s, 0.0), 1.0);
    }

    #[test]
    fn constant_scores_fall_back_to_the_constant() {
        let t = fit_pot(&[2.5; 1000], 1e-3, 0.98).unwrap();
        assert!(t.fallback);
        assert_eq!(t.tau, 2.5);
    }

    #[test]
    fn rejects_bad_risk() {
        assert!(fit_pot(&[1.0, 2.0], 0.05, 0.98).is_err());
        assert!(fit_pot(&[], 1e-3, 0.98).is_err());
    }
}
