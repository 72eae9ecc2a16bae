use crate::error::{Error, Result};

/// Adam hyper-parameters plus the per-epoch exponential decay factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 0.9,
        }
    }
}

/// `lr_0 * gamma^epoch`.
pub fn exponential_decay(lr0: f64, gamma: f64, epoch: usize) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Applied,
    /// Gradient contained NaN or infinity; parameters and moments untouched.
    Skipped {
        non_finite: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        cfg: &AdamConfig,
    ) -> Result<StepOutcome> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "state {} / params {} / grads {}",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        let non_finite = grads.iter().filter(|g| !g.is_finite()).count();
        if non_finite > 0 {
            log::warn!("skipping optimiser step: {non_finite} non-finite gradient entries");
            return Ok(StepOutcome::Skipped { non_finite });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_advances_time_only() {
        let mut state = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        let out = state
            .step(&mut p, &[0.0; 3], 1e-3, &AdamConfig::default())
            .unwrap();
        assert_eq!(out, StepOutcome::Applied);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn quadratic_converges_to_closed_form_minimum() {
        // f(x) = (x - 3)^2, minimum at 3
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(1);
        let mut x = vec![-4.0];
        for _ in 0..500 {
            let g = [2.0 * (x[0] - 3.0)];
            state.step(&mut x, &g, cfg.lr, &cfg).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-2, "x = {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut state = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        let out = state
            .step(&mut p, &[f64::NAN, 1.0], 0.1, &AdamConfig::default())
            .unwrap();
        assert_eq!(out, StepOutcome::Skipped { non_finite: 1 });
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn decay_schedule() {
        let ratio = exponential_decay(5e-4, 0.9, 5) / 5e-4;
        assert!((ratio - 0.59049).abs() < 1e-12);
    }
}
