//! Training-stabilization numerics: z-loss with analytic gradient, dynamic
//! beta2, linear warm-up, and gradient-norm clipping.
//!
//! Pure functions, no trainer attached; the test suite checks them against
//! closed forms and finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stabilization hyperparameters.
///
/// `weight_decay` has no default on purpose: it must be chosen per run and
/// is echoed into run manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub weight_decay: f64,
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    pub max_grad_norm: f64,
    #[serde(default)]
    pub beta2_dynamic: bool,
}

fn default_epsilon() -> f64 {
    1e-16
}

fn default_warmup_fraction() -> f64 {
    0.10
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::invalid("OptimizerConfig", "epsilon must be > 0"));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 0.1) {
            return Err(Error::invalid(
                "OptimizerConfig",
                "warmup_fraction must be in (0, 0.1]",
            ));
        }
        if !self.max_grad_norm.is_finite() || self.max_grad_norm <= 0.0 {
            return Err(Error::invalid(
                "OptimizerConfig",
                "max_grad_norm must be > 0",
            ));
        }
        if !self.weight_decay.is_finite() {
            return Err(Error::invalid(
                "OptimizerConfig",
                "weight_decay must be finite",
            ));
        }
        Ok(())
    }
}

/// Step counters for schedule evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub step: u64,
    pub total_steps: u64,
}

impl ScheduleState {
    pub fn new(total_steps: u64) -> ScheduleState {
        ScheduleState {
            step: 1,
            total_steps,
        }
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }

    pub fn lr(&self, peak_lr: f64, warmup_fraction: f64) -> Result<f64> {
        warmup_lr(self.step, self.total_steps, peak_lr, warmup_fraction)
    }

    pub fn beta2(&self) -> Result<f64> {
        beta2_dynamic(self.step)
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("logits", "all logits must be finite"));
    }
    Ok(())
}

/// Max-shifted log-sum-exp of the logits.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&y| (y - max).exp()).sum();
    max + sum.ln()
}

/// Softmax probabilities of the logits, shifted for stability.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&y| (y - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Auxiliary z-loss: the squared log partition function of the logits.
pub fn z_loss(logits: &[f64]) -> Result<f64> {
    check_logits(logits)?;
    let lse = log_sum_exp(logits);
    Ok(lse * lse)
}

/// Analytic z-loss gradient: component `j` is `2 * logZ * p_j`.
pub fn z_loss_grad(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let lse = log_sum_exp(logits);
    let probs = softmax(logits)?;
    Ok(probs.into_iter().map(|p| 2.0 * lse * p).collect())
}

/// AdamW second-moment coefficient schedule `1 - k^(-0.8)` for step `k >= 1`.
pub fn beta2_dynamic(step: u64) -> Result<f64> {
    if step < 1 {
        return Err(Error::invalid("step", "beta2 schedule needs step >= 1"));
    }
    Ok(1.0 - (step as f64).powf(-0.8))
}

/// Linear warm-up from 0 to `peak_lr` over `ceil(fraction * total)` steps,
/// then constant at peak. Any post-warm-up decay belongs to the trainer,
/// not here.
pub fn warmup_lr(step: u64, total_steps: u64, peak_lr: f64, warmup_fraction: f64) -> Result<f64> {
    if total_steps < 1 {
        return Err(Error::invalid("total_steps", "must be >= 1"));
    }
    if step < 1 || step > total_steps {
        return Err(Error::invalid(
            "step",
            format!("step {step} outside 1..={total_steps}"),
        ));
    }
    if !(warmup_fraction > 0.0 && warmup_fraction <= 1.0) {
        return Err(Error::invalid("warmup_fraction", "must be in (0, 1]"));
    }
    if !peak_lr.is_finite() {
        return Err(Error::invalid("peak_lr", "must be finite"));
    }
    let warmup_len = (warmup_fraction * total_steps as f64).ceil() as u64;
    if step <= warmup_len {
        Ok(peak_lr * step as f64 / warmup_len as f64)
    } else {
        Ok(peak_lr)
    }
}

/// Scale `vector` down to `max_norm` when its L2 norm exceeds it; otherwise
/// return it unchanged. Direction is always preserved.
pub fn clip_grad_norm(vector: &[f64], max_norm: f64) -> Vec<f64> {
    assert!(max_norm > 0.0, "max_norm must be > 0");
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= max_norm {
        vector.to_vec()
    } else {
        let scale = max_norm / norm;
        vector.iter().map(|x| x * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn z_loss_closed_forms() {
        assert_eq!(z_loss(&[0.0]).unwrap(), 0.0);
        assert!((z_loss(&[0.0, 0.0]).unwrap() - LN2 * LN2).abs() < 1e-15);
    }

    #[test]
    fn z_loss_survives_huge_logits() {
        let expected = (1000.0 + LN2) * (1000.0 + LN2);
        let got = z_loss(&[1000.0, 1000.0]).unwrap();
        assert!((got - expected).abs() / expected < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn z_loss_rejects_bad_input() {
        assert!(z_loss(&[]).is_err());
        assert!(z_loss(&[f64::NAN]).is_err());
        assert!(z_loss(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn z_loss_grad_closed_forms() {
        assert_eq!(z_loss_grad(&[0.0]).unwrap(), vec![0.0]);
        let g = z_loss_grad(&[0.0, 0.0]).unwrap();
        for component in g {
            assert!((component - LN2).abs() < 1e-15);
        }
    }

    /// Central finite differences of z_loss, the independent gradient oracle.
    fn fd_grad(logits: &[f64], h: f64) -> Vec<f64> {
        let mut grad = Vec::with_capacity(logits.len());
        for j in 0..logits.len() {
            let mut plus = logits.to_vec();
            plus[j] += h;
            let mut minus = logits.to_vec();
            minus[j] -= h;
            grad.push((z_loss(&plus).unwrap() - z_loss(&minus).unwrap()) / (2.0 * h));
        }
        grad
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    #[test]
    fn z_loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let dim = rng.random_range(2..=64);
            // keep logZ comfortably away from zero so the relative error
            // of the near-zero gradient does not dominate
            let logits: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.5)).collect();
            let analytic = z_loss_grad(&logits).unwrap();
            let numeric = fd_grad(&logits, 1e-4);
            let err = rel_err(&analytic, &numeric);
            assert!(err < 1e-6, "trial {trial}: rel err {err}");
        }
    }

    #[test]
    fn z_loss_shift_identity() {
        // z_loss(y + c) = (logZ(y) + c)^2
        let logits = [0.3, -1.2, 2.0, 0.0];
        let c = 5.25;
        let shifted: Vec<f64> = logits.iter().map(|y| y + c).collect();
        let base_lse = log_sum_exp(&logits);
        let expected = (base_lse + c) * (base_lse + c);
        assert!((z_loss(&shifted).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn beta2_values() {
        assert_eq!(beta2_dynamic(1).unwrap(), 0.0);
        assert_eq!(beta2_dynamic(32).unwrap(), 0.9375);
        assert!(beta2_dynamic(0).is_err());
    }

    #[test]
    fn beta2_is_increasing_and_below_one() {
        let mut prev = -1.0;
        for k in 1..2000u64 {
            let b = beta2_dynamic(k).unwrap();
            assert!((0.0..1.0).contains(&b));
            assert!(b > prev, "not increasing at k={k}");
            prev = b;
        }
    }

    #[test]
    fn warmup_schedule_shape() {
        // fraction 0.10 of 1000 steps -> 100 warm-up steps
        assert_eq!(warmup_lr(100, 1000, 3e-4, 0.10).unwrap(), 3e-4);
        assert_eq!(warmup_lr(50, 1000, 3e-4, 0.10).unwrap(), 1.5e-4);
        assert_eq!(warmup_lr(101, 1000, 3e-4, 0.10).unwrap(), 3e-4);
        assert_eq!(warmup_lr(1000, 1000, 3e-4, 0.10).unwrap(), 3e-4);
        assert!(warmup_lr(0, 1000, 3e-4, 0.10).is_err());
        assert!(warmup_lr(1001, 1000, 3e-4, 0.10).is_err());
        assert!(warmup_lr(1, 1000, 3e-4, 0.0).is_err());
    }

    #[test]
    fn warmup_is_nondecreasing() {
        let mut prev = 0.0;
        for step in 1..=200u64 {
            let lr = warmup_lr(step, 200, 1.0, 0.1).unwrap();
            assert!(lr >= prev);
            prev = lr;
        }
    }

    #[test]
    fn clip_cases() {
        assert_eq!(clip_grad_norm(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        // exactly at the boundary: untouched
        assert_eq!(clip_grad_norm(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        // twice the budget: halved exactly
        let clipped = clip_grad_norm(&[2.0, 0.0], 1.0);
        assert_eq!(clipped, vec![1.0, 0.0]);
    }

    #[test]
    fn optimizer_config_validation() {
        let good = OptimizerConfig {
            epsilon: 1e-16,
            weight_decay: 0.1,
            warmup_fraction: 0.10,
            max_grad_norm: 1.0,
            beta2_dynamic: false,
        };
        assert!(good.validate().is_ok());
        assert!(OptimizerConfig {
            warmup_fraction: 0.2,
            ..good
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            epsilon: 0.0,
            ..good
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn z_loss_is_nonnegative(logits in proptest::collection::vec(-50.0f64..50.0, 1..32)) {
            prop_assert!(z_loss(&logits).unwrap() >= 0.0);
        }

        #[test]
        fn clip_bounds_norm_and_keeps_direction(
            v in proptest::collection::vec(-100.0f64..100.0, 1..32),
            max_norm in 0.01f64..10.0,
        ) {
            let clipped = clip_grad_norm(&v, max_norm);
            let out_norm = clipped.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(out_norm <= max_norm + 1e-12);
            let in_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if in_norm > 1e-9 && out_norm > 1e-9 {
                let dot: f64 = v.iter().zip(&clipped).map(|(a, b)| a * b).sum();
                let cos = dot / (in_norm * out_norm);
                prop_assert!((cos - 1.0).abs() < 1e-9);
            }
        }
    }
}
