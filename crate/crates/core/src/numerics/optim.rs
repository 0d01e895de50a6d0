use super::DenseMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// AdamW moments for one list of parameter matrices.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &[DenseMatrix]) -> Self {
        let zeros = || params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        Self { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at the configured learning rate.
    pub fn update(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
        let lr = self.config.lr;
        self.update_with_lr(params, grads, lr)
    }

    /// One update with an explicit learning rate (used with a schedule).
    ///
    /// Weight decay is decoupled: it shrinks the parameter directly by
    /// `lr * weight_decay` and never enters the moment estimates.
    pub fn update_with_lr(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "AdamW tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != p.shape() {
                return Err(Error::contract(format!(
                    "AdamW tensor {i}: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.first[i].shape()
                )));
            }
        }
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for k in 0..p.len() {
                let gk = g.data()[k];
                p[k] -= lr * weight_decay * p[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One-cycle learning-rate schedule: a linear ramp from `peak / 25` to
/// `peak` over the warm-up fraction, then a cosine decay to `peak / 1000`
/// at the last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    peak: f64,
    warmup_fraction: f64,
    total_steps: usize,
    warmup_end: usize,
}

pub const ONE_CYCLE_START_DIV: f64 = 25.0;
pub const ONE_CYCLE_FINAL_DIV: f64 = 1000.0;

impl OneCycle {
    pub fn new(peak: f64, warmup_fraction: f64, total_steps: usize) -> Result<Self> {
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::contract(format!("one-cycle peak must be positive, got {peak}")));
        }
        if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
            return Err(Error::contract(format!(
                "warm-up fraction must lie in (0,1), got {warmup_fraction}"
            )));
        }
        if total_steps < 3 {
            return Err(Error::contract(format!("one-cycle needs at least 3 steps, got {total_steps}")));
        }
        let warmup_end = ((warmup_fraction * (total_steps - 1) as f64).round() as usize).clamp(1, total_steps - 2);
        Ok(Self { peak, warmup_fraction, total_steps, warmup_end })
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn warmup_end(&self) -> usize {
        self.warmup_end
    }

    pub fn rate(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::contract(format!(
                "step {step} outside schedule of {} steps",
                self.total_steps
            )));
        }
        let start = self.peak / ONE_CYCLE_START_DIV;
        let end = self.peak / ONE_CYCLE_FINAL_DIV;
        if step == self.warmup_end {
            Ok(self.peak)
        } else if step < self.warmup_end {
            let frac = step as f64 / self.warmup_end as f64;
            Ok(start + (self.peak - start) * frac)
        } else {
            let frac = (step - self.warmup_end) as f64 / (self.total_steps - 1 - self.warmup_end) as f64;
            Ok(end + (self.peak - end) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<DenseMatrix> {
        vec![DenseMatrix::filled(1, 1, v)]
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = one(0.7);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.update(&mut p, &one(0.0)).unwrap();
        assert_eq!(p[0].data()[0], 0.7);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamWConfig { lr: 0.1, ..AdamWConfig::default() };
        let mut p = one(0.0);
        let mut opt = AdamW::new(cfg, &p);
        opt.update(&mut p, &one(1.0)).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_magnitude() {
        let run = |wd: f64| {
            let cfg = AdamWConfig { lr: 0.01, weight_decay: wd, ..AdamWConfig::default() };
            let mut p = one(2.0);
            let mut opt = AdamW::new(cfg, &p);
            opt.update(&mut p, &one(-0.5)).unwrap();
            p[0].data()[0].abs()
        };
        assert!(run(1e-4) < run(0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = one(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        let bad = vec![DenseMatrix::zeros(2, 1)];
        assert!(matches!(opt.update(&mut p, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn updates_are_bitwise_deterministic() {
        let run = || {
            let mut p = vec![DenseMatrix::from_fn(3, 3, |r, c| (r as f64 - c as f64) * 0.3)];
            let mut opt = AdamW::new(AdamWConfig { weight_decay: 1e-4, ..AdamWConfig::default() }, &p);
            for s in 0..5 {
                let g = vec![DenseMatrix::from_fn(3, 3, |r, c| ((r * 3 + c + s) as f64).sin())];
                opt.update(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn one_cycle_boundaries() {
        let s = OneCycle::new(8e-4, 0.1, 101).unwrap();
        assert_eq!(s.rate(0).unwrap(), 8e-4 / 25.0);
        assert_eq!(s.rate(s.warmup_end()).unwrap(), 8e-4);
        assert!((s.rate(100).unwrap() - 8e-4 / 1000.0).abs() < 1e-12);
        assert!(s.rate(101).is_err());
        let w = s.warmup_end();
        let left = s.rate(w).unwrap();
        let right_limit = s.rate(w + 1).unwrap();
        assert!(left >= right_limit);
        let max = (0..101).map(|k| s.rate(k).unwrap()).fold(0.0, f64::max);
        assert_eq!(max, 8e-4);
        assert!((0..101).all(|k| s.rate(k).unwrap() > 0.0));
    }

    #[test]
    fn one_cycle_is_continuous_at_the_boundary() {
        // The decay branch evaluated at the boundary coincides with the peak.
        let s = OneCycle::new(2e-4, 0.3, 1000).unwrap();
        let w = s.warmup_end();
        let end = 2e-4 / ONE_CYCLE_FINAL_DIV;
        let decay_at_w = end + (2e-4 - end) * 0.5 * (1.0 + 0.0f64.cos());
        assert!((decay_at_w - s.rate(w).unwrap()).abs() < 1e-12);
    }
}
