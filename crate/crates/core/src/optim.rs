//! Adam without weight decay and the multiplicative step learning-rate decay.

use crate::error::{Error, Result};
use crate::tensor::Parameter;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update on every trainable parameter.
    /// Buffers are skipped. Gradients are left in place for the caller to zero.
    pub fn step<'p>(&self, params: impl IntoIterator<Item = &'p mut Parameter>, lr: f64) -> Result<()> {
        let mut params: Vec<&mut Parameter> = params.into_iter().filter(|p| p.trainable()).collect();
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::MissingGrad(p.name().to_string()));
        }
        for p in params.iter_mut() {
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let Parameter {
                value,
                grad,
                moment1,
                moment2,
                ..
            } = &mut **p;
            let grad = grad.as_ref().expect("checked above");
            for i in 0..value.len() {
                let g = grad[i];
                moment1[i] = self.beta1 * moment1[i] + (1.0 - self.beta1) * g;
                moment2[i] = self.beta2 * moment2[i] + (1.0 - self.beta2) * g * g;
                let m_hat = moment1[i] / c1;
                let v_hat = moment2[i] / c2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `lr(epoch) = initial_lr · gamma^floor(epoch / step_interval)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub gamma: f64,
    pub step_interval: usize,
}

impl LrSchedule {
    pub const GAMMA: f64 = 0.95;

    pub fn new(initial_lr: f64, step_interval: usize) -> Self {
        assert!(step_interval > 0, "step interval must be positive");
        LrSchedule {
            initial_lr,
            gamma: Self::GAMMA,
            step_interval,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial_lr * self.gamma.powi((epoch / self.step_interval) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(name: &str, v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new(name, &[], vec![v]);
        p.grad = Some(vec![g]);
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps)
        let mut p = scalar("x", 1.0, 1.0);
        Adam::default().step([&mut p], 0.1).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.value[0] - expected).abs() < 1e-15);
        assert_eq!(p.step(), 1);
    }

    #[test]
    fn zero_gradient_is_noop_from_fresh_state() {
        let mut p = scalar("x", 0.3, 0.0);
        for _ in 0..5 {
            Adam::default().step([&mut p], 0.1).unwrap();
        }
        assert_eq!(p.value, vec![0.3]);
        assert_eq!(p.moments(), (&[0.0][..], &[0.0][..]));
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut a = scalar("a", 0.5, 0.2);
        let mut b = scalar("b", 0.5, 0.2);
        for i in 0..20 {
            let g = (i as f64 * 0.7).sin();
            a.grad = Some(vec![g]);
            b.grad = Some(vec![g]);
            Adam::default().step([&mut a, &mut b], 0.01).unwrap();
        }
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn missing_grad_names_the_parameter() {
        let mut p = Parameter::new("mlp.0.weight", &[2], vec![0.0, 0.0]);
        let err = Adam::default().step([&mut p], 0.1).unwrap_err();
        assert!(err.to_string().contains("mlp.0.weight"));
    }

    #[test]
    fn buffers_are_skipped() {
        let mut b = Parameter::buffer("bn.running_mean", &[1], vec![2.0]);
        Adam::default().step([&mut b], 0.1).unwrap();
        assert_eq!(b.value, vec![2.0]);
    }

    #[test]
    fn schedule_matches_formula() {
        let s = LrSchedule::new(0.01, 10);
        assert_eq!(s.lr_at(0), 0.01);
        assert_eq!(s.lr_at(9), 0.01);
        assert!((s.lr_at(25) - 0.009025).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for e in 0..200 {
            let lr = s.lr_at(e);
            assert!(lr <= prev);
            assert_eq!(lr, 0.01 * 0.95f64.powi((e / 10) as i32));
            prev = lr;
        }
    }
}
