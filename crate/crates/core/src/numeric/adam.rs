use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self::with_config(num_params, AdamConfig::default())
    }

    pub fn with_config(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update applied in place.
    ///
    /// A non-finite gradient leaves both `params` and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam_step", self.m.len(), grads.len()));
        }
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam_step gradient"));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(beta1, t as f64);
        let bc2 = 1.0 - libm::pow(beta2, t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut s = AdamState::new(3);
        s.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let g = 0.37;
        let lr = 0.005;
        let mut p = vec![0.0; 4];
        let mut s = AdamState::new(4);
        s.step(&mut p, &[g; 4], lr).unwrap();
        // m_hat = g, v_hat = g^2 after bias correction
        let (m1, v1) = ((1.0 - 0.9) * g, (1.0 - 0.999) * g * g);
        let expect = lr * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + 1e-8);
        for v in p {
            assert!((v + expect).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let lr = 0.01;
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..100 {
            let before = p[0];
            s.step(&mut p, &[2.5], lr).unwrap();
            last = before - p[0];
        }
        // closed form with constant g: m_hat = g, v_hat = g^2 for every t
        let expect = lr * 2.5 / (2.5 + 1e-8);
        assert!((last - expect).abs() < 1e-12);
        assert!((last - lr).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        assert!(s.step(&mut p, &[f64::NAN], 0.1).is_err());
        assert_eq!(p, vec![1.0]);
        assert_eq!(s.steps(), 0);
    }
}
