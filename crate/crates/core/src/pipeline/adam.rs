use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamConfig) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            if lr == 0.0 {
                continue;
            }
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut a = Adam::new(2);
        let mut p = vec![1.0, -2.0];
        a.step(&mut p, &[0.5, 0.5], 0.1, &cfg);
        let (m, v) = (a.m.clone(), a.v.clone());
        let before = p.clone();
        a.step(&mut p, &[0.0, 0.0], 0.0, &cfg);
        assert_eq!(p, before);
        assert_eq!(a.m[0], 0.9 * m[0]);
        assert_eq!(a.v[0], 0.999 * v[0]);
    }

    #[test]
    fn first_step_hand_value() {
        let cfg = AdamConfig::default();
        for g in [0.3, -2.0, 1e-3] {
            let mut a = Adam::new(1);
            let mut p = vec![0.0];
            a.step(&mut p, &[g], 0.01, &cfg);
            let expect = -0.01 * g / (g.abs() + cfg.eps);
            assert!((p[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_approaches_lr_sign() {
        let cfg = AdamConfig::default();
        let mut a = Adam::new(1);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            a.step(&mut p, &[-0.7], 1e-3, &cfg);
            last = p[0] - before;
        }
        assert!((last - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_keeps_parameters_bitwise() {
        let cfg = AdamConfig::default();
        let mut a = Adam::new(3);
        let mut p = vec![0.1, -0.2, 0.3];
        let before = p.clone();
        for _ in 0..10 {
            a.step(&mut p, &[1.0, -3.0, 0.01], 0.0, &cfg);
        }
        assert!(p.iter().zip(&before).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #[test]
        fn finite_inputs_stay_finite(
            g in prop::collection::vec(-1e6f64..1e6, 1..20), lr in 0.0f64..1.0, steps in 1usize..20,
        ) {
            let cfg = AdamConfig::default();
            let mut a = Adam::new(g.len());
            let mut p = vec![0.5; g.len()];
            for _ in 0..steps {
                a.step(&mut p, &g, lr, &cfg);
            }
            prop_assert!(p.iter().all(|v| v.is_finite()));
        }
    }
}
