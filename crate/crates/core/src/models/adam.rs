use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Adam with L2-style weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, betas: (f64, f64), weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        for k in 0..params.len() {
            let g = grad[k] + self.weight_decay * params[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[k] / bc1;
            let vhat = self.v[k] / bc2;
            params[k] -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.01, (0.9, 0.98), 0.0);
        for _ in 0..3000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 2e-2 && (p[1] + 0.5).abs() < 2e-2);
    }
}
