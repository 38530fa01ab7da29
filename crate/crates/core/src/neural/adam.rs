use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState { first_moment: vec![0.0; num_params], second_moment: vec![0.0; num_params], step: 0 }
    }
}

/// Scales `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) {
    let norm = math::sqrt(grads.iter().map(|g| g * g).sum());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Bias-corrected Adam update after clipping the gradient to global norm `clip`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, clip: f64, cfg: &AdamConfig) {
    let mut g = grads.to_vec();
    clip_global_norm(&mut g, clip);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (((p, gi), m), v) in params.iter_mut().zip(&g).zip(state.first_moment.iter_mut()).zip(state.second_moment.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (math::sqrt(v_hat) + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 1e-3, 5.0, &AdamConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_sign_like() {
        let g = [0.2, -3.0, 1e-3];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        let lr = 0.01;
        adam_step(&mut p, &g, &mut s, lr, 5.0, &AdamConfig::default());
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-12, "{} vs {}", pi, expected);
        }
    }

    #[test]
    fn deterministic() {
        let g = [0.5, -0.25];
        let run = || {
            let mut p = vec![1.0, 2.0];
            let mut s = AdamState::new(2);
            adam_step(&mut p, &g, &mut s, 0.1, 5.0, &AdamConfig::default());
            adam_step(&mut p, &g, &mut s, 0.1, 5.0, &AdamConfig::default());
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![30.0, 40.0];
        clip_global_norm(&mut g, 5.0);
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] - 4.0).abs() < 1e-12);
    }
}
