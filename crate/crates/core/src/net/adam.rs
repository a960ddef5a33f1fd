//! Adam with bias correction and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

/// Gradients are clipped to this global L2 norm before the moment updates.
pub const GRAD_CLIP_NORM: f64 = 10.0;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second-moment accumulators over the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }
}

/// One Adam update on a flat parameter vector.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    let clip = if norm > GRAD_CLIP_NORM { GRAD_CLIP_NORM / norm } else { 1.0 };
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i] * clip;
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights_and_bumps_step() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 1e-3);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        // bias-corrected first step: m̂ = g, v̂ = g² → Δ = −lr·sign(g)
        let g = [0.3, -4.0, 1e-3];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, 1e-3);
        for (pi, gi) in p.iter().zip(&g) {
            assert!((pi + 1e-3 * gi.signum()).abs() < 1e-6, "p={pi} g={gi}");
        }
    }

    #[test]
    fn deterministic_replay() {
        let gs = [vec![0.1, -0.2], vec![0.05, 0.4], vec![-0.3, -0.3]];
        let run = || {
            let mut p = vec![0.7, -0.7];
            let mut s = AdamState::new(2);
            for g in &gs {
                adam_step(&mut p, g, &mut s, 1e-3);
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn clipping_rescales_large_gradients() {
        // norm 20 → clip factor 0.5; first step still −lr·sign
        let g = [20.0, 0.0];
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &g, &mut s, 1e-3);
        assert!((p[0] + 1e-3).abs() < 1e-6);
        assert_eq!(p[1], 0.0);
        // the moments see the clipped gradient
        assert!((s.m[0] - 0.1 * 10.0).abs() < 1e-12);
    }
}
