//! Single LSTM layer: weights, cell forward, and the per-step backward used
//! by truncated-nothing full BPTT.
//!
//! Gate order in the stacked 4H dimension is fixed: input, forget, cell
//! candidate, output.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerWeights {
    /// [4H × D_in] input-to-gates.
    pub w_ih: Mat,
    /// [4H × H] recurrent-to-gates.
    pub w_hh: Mat,
    /// [4H] gate biases.
    pub bias: Vec<f64>,
}

impl LstmLayerWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmLayerWeights {
            w_ih: Mat::zeros(4 * hidden, input),
            w_hh: Mat::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.cols
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.cols
    }
}

/// Hidden/cell pair of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> Self {
        LayerState { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Activations captured by one cell step, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM cell step.
///
/// i,f,o = logistic(affine), g = tanh(affine); c' = f⊙c + i⊙g;
/// h' = o⊙tanh(c').
pub fn lstm_cell_forward(x: &[f64], state: &LayerState, w: &LstmLayerWeights) -> LayerState {
    let (next, _) = lstm_cell_forward_cached(x, state, w);
    next
}

/// Cell step that also returns the cache needed by [`lstm_cell_backward`].
pub fn lstm_cell_forward_cached(
    x: &[f64],
    state: &LayerState,
    w: &LstmLayerWeights,
) -> (LayerState, CellCache) {
    let hidden = w.hidden_size();
    debug_assert_eq!(x.len(), w.input_size());
    debug_assert_eq!(state.h.len(), hidden);

    let mut pre = w.bias.clone();
    w.w_ih.matvec_acc(x, &mut pre);
    w.w_hh.matvec_acc(&state.h, &mut pre);

    let mut gate_i = Vec::with_capacity(hidden);
    let mut gate_f = Vec::with_capacity(hidden);
    let mut gate_g = Vec::with_capacity(hidden);
    let mut gate_o = Vec::with_capacity(hidden);
    for k in 0..hidden {
        gate_i.push(sigmoid(pre[k]));
        gate_f.push(sigmoid(pre[hidden + k]));
        gate_g.push(pre[2 * hidden + k].tanh());
        gate_o.push(sigmoid(pre[3 * hidden + k]));
    }
    let mut c = Vec::with_capacity(hidden);
    let mut tanh_c = Vec::with_capacity(hidden);
    let mut h = Vec::with_capacity(hidden);
    for k in 0..hidden {
        let ck = gate_f[k] * state.c[k] + gate_i[k] * gate_g[k];
        c.push(ck);
        let tc = ck.tanh();
        tanh_c.push(tc);
        h.push(gate_o[k] * tc);
    }
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        tanh_c,
    };
    (LayerState { h, c }, cache)
}

/// Backward through one cell step.
///
/// `dh`/`dc` carry the loss gradient w.r.t. this step's outputs (dc already
/// accumulated from the next step). Parameter gradients land in `grad`;
/// returns (dx, dh_prev, dc_prev).
pub fn lstm_cell_backward(
    w: &LstmLayerWeights,
    cache: &CellCache,
    dh: &[f64],
    dc_in: &[f64],
    grad: &mut LstmLayerWeights,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = w.hidden_size();
    let mut dpre = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let tc = cache.tanh_c[k];
        let o = cache.gate_o[k];
        let d_o = dh[k] * tc;
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        let i = cache.gate_i[k];
        let f = cache.gate_f[k];
        let g = cache.gate_g[k];
        dpre[k] = dc * g * i * (1.0 - i);
        dpre[hidden + k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dpre[2 * hidden + k] = dc * i * (1.0 - g * g);
        dpre[3 * hidden + k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    grad.w_ih.add_outer(&dpre, &cache.x);
    grad.w_hh.add_outer(&dpre, &cache.h_prev);
    for (gb, dp) in grad.bias.iter_mut().zip(&dpre) {
        *gb += dp;
    }
    let mut dx = vec![0.0; w.input_size()];
    w.w_ih.tr_matvec_acc(&dpre, &mut dx);
    let mut dh_prev = vec![0.0; hidden];
    w.w_hh.tr_matvec_acc(&dpre, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn all_zero_everything_stays_zero() {
        let w = LstmLayerWeights::zeros(3, 2);
        let next = lstm_cell_forward(&[0.0, 0.0], &LayerState::zeros(3), &w);
        assert!(next.h.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_halve_the_cell_state() {
        let w = LstmLayerWeights::zeros(3, 2);
        let state = LayerState { h: vec![0.0; 3], c: vec![1.0, 2.0, -1.0] };
        let next = lstm_cell_forward(&[0.7, -0.3], &state, &w);
        for k in 0..3 {
            assert!((next.c[k] - 0.5 * state.c[k]).abs() < 1e-15);
            assert!((next.h[k] - 0.5 * (0.5 * state.c[k]).tanh()).abs() < 1e-15);
        }
    }

    /// Straightforward scalar re-implementation used as a duplicate oracle.
    fn naive_cell(x: &[f64], h: &[f64], c: &[f64], w: &LstmLayerWeights) -> (Vec<f64>, Vec<f64>) {
        let hs = w.hidden_size();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let affine = |row: usize| -> f64 {
            let mut acc = w.bias[row];
            for (j, xv) in x.iter().enumerate() {
                acc += w.w_ih.data[row * w.w_ih.cols + j] * xv;
            }
            for (j, hv) in h.iter().enumerate() {
                acc += w.w_hh.data[row * w.w_hh.cols + j] * hv;
            }
            acc
        };
        let mut h_out = vec![0.0; hs];
        let mut c_out = vec![0.0; hs];
        for k in 0..hs {
            let i = sig(affine(k));
            let f = sig(affine(hs + k));
            let g = affine(2 * hs + k).tanh();
            let o = sig(affine(3 * hs + k));
            c_out[k] = f * c[k] + i * g;
            h_out[k] = o * c_out[k].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        let mut rng = crate::rng::substream(5, "lstm-cell-test");
        let hidden = 3;
        let input = 2;
        let w = LstmLayerWeights {
            w_ih: Mat::from_fn(4 * hidden, input, |_, _| rng.gen_range(-0.5..0.5)),
            w_hh: Mat::from_fn(4 * hidden, hidden, |_, _| rng.gen_range(-0.5..0.5)),
            bias: (0..4 * hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        };
        let state = LayerState {
            h: (0..hidden).map(|_| rng.gen_range(-0.9..0.9)).collect(),
            c: (0..hidden).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        };
        let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = lstm_cell_forward(&x, &state, &w);
        let (h_naive, c_naive) = naive_cell(&x, &state.h, &state.c, &w);
        for k in 0..hidden {
            assert!((got.h[k] - h_naive[k]).abs() < 1e-12);
            assert!((got.c[k] - c_naive[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_output_is_tanh_bounded() {
        let mut rng = crate::rng::substream(6, "lstm-bound-test");
        let w = LstmLayerWeights {
            w_ih: Mat::from_fn(8, 2, |_, _| rng.gen_range(-5.0..5.0)),
            w_hh: Mat::from_fn(8, 2, |_, _| rng.gen_range(-5.0..5.0)),
            bias: (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        };
        let mut state = LayerState::zeros(2);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-100.0..100.0)).collect();
            state = lstm_cell_forward(&x, &state, &w);
            for &h in &state.h {
                assert!(h.abs() < 1.0);
            }
        }
    }
}
