//! Backpropagation through time over full 72h windows.
//!
//! Teacher forcing means decoder inputs are observed data, so gradients flow
//! only through the recurrent state and the heads. Batch gradients are
//! averaged over windows; evaluation is parallel over fixed-size chunks with
//! an ordered reduction, making results independent of the thread count.

use rayon::prelude::*;

use super::lstm::{lstm_cell_backward, lstm_cell_forward_cached, CellCache};
use super::{HiddenState, InputLayout, LossRange, NetError, NetworkWeights};
use crate::data::{SampleWindow, WINDOW_LEN};
use crate::distributions::{
    apply_heads_backward, apply_heads_cached, mixture_nll_grad, HeadCache, ParamGrad,
};
use crate::linalg::axpy;

/// Windows per parallel work unit; fixed so the floating-point reduction
/// order never depends on the thread count.
const CHUNK: usize = 8;

/// Gradient of the mean batch NLL with respect to every weight, bias, head
/// parameter and embedding entry.
pub fn compute_gradients(
    batch: &[&SampleWindow],
    weights: &NetworkWeights,
    layout: &InputLayout,
    range: LossRange,
) -> Result<(f64, NetworkWeights), NetError> {
    if batch.is_empty() {
        return Err(NetError::Shape("gradient batch must be nonempty".into()));
    }
    let chunk_results: Vec<Result<(f64, NetworkWeights), NetError>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = weights.zeros_like();
            let mut nll_sum = 0.0;
            for w in chunk {
                nll_sum += window_gradient(w, weights, layout, range, &mut grad)?;
            }
            Ok((nll_sum, grad))
        })
        .collect();

    let mut total = weights.zeros_like();
    let mut nll_sum = 0.0;
    for r in chunk_results {
        let (nll, g) = r?;
        nll_sum += nll;
        total.add_scaled(&g, 1.0);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((nll_sum * inv, total))
}

struct StepTape {
    cells: Vec<CellCache>,
    /// (top hidden state, head pre-activations, NLL parameter gradient).
    head: Option<(Vec<f64>, HeadCache, ParamGrad)>,
}

/// Forward + backward for one window; accumulates into `grad`, returns the
/// window NLL (sum over loss steps).
fn window_gradient(
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
    range: LossRange,
    grad: &mut NetworkWeights,
) -> Result<f64, NetError> {
    super::check_window_shapes(window, weights, layout)?;
    for t in 0..WINDOW_LEN {
        if !window.observed[t] {
            return Err(NetError::MissingTarget { window_id: window.window_id(), step: t });
        }
    }
    let n_layers = weights.layers.len();
    let emb = weights.embedding.as_ref().map(|e| e.row(window.system_index).to_vec());
    let first_loss = range.first_step();

    // ---- forward, taping every cell step and head application ----
    let mut state = HiddenState::zeros(weights);
    let mut tape: Vec<StepTape> = Vec::with_capacity(WINDOW_LEN);
    let mut x = Vec::with_capacity(layout.input_width());
    let mut nll = 0.0;
    for t in 0..WINDOW_LEN {
        let z_prev = if t == 0 { 0.0 } else { window.targets[t - 1] / window.scale };
        layout.fill_input(&mut x, z_prev, window.covariates.row(t), &window.static_features,
            emb.as_deref());
        let mut cells = Vec::with_capacity(n_layers);
        let mut input = x.clone();
        for (l, w) in weights.layers.iter().enumerate() {
            let (next, cache) = lstm_cell_forward_cached(&input, &state.layers[l], w);
            input = next.h.clone();
            state.layers[l] = next;
            cells.push(cache);
        }
        let head = if t >= first_loss {
            let top = &state.layers[n_layers - 1].h;
            let (params, cache) = apply_heads_cached(top, &weights.head)?;
            let z = window.targets[t] / window.scale;
            let (step_nll, pgrad) = mixture_nll_grad(z, &params)?;
            nll += step_nll;
            Some((top.clone(), cache, pgrad))
        } else {
            None
        };
        tape.push(StepTape { cells, head });
    }
    if !nll.is_finite() {
        return Err(NetError::NonFinite { window_id: window.window_id() });
    }

    // ---- backward ----
    let hidden: Vec<usize> = weights.layers.iter().map(|l| l.hidden_size()).collect();
    let mut dh: Vec<Vec<f64>> = hidden.iter().map(|&h| vec![0.0; h]).collect();
    let mut dc: Vec<Vec<f64>> = hidden.iter().map(|&h| vec![0.0; h]).collect();
    for t in (0..WINDOW_LEN).rev() {
        let step = &tape[t];
        if let Some((top_h, head_cache, pgrad)) = &step.head {
            apply_heads_backward(
                &weights.head,
                head_cache,
                top_h,
                pgrad,
                &mut grad.head,
                &mut dh[n_layers - 1],
            );
        }
        for l in (0..n_layers).rev() {
            let (dx, dh_prev, dc_prev) =
                lstm_cell_backward(&weights.layers[l], &step.cells[l], &dh[l], &dc[l],
                    &mut grad.layers[l]);
            dh[l] = dh_prev;
            dc[l] = dc_prev;
            if l > 0 {
                axpy(1.0, &dx, &mut dh[l - 1]);
            } else if layout.use_embedding {
                // data inputs carry no gradient; the embedding slice does
                let off = layout.embedding_offset();
                let row = grad
                    .embedding
                    .as_mut()
                    .expect("embedding gradient accumulator")
                    .row_mut(window.system_index);
                axpy(1.0, &dx[off..], row);
            }
        }
    }
    Ok(nll)
}
