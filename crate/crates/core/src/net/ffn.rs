//! Flattened feed-forward baseline.
//!
//! The whole window becomes one input vector (scaled context targets plus
//! the time covariates of all 72 steps — no physical or system features),
//! passed through two tanh layers, with one projection head per forecast
//! step predicting all 24 distributions at once.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::data::{SampleWindow, CONTEXT_LEN, COVARIATE_COLS, TIME_COL, WINDOW_LEN};
use crate::distributions::{
    apply_heads_backward, apply_heads_cached, mixture_nll_grad, mixture_sample,
    DistributionParams, Family, ProjectionHead,
};
use crate::linalg::Mat;
use crate::rng::open_unit;

/// Hidden width of the production baseline.
pub const FFN_WIDTH: usize = 128;

/// Number of time-covariate columns fed per step.
const TIME_COLS: usize = COVARIATE_COLS - TIME_COL;

/// Flat input width: 48 context targets + 72 steps × time covariates.
pub const FFN_INPUT: usize = CONTEXT_LEN + WINDOW_LEN * TIME_COLS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnWeights {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    /// One head per forecast step.
    pub heads: Vec<ProjectionHead>,
}

impl FfnWeights {
    pub fn width(&self) -> usize {
        self.w1.rows
    }

    pub fn visit(&self, mut f: impl FnMut(f64)) {
        self.w1.data.iter().for_each(|&v| f(v));
        self.b1.iter().for_each(|&v| f(v));
        self.w2.data.iter().for_each(|&v| f(v));
        self.b2.iter().for_each(|&v| f(v));
        for h in &self.heads {
            h.w_mu.data.iter().for_each(|&v| f(v));
            h.b_mu.iter().for_each(|&v| f(v));
            h.w_sigma.data.iter().for_each(|&v| f(v));
            h.b_sigma.iter().for_each(|&v| f(v));
            if let Some(w) = &h.w_nu {
                w.data.iter().for_each(|&v| f(v));
            }
            if let Some(b) = &h.b_nu {
                b.iter().for_each(|&v| f(v));
            }
            if let Some(w) = &h.w_weights {
                w.data.iter().for_each(|&v| f(v));
            }
            if let Some(b) = &h.b_weights {
                b.iter().for_each(|&v| f(v));
            }
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.w1.data.iter_mut().for_each(&mut f);
        self.b1.iter_mut().for_each(&mut f);
        self.w2.data.iter_mut().for_each(&mut f);
        self.b2.iter_mut().for_each(&mut f);
        for h in &mut self.heads {
            h.w_mu.data.iter_mut().for_each(&mut f);
            h.b_mu.iter_mut().for_each(&mut f);
            h.w_sigma.data.iter_mut().for_each(&mut f);
            h.b_sigma.iter_mut().for_each(&mut f);
            if let Some(w) = &mut h.w_nu {
                w.data.iter_mut().for_each(&mut f);
            }
            if let Some(b) = &mut h.b_nu {
                b.iter_mut().for_each(&mut f);
            }
            if let Some(w) = &mut h.w_weights {
                w.data.iter_mut().for_each(&mut f);
            }
            if let Some(b) = &mut h.b_weights {
                b.iter_mut().for_each(&mut f);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_| n += 1);
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|v| out.push(v));
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        self.visit_mut(|v| *v = *it.next().expect("flat vector too short"));
        assert!(it.next().is_none(), "flat vector too long");
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|v| *v = 0.0);
        z
    }

    pub fn add_scaled(&mut self, other: &FfnWeights, alpha: f64) {
        let flat = other.flatten();
        let mut i = 0;
        self.visit_mut(|v| {
            *v += alpha * flat[i];
            i += 1;
        });
    }

    pub fn scale(&mut self, alpha: f64) {
        self.visit_mut(|v| *v *= alpha);
    }
}

/// Fresh FFN weights (same uniform fan-in/fan-out rule as the LSTM).
pub fn init_ffn(
    width: usize,
    family: Family,
    mixture_k: usize,
    rng: &mut impl Rng,
) -> FfnWeights {
    let mut heads = Vec::with_capacity(WINDOW_LEN - CONTEXT_LEN);
    for _ in CONTEXT_LEN..WINDOW_LEN {
        let mut h = ProjectionHead::zeros(family, mixture_k, width);
        h.w_mu = super::glorot(mixture_k, width, width, 1, rng);
        h.w_sigma = super::glorot(mixture_k, width, width, 1, rng);
        if h.w_nu.is_some() {
            h.w_nu = Some(super::glorot(mixture_k, width, width, 1, rng));
        }
        if h.w_weights.is_some() {
            h.w_weights = Some(super::glorot(mixture_k, width, width, 1, rng));
        }
        heads.push(h);
    }
    FfnWeights {
        w1: super::glorot(width, FFN_INPUT, FFN_INPUT, width, rng),
        b1: vec![0.0; width],
        w2: super::glorot(width, width, width, width, rng),
        b2: vec![0.0; width],
        heads,
    }
}

/// Builds the flattened input vector for one window.
pub fn ffn_input(window: &SampleWindow) -> Vec<f64> {
    let mut x = Vec::with_capacity(FFN_INPUT);
    for t in 0..CONTEXT_LEN {
        x.push(window.targets[t] / window.scale);
    }
    for t in 0..WINDOW_LEN {
        x.extend_from_slice(&window.covariates.row(t)[TIME_COL..]);
    }
    x
}

struct FfnTape {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

fn forward(window: &SampleWindow, w: &FfnWeights) -> (Vec<DistributionParams>, FfnTape,
    Vec<crate::distributions::HeadCache>) {
    let x = ffn_input(window);
    let mut h1 = w.b1.clone();
    w.w1.matvec_acc(&x, &mut h1);
    for v in &mut h1 {
        *v = v.tanh();
    }
    let mut h2 = w.b2.clone();
    w.w2.matvec_acc(&h1, &mut h2);
    for v in &mut h2 {
        *v = v.tanh();
    }
    let mut params = Vec::with_capacity(w.heads.len());
    let mut caches = Vec::with_capacity(w.heads.len());
    for head in &w.heads {
        let (p, c) = apply_heads_cached(&h2, head).expect("head width matches hidden width");
        params.push(p);
        caches.push(c);
    }
    (params, FfnTape { x, h1, h2 }, caches)
}

/// Head parameters for all 24 forecast steps at once.
pub fn ffn_forward(
    window: &SampleWindow,
    w: &FfnWeights,
) -> Result<Vec<DistributionParams>, NetError> {
    check_shapes(window, w)?;
    Ok(forward(window, w).0)
}

/// Teacher-forced NLL over the forecast interval.
pub fn ffn_nll(window: &SampleWindow, w: &FfnWeights) -> Result<f64, NetError> {
    check_shapes(window, w)?;
    for t in 0..WINDOW_LEN {
        if !window.observed[t] {
            return Err(NetError::MissingTarget { window_id: window.window_id(), step: t });
        }
    }
    let (params, _, _) = forward(window, w);
    let mut nll = 0.0;
    for (k, p) in params.iter().enumerate() {
        let z = window.targets[CONTEXT_LEN + k] / window.scale;
        nll -= crate::distributions::mixture_log_pdf(z, p)?;
    }
    if !nll.is_finite() {
        return Err(NetError::NonFinite { window_id: window.window_id() });
    }
    Ok(nll)
}

/// Independent per-step samples (the FFN is not autoregressive), in Watts.
pub fn ffn_sample_forecast(
    window: &SampleWindow,
    w: &FfnWeights,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, NetError> {
    let params = ffn_forward(window, w)?;
    let mut path = Vec::with_capacity(params.len());
    for p in &params {
        let u_select = open_unit(rng);
        let u_value = open_unit(rng);
        path.push(mixture_sample(p, u_select, u_value)? * window.scale);
    }
    Ok(path)
}

/// Mean-NLL gradient over a batch; same chunked ordered reduction as the
/// recurrent path.
pub fn ffn_gradients(
    batch: &[&SampleWindow],
    w: &FfnWeights,
) -> Result<(f64, FfnWeights), NetError> {
    if batch.is_empty() {
        return Err(NetError::Shape("gradient batch must be nonempty".into()));
    }
    let chunk_results: Vec<Result<(f64, FfnWeights), NetError>> = batch
        .par_chunks(8)
        .map(|chunk| {
            let mut grad = w.zeros_like();
            let mut nll_sum = 0.0;
            for win in chunk {
                nll_sum += window_gradient(win, w, &mut grad)?;
            }
            Ok((nll_sum, grad))
        })
        .collect();
    let mut total = w.zeros_like();
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

fn window_gradient(
    window: &SampleWindow,
    w: &FfnWeights,
    grad: &mut FfnWeights,
) -> Result<f64, NetError> {
    check_shapes(window, w)?;
    for t in 0..WINDOW_LEN {
        if !window.observed[t] {
            return Err(NetError::MissingTarget { window_id: window.window_id(), step: t });
        }
    }
    let (params, tape, caches) = forward(window, w);
    let width = w.width();
    let mut nll = 0.0;
    let mut dh2 = vec![0.0; width];
    for (k, (p, cache)) in params.iter().zip(&caches).enumerate() {
        let z = window.targets[CONTEXT_LEN + k] / window.scale;
        let (step_nll, pgrad) = mixture_nll_grad(z, p)?;
        nll += step_nll;
        apply_heads_backward(&w.heads[k], cache, &tape.h2, &pgrad, &mut grad.heads[k], &mut dh2);
    }
    if !nll.is_finite() {
        return Err(NetError::NonFinite { window_id: window.window_id() });
    }
    // tanh layer 2
    let mut dpre2 = vec![0.0; width];
    for i in 0..width {
        dpre2[i] = dh2[i] * (1.0 - tape.h2[i] * tape.h2[i]);
    }
    grad.w2.add_outer(&dpre2, &tape.h1);
    for (g, d) in grad.b2.iter_mut().zip(&dpre2) {
        *g += d;
    }
    let mut dh1 = vec![0.0; width];
    w.w2.tr_matvec_acc(&dpre2, &mut dh1);
    // tanh layer 1
    let mut dpre1 = vec![0.0; width];
    for i in 0..width {
        dpre1[i] = dh1[i] * (1.0 - tape.h1[i] * tape.h1[i]);
    }
    grad.w1.add_outer(&dpre1, &tape.x);
    for (g, d) in grad.b1.iter_mut().zip(&dpre1) {
        *g += d;
    }
    Ok(nll)
}

fn check_shapes(window: &SampleWindow, w: &FfnWeights) -> Result<(), NetError> {
    if w.w1.cols != FFN_INPUT {
        return Err(NetError::Shape(format!(
            "ffn input width {} does not match expected {FFN_INPUT}",
            w.w1.cols
        )));
    }
    if w.heads.len() != WINDOW_LEN - CONTEXT_LEN {
        return Err(NetError::Shape(format!(
            "ffn must carry {} heads, found {}",
            WINDOW_LEN - CONTEXT_LEN,
            w.heads.len()
        )));
    }
    if window.covariates.rows != WINDOW_LEN {
        return Err(NetError::Shape(format!(
            "window {} must span {WINDOW_LEN} steps",
            window.window_id()
        )));
    }
    Ok(())
}
