//! Recurrent core: the 2-layer LSTM encoder-decoder, its analytic gradients,
//! the Adam optimizer, and the flattened feed-forward baseline.
//!
//! The encoder unrolls over the 48 context steps feeding (z_{t−1}/scale,
//! covariates_t, static features, system embedding); the decoder covers the
//! 24 forecast steps either teacher-forced (training NLL) or ancestrally
//! (sample paths). One set of layer weights serves both phases.

pub mod adam;
pub mod ffn;
pub mod gradcheck;
pub mod lstm;

mod bptt;

pub use adam::{adam_step, AdamState, GRAD_CLIP_NORM};
pub use bptt::compute_gradients;
pub use lstm::{lstm_cell_forward, LayerState, LstmLayerWeights};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SampleWindow, CONTEXT_LEN, COVARIATE_COLS, TIME_COL, WINDOW_LEN};
use crate::distributions::{
    apply_heads_cached, mixture_sample, DistError, DistributionParams, Family, ProjectionHead,
};
use crate::linalg::Mat;
use crate::rng::open_unit;

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    Shape(String),
    MissingTarget { window_id: String, step: usize },
    NonFinite { window_id: String },
    Dist(DistError),
}

impl std::fmt::Display for NetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetError::Shape(m) => write!(f, "shape error: {m}"),
            NetError::MissingTarget { window_id, step } => {
                write!(f, "window {window_id}: unobserved target at step {step}")
            }
            NetError::NonFinite { window_id } => {
                write!(f, "non-finite loss while processing window {window_id}")
            }
            NetError::Dist(e) => write!(f, "distribution error: {e}"),
        }
    }
}

impl std::error::Error for NetError {}

impl From<DistError> for NetError {
    fn from(e: DistError) -> Self {
        NetError::Dist(e)
    }
}

/// Which parts of the covariate/static block feed the network input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    pub use_physical: bool,
    /// Standardized continuous descriptors appended to every step.
    pub use_static: bool,
    pub static_width: usize,
    /// System-ID embedding appended to every step.
    pub use_embedding: bool,
    pub embedding_dim: usize,
}

impl InputLayout {
    pub fn input_width(&self) -> usize {
        let cov = if self.use_physical { COVARIATE_COLS } else { COVARIATE_COLS - TIME_COL };
        1 + cov
            + if self.use_static { self.static_width } else { 0 }
            + if self.use_embedding { self.embedding_dim } else { 0 }
    }

    /// Offset of the embedding block inside a step input, when enabled.
    fn embedding_offset(&self) -> usize {
        self.input_width() - self.embedding_dim
    }

    fn fill_input(
        &self,
        buf: &mut Vec<f64>,
        z_prev_scaled: f64,
        cov_row: &[f64],
        static_features: &[f64],
        embedding_row: Option<&[f64]>,
    ) {
        buf.clear();
        buf.push(z_prev_scaled);
        if self.use_physical {
            buf.extend_from_slice(cov_row);
        } else {
            buf.extend_from_slice(&cov_row[TIME_COL..]);
        }
        if self.use_static {
            buf.extend_from_slice(static_features);
        }
        if self.use_embedding {
            buf.extend_from_slice(embedding_row.expect("embedding enabled but no table"));
        }
    }
}

/// All trainable parameters of the recurrent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub layers: Vec<LstmLayerWeights>,
    pub head: ProjectionHead,
    /// [N_systems × E]; present only when the system-ID covariate is on.
    pub embedding: Option<Mat>,
}

/// Full per-layer recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub layers: Vec<LayerState>,
}

impl HiddenState {
    pub fn zeros(weights: &NetworkWeights) -> Self {
        HiddenState {
            layers: weights.layers.iter().map(|l| LayerState::zeros(l.hidden_size())).collect(),
        }
    }
}

impl NetworkWeights {
    /// Zero-valued weights with the same shapes (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|v| *v = 0.0);
        z
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_| n += 1);
        n
    }

    /// Enumerates every parameter in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(f64)) {
        for l in &self.layers {
            l.w_ih.data.iter().for_each(|&v| f(v));
            l.w_hh.data.iter().for_each(|&v| f(v));
            l.bias.iter().for_each(|&v| f(v));
        }
        let h = &self.head;
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
        if let Some(e) = &self.embedding {
            e.data.iter().for_each(|&v| f(v));
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.w_ih.data.iter_mut().for_each(&mut f);
            l.w_hh.data.iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
        let h = &mut self.head;
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
        if let Some(e) = &mut self.embedding {
            e.data.iter_mut().for_each(&mut f);
        }
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

    /// self += alpha · other (same shapes).
    pub fn add_scaled(&mut self, other: &NetworkWeights, alpha: f64) {
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

/// Samples a matrix uniformly in ±√(6/(fan_in+fan_out)).
fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Mat {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

/// Fresh network weights.
///
/// Matrices start uniform in ±√(6/(fan_in+fan_out)); biases start at zero
/// except the forget gates, which start at 1 to keep early memory open.
pub fn init_network(
    hidden: usize,
    n_layers: usize,
    layout: &InputLayout,
    family: Family,
    mixture_k: usize,
    n_systems: usize,
    rng: &mut impl Rng,
) -> NetworkWeights {
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let d_in = if l == 0 { layout.input_width() } else { hidden };
        let mut w = LstmLayerWeights {
            w_ih: glorot(4 * hidden, d_in, d_in, 4 * hidden, rng),
            w_hh: glorot(4 * hidden, hidden, hidden, 4 * hidden, rng),
            bias: vec![0.0; 4 * hidden],
        };
        for b in &mut w.bias[hidden..2 * hidden] {
            *b = 1.0;
        }
        layers.push(w);
    }
    let mut head = ProjectionHead::zeros(family, mixture_k, hidden);
    head.w_mu = glorot(mixture_k, hidden, hidden, 1, rng);
    head.w_sigma = glorot(mixture_k, hidden, hidden, 1, rng);
    if head.w_nu.is_some() {
        head.w_nu = Some(glorot(mixture_k, hidden, hidden, 1, rng));
    }
    if head.w_weights.is_some() {
        head.w_weights = Some(glorot(mixture_k, hidden, hidden, 1, rng));
    }
    let embedding = if layout.use_embedding {
        Some(glorot(n_systems, layout.embedding_dim, n_systems, layout.embedding_dim, rng))
    } else {
        None
    };
    NetworkWeights { layers, head, embedding }
}

fn check_window_shapes(w: &SampleWindow, weights: &NetworkWeights, layout: &InputLayout)
    -> Result<(), NetError> {
    if w.targets.len() != WINDOW_LEN || w.covariates.rows != WINDOW_LEN {
        return Err(NetError::Shape(format!(
            "window {} must span {WINDOW_LEN} steps",
            w.window_id()
        )));
    }
    if w.covariates.cols != COVARIATE_COLS {
        return Err(NetError::Shape(format!(
            "window {} has {} covariate columns, want {COVARIATE_COLS}",
            w.window_id(),
            w.covariates.cols
        )));
    }
    if layout.use_static && w.static_features.len() != layout.static_width {
        return Err(NetError::Shape(format!(
            "window {} carries {} static features, layout wants {}",
            w.window_id(),
            w.static_features.len(),
            layout.static_width
        )));
    }
    let expect = layout.input_width();
    let got = weights.layers[0].input_size();
    if expect != got {
        return Err(NetError::Shape(format!(
            "layer 1 input width {got} does not match layout width {expect}"
        )));
    }
    if layout.use_embedding {
        match &weights.embedding {
            None => return Err(NetError::Shape("layout wants an embedding table".into())),
            Some(e) => {
                if w.system_index >= e.rows {
                    return Err(NetError::Shape(format!(
                        "system index {} outside embedding table ({} rows)",
                        w.system_index, e.rows
                    )));
                }
            }
        }
    }
    Ok(())
}

fn step_through_layers(
    x1: &[f64],
    state: &mut HiddenState,
    weights: &NetworkWeights,
) -> Vec<f64> {
    let mut input = x1.to_vec();
    for (l, w) in weights.layers.iter().enumerate() {
        let next = lstm_cell_forward(&input, &state.layers[l], w);
        input = next.h.clone();
        state.layers[l] = next;
    }
    input
}

/// Encodes the 48h context into the final recurrent state.
///
/// The pre-window observation z₀ is taken as 0; all context targets must be
/// observed.
pub fn encode(
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
) -> Result<HiddenState, NetError> {
    check_window_shapes(window, weights, layout)?;
    for t in 0..CONTEXT_LEN {
        if !window.observed[t] {
            return Err(NetError::MissingTarget { window_id: window.window_id(), step: t });
        }
    }
    let emb = weights.embedding.as_ref().map(|e| e.row(window.system_index).to_vec());
    let mut state = HiddenState::zeros(weights);
    let mut x = Vec::with_capacity(layout.input_width());
    for t in 0..CONTEXT_LEN {
        let z_prev = if t == 0 { 0.0 } else { window.targets[t - 1] / window.scale };
        layout.fill_input(&mut x, z_prev, window.covariates.row(t), &window.static_features,
            emb.as_deref());
        step_through_layers(&x, &mut state, weights);
    }
    Ok(state)
}

/// Which steps enter the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossRange {
    /// Likelihood factors over the forecasting interval only (default).
    ForecastOnly,
    /// Also score the context interval.
    ContextAndForecast,
}

impl LossRange {
    fn first_step(self) -> usize {
        match self {
            LossRange::ForecastOnly => CONTEXT_LEN,
            LossRange::ContextAndForecast => 0,
        }
    }
}

/// Teacher-forced negative log-likelihood of the forecast interval.
pub fn decode_train_nll(
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
) -> Result<f64, NetError> {
    decode_train_nll_traced(window, weights, layout, LossRange::ForecastOnly).map(|(nll, _)| nll)
}

/// Teacher-forced NLL plus the per-loss-step head parameters (for tests and
/// diagnostics).
pub fn decode_train_nll_traced(
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
    range: LossRange,
) -> Result<(f64, Vec<DistributionParams>), NetError> {
    check_window_shapes(window, weights, layout)?;
    for t in 0..WINDOW_LEN {
        if !window.observed[t] {
            return Err(NetError::MissingTarget { window_id: window.window_id(), step: t });
        }
    }
    let emb = weights.embedding.as_ref().map(|e| e.row(window.system_index).to_vec());
    let mut state = HiddenState::zeros(weights);
    let mut x = Vec::with_capacity(layout.input_width());
    let mut nll = 0.0;
    let mut trace = Vec::new();
    let first_loss = range.first_step();
    for t in 0..WINDOW_LEN {
        let z_prev = if t == 0 { 0.0 } else { window.targets[t - 1] / window.scale };
        layout.fill_input(&mut x, z_prev, window.covariates.row(t), &window.static_features,
            emb.as_deref());
        let top = step_through_layers(&x, &mut state, weights);
        if t >= first_loss {
            let (params, _) = apply_heads_cached(&top, &weights.head)?;
            let z = window.targets[t] / window.scale;
            nll -= crate::distributions::mixture_log_pdf(z, &params)?;
            trace.push(params);
        }
    }
    if !nll.is_finite() {
        return Err(NetError::NonFinite { window_id: window.window_id() });
    }
    Ok((nll, trace))
}

/// One ancestral sample path over the forecast interval, in Watts.
pub fn decode_sample_path(
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, NetError> {
    let state = encode(window, weights, layout)?;
    decode_path_from_state(state, window, weights, layout, rng).map(|(p, _)| p)
}

/// Ancestral decode from an already-encoded state; returns the unscaled path
/// and the head parameters observed along it.
///
/// Consumes the state (each path needs a fresh clone of the encoder output).
pub fn decode_path_from_state(
    mut state: HiddenState,
    window: &SampleWindow,
    weights: &NetworkWeights,
    layout: &InputLayout,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<DistributionParams>), NetError> {
    let emb = weights.embedding.as_ref().map(|e| e.row(window.system_index).to_vec());
    let mut x = Vec::with_capacity(layout.input_width());
    let mut z_prev = window.targets[CONTEXT_LEN - 1] / window.scale;
    let mut path = Vec::with_capacity(WINDOW_LEN - CONTEXT_LEN);
    let mut trace = Vec::with_capacity(WINDOW_LEN - CONTEXT_LEN);
    for t in CONTEXT_LEN..WINDOW_LEN {
        layout.fill_input(&mut x, z_prev, window.covariates.row(t), &window.static_features,
            emb.as_deref());
        let top = step_through_layers(&x, &mut state, weights);
        let (params, _) = apply_heads_cached(&top, &weights.head)?;
        let u_select = open_unit(rng);
        let u_value = open_unit(rng);
        let z = mixture_sample(&params, u_select, u_value)?;
        path.push(z * window.scale);
        trace.push(params);
        z_prev = z;
    }
    Ok((path, trace))
}

/// Forward-only mean NLL of a batch (finite-difference oracle side).
pub fn batch_nll(
    batch: &[&SampleWindow],
    weights: &NetworkWeights,
    layout: &InputLayout,
    range: LossRange,
) -> Result<f64, NetError> {
    let mut acc = 0.0;
    for w in batch {
        acc += decode_train_nll_traced(w, weights, layout, range)?.0;
    }
    Ok(acc / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::gradcheck::synthetic_windows;
    use super::*;
    use crate::distributions::{mixture_log_pdf, ComponentParams};
    use crate::rng::{substream, substream_indexed};

    fn bare_layout() -> InputLayout {
        InputLayout {
            use_physical: true,
            use_static: true,
            static_width: 4,
            use_embedding: true,
            embedding_dim: 3,
        }
    }

    #[test]
    fn zero_weights_encode_to_zero_state() {
        let layout = bare_layout();
        let weights = NetworkWeights {
            layers: vec![
                lstm::LstmLayerWeights::zeros(4, layout.input_width()),
                lstm::LstmLayerWeights::zeros(4, 4),
            ],
            head: ProjectionHead::zeros(Family::Gaussian, 1, 4),
            embedding: Some(Mat::zeros(3, 3)),
        };
        let w = &synthetic_windows(1, 3, 4)[0];
        let state = encode(w, &weights, &layout).unwrap();
        for l in &state.layers {
            assert!(l.h.iter().all(|&v| v == 0.0));
            assert!(l.c.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encode_is_sequence_sensitive() {
        let layout = bare_layout();
        let mut rng = substream(21, "seq-sens");
        let weights = init_network(4, 2, &layout, Family::Gaussian, 1, 3, &mut rng);
        let mut w = synthetic_windows(1, 3, 21).remove(0);
        let a = encode(&w, &weights, &layout).unwrap();
        w.targets.swap(10, 30);
        let b = encode(&w, &weights, &layout).unwrap();
        assert_ne!(a.layers[1].h, b.layers[1].h);
    }

    #[test]
    fn doubling_targets_and_scale_is_invisible() {
        let layout = bare_layout();
        let mut rng = substream(22, "scale-eq");
        let weights = init_network(4, 2, &layout, Family::PosGaussian, 2, 3, &mut rng);
        let w = synthetic_windows(1, 3, 22).remove(0);
        let mut doubled = w.clone();
        for z in &mut doubled.targets {
            *z *= 2.0;
        }
        doubled.scale *= 2.0;
        for p in &mut doubled.phys24_raw {
            *p *= 2.0;
        }
        let a = encode(&w, &weights, &layout).unwrap();
        let b = encode(&doubled, &weights, &layout).unwrap();
        assert_eq!(a, b);
        let nll_a = decode_train_nll(&w, &weights, &layout).unwrap();
        let nll_b = decode_train_nll(&doubled, &weights, &layout).unwrap();
        assert_eq!(nll_a.to_bits(), nll_b.to_bits());
        let mut r1 = substream_indexed(9, "path", 0);
        let mut r2 = substream_indexed(9, "path", 0);
        let p1 = decode_sample_path(&w, &weights, &layout, &mut r1).unwrap();
        let p2 = decode_sample_path(&doubled, &weights, &layout, &mut r2).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!((a * 2.0).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_weight_gaussian_nll_closed_form() {
        // per step: ½ln2π + ln(ln2 + σ_floor); over 24 steps = 13.258249...
        let layout = InputLayout {
            use_physical: true,
            use_static: false,
            static_width: 0,
            use_embedding: false,
            embedding_dim: 0,
        };
        let weights = NetworkWeights {
            layers: vec![
                lstm::LstmLayerWeights::zeros(4, layout.input_width()),
                lstm::LstmLayerWeights::zeros(4, 4),
            ],
            head: ProjectionHead::zeros(Family::Gaussian, 1, 4),
            embedding: None,
        };
        let mut w = synthetic_windows(1, 1, 5).remove(0);
        for z in &mut w.targets {
            *z = 0.0;
        }
        w.scale = 1.0;
        let nll = decode_train_nll(&w, &weights, &layout).unwrap();
        assert!((nll - 13.258249327608207).abs() < 1e-10, "nll={nll}");
    }

    #[test]
    fn nll_equals_sum_of_head_logpdfs() {
        let layout = bare_layout();
        let mut rng = substream(31, "nll-identity");
        let weights = init_network(5, 2, &layout, Family::PosGaussian, 3, 3, &mut rng);
        let w = &synthetic_windows(1, 3, 31)[0];
        let (nll, trace) =
            decode_train_nll_traced(w, &weights, &layout, LossRange::ForecastOnly).unwrap();
        assert_eq!(trace.len(), 24);
        let mut by_hand = 0.0;
        for (k, params) in trace.iter().enumerate() {
            let z = w.targets[CONTEXT_LEN + k] / w.scale;
            by_hand -= mixture_log_pdf(z, params).unwrap();
        }
        assert!((nll - by_hand).abs() < 1e-12);
    }

    #[test]
    fn nll_decreases_after_one_adam_step() {
        let layout = bare_layout();
        let mut rng = substream(32, "descent");
        let mut weights = init_network(6, 2, &layout, Family::PosGaussian, 2, 3, &mut rng);
        let windows = synthetic_windows(4, 3, 32);
        let refs: Vec<&SampleWindow> = windows.iter().collect();
        let before = batch_nll(&refs, &weights, &layout, LossRange::ForecastOnly).unwrap();
        let (_, grad) =
            compute_gradients(&refs, &weights, &layout, LossRange::ForecastOnly).unwrap();
        let mut flat = weights.flatten();
        let mut state = adam::AdamState::new(flat.len());
        adam::adam_step(&mut flat, &grad.flatten(), &mut state, 1e-3);
        weights.assign_flat(&flat);
        let after = batch_nll(&refs, &weights, &layout, LossRange::ForecastOnly).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn sample_paths_deterministic_per_seed() {
        let layout = bare_layout();
        let mut rng = substream(33, "paths");
        let weights = init_network(5, 2, &layout, Family::PosGaussian, 2, 3, &mut rng);
        let w = &synthetic_windows(1, 3, 33)[0];
        let p1 = decode_sample_path(w, &weights, &layout, &mut substream(7, "s")).unwrap();
        let p2 = decode_sample_path(w, &weights, &layout, &mut substream(7, "s")).unwrap();
        let p3 = decode_sample_path(w, &weights, &layout, &mut substream(8, "s")).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        assert_eq!(p1.len(), 24);
    }

    #[test]
    fn positive_gaussian_paths_never_negative() {
        let layout = bare_layout();
        let mut rng = substream(34, "nonneg");
        let weights = init_network(5, 2, &layout, Family::PosGaussian, 3, 3, &mut rng);
        let w = &synthetic_windows(1, 3, 34)[0];
        let state = encode(w, &weights, &layout).unwrap();
        for p in 0..100 {
            let mut path_rng = substream_indexed(44, "path", p);
            let (path, _) =
                decode_path_from_state(state.clone(), w, &weights, &layout, &mut path_rng)
                    .unwrap();
            assert!(path.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn degenerate_sigma_head_reproduces_mu_sequence() {
        let layout = bare_layout();
        let mut rng = substream(35, "degenerate");
        let mut weights = init_network(5, 2, &layout, Family::PosGaussian, 1, 3, &mut rng);
        // force σ to the floor: zero σ weights, strongly negative bias
        weights.head.w_sigma = Mat::zeros(1, 5);
        weights.head.b_sigma = vec![-40.0];
        let w = &synthetic_windows(1, 3, 35)[0];
        let state = encode(w, &weights, &layout).unwrap();
        let (path, trace) =
            decode_path_from_state(state, w, &weights, &layout, &mut substream(5, "p")).unwrap();
        for (z, params) in path.iter().zip(&trace) {
            let mu = match params.components[0] {
                ComponentParams::PosGaussian(p) => p.mu,
                _ => unreachable!(),
            };
            assert!(
                (z / w.scale - mu).abs() <= 5.0 * crate::distributions::SIGMA_FLOOR,
                "sampled {} vs mu {mu}",
                z / w.scale
            );
        }
    }

    #[test]
    fn missing_context_target_is_an_error() {
        let layout = bare_layout();
        let mut rng = substream(36, "missing");
        let weights = init_network(4, 2, &layout, Family::Gaussian, 1, 3, &mut rng);
        let mut w = synthetic_windows(1, 3, 36).remove(0);
        w.observed[5] = false;
        assert!(matches!(
            encode(&w, &weights, &layout),
            Err(NetError::MissingTarget { step: 5, .. })
        ));
    }

    #[test]
    fn unobserved_forecast_target_fails_training_decode() {
        let layout = bare_layout();
        let mut rng = substream(37, "missing2");
        let weights = init_network(4, 2, &layout, Family::Gaussian, 1, 3, &mut rng);
        let mut w = synthetic_windows(1, 3, 37).remove(0);
        w.observed[60] = false;
        assert!(matches!(
            decode_train_nll(&w, &weights, &layout),
            Err(NetError::MissingTarget { step: 60, .. })
        ));
        // but encoding and sampling still work
        assert!(encode(&w, &weights, &layout).is_ok());
    }

    #[test]
    fn flatten_roundtrip_and_count() {
        let layout = bare_layout();
        let mut rng = substream(38, "flat");
        let weights = init_network(4, 2, &layout, Family::Student, 3, 3, &mut rng);
        let flat = weights.flatten();
        assert_eq!(flat.len(), weights.param_count());
        let mut other = weights.zeros_like();
        other.assign_flat(&flat);
        assert_eq!(other, weights);
    }

    #[test]
    fn gradient_batch_parallel_chunking_is_order_stable() {
        let layout = bare_layout();
        let mut rng = substream(39, "chunks");
        let weights = init_network(4, 2, &layout, Family::PosGaussian, 2, 3, &mut rng);
        let windows = synthetic_windows(19, 3, 39);
        let refs: Vec<&SampleWindow> = windows.iter().collect();
        let (nll_a, ga) =
            compute_gradients(&refs, &weights, &layout, LossRange::ForecastOnly).unwrap();
        let (nll_b, gb) =
            compute_gradients(&refs, &weights, &layout, LossRange::ForecastOnly).unwrap();
        assert_eq!(nll_a.to_bits(), nll_b.to_bits());
        let fa = ga.flatten();
        let fb = gb.flatten();
        for (a, b) in fa.iter().zip(&fb) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
