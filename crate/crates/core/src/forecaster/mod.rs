//! Training with early stopping, probabilistic inference, evaluation against
//! the physical baseline, persistence, and the ablation harness.

pub mod ablate;
pub mod artifact;
mod infer;

pub use ablate::{run_ablation, AblationRow, AblationTable, Variant};
pub use artifact::{load, save, ArtifactError, EpochRecord, ModelArtifact, WeightsPayload};
pub use infer::{baseline_nmae, evaluate, forecast, nonnegative_support, ForecastResult};

use serde::{Deserialize, Serialize};

use crate::data::{DataError, SampleWindow, StaticStats, CONTEXT_LEN, HORIZON};
use crate::distributions::Family;
use crate::metrics::{point_metrics, MetricsError, WindowScore};
use crate::net::ffn::{ffn_gradients, ffn_sample_forecast, init_ffn, FfnWeights, FFN_WIDTH};
use crate::net::{
    adam::{adam_step, AdamState},
    compute_gradients, decode_path_from_state, encode, init_network, InputLayout, LossRange,
    NetError, NetworkWeights,
};
use crate::rng::{derive_seed_indexed, substream, substream_indexed};

#[derive(Debug)]
pub enum ForecasterError {
    Train { epoch: usize, batch: usize, source: NetError },
    Net(NetError),
    Data(DataError),
    Metrics(MetricsError),
    Artifact(ArtifactError),
    UnknownSystem { system_id: String },
    Config(String),
}

impl std::fmt::Display for ForecasterError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForecasterError::Train { epoch, batch, source } => {
                write!(f, "training aborted at epoch {epoch}, batch {batch}: {source}")
            }
            ForecasterError::Net(e) => write!(f, "{e}"),
            ForecasterError::Data(e) => write!(f, "{e}"),
            ForecasterError::Metrics(e) => write!(f, "{e}"),
            ForecasterError::Artifact(e) => write!(f, "{e}"),
            ForecasterError::UnknownSystem { system_id } => write!(
                f,
                "system {system_id} is not in the model vocabulary; train with description \
                 features to score systems unseen at training time"
            ),
            ForecasterError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for ForecasterError {}

impl From<NetError> for ForecasterError {
    fn from(e: NetError) -> Self {
        ForecasterError::Net(e)
    }
}
impl From<DataError> for ForecasterError {
    fn from(e: DataError) -> Self {
        ForecasterError::Data(e)
    }
}
impl From<MetricsError> for ForecasterError {
    fn from(e: MetricsError) -> Self {
        ForecasterError::Metrics(e)
    }
}
impl From<ArtifactError> for ForecasterError {
    fn from(e: ArtifactError) -> Self {
        ForecasterError::Artifact(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lstm,
    Ffn,
}

/// Model and training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub family: Family,
    pub mixture_k: usize,
    pub hidden: usize,
    pub layers: usize,
    pub use_physical: bool,
    pub use_system_id: bool,
    pub use_system_description: bool,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub context_len: usize,
    pub horizon: usize,
    /// Sample paths per window at evaluation/forecast time.
    pub num_paths: usize,
    /// Cheaper path count backing the per-epoch validation nMAE.
    pub val_paths: usize,
    /// Score the context interval in the training loss too.
    pub loss_on_context: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Architecture::Lstm,
            family: Family::PosGaussian,
            mixture_k: 5,
            hidden: 40,
            layers: 2,
            use_physical: true,
            use_system_id: true,
            use_system_description: false,
            embedding_dim: 10,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            context_len: CONTEXT_LEN,
            horizon: HORIZON,
            num_paths: 100,
            val_paths: 20,
            loss_on_context: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn layout(&self) -> InputLayout {
        InputLayout {
            use_physical: self.use_physical,
            use_static: self.use_system_description,
            static_width: 4,
            use_embedding: self.use_system_id,
            embedding_dim: self.embedding_dim,
        }
    }

    pub fn loss_range(&self) -> LossRange {
        if self.loss_on_context {
            LossRange::ContextAndForecast
        } else {
            LossRange::ForecastOnly
        }
    }

    pub fn validate(&self) -> Result<(), ForecasterError> {
        if self.context_len != CONTEXT_LEN || self.horizon != HORIZON {
            return Err(ForecasterError::Config(format!(
                "this pipeline builds {CONTEXT_LEN}h context / {HORIZON}h horizon windows; \
                 config asks for {}h/{}h",
                self.context_len, self.horizon
            )));
        }
        if self.mixture_k == 0 {
            return Err(ForecasterError::Config("mixture size must be >= 1".into()));
        }
        if self.hidden == 0 || self.layers == 0 {
            return Err(ForecasterError::Config("hidden size and layer count must be > 0".into()));
        }
        if self.num_paths == 0 || self.val_paths == 0 {
            return Err(ForecasterError::Config("path counts must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ForecasterError::Config("batch size and epochs must be > 0".into()));
        }
        if self.arch == Architecture::Ffn && (self.use_physical || self.use_system_id
            || self.use_system_description)
        {
            return Err(ForecasterError::Config(
                "the ffn baseline uses time covariates only; disable physical and system \
                 covariates"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Everything train() needs besides the config.
pub struct TrainData<'a> {
    pub train: &'a [&'a SampleWindow],
    pub val: &'a [&'a SampleWindow],
    pub vocabulary: &'a [String],
    pub static_stats: &'a StaticStats,
}

enum Weights {
    Lstm(NetworkWeights),
    Ffn(FfnWeights),
}

impl Weights {
    fn flatten(&self) -> Vec<f64> {
        match self {
            Weights::Lstm(w) => w.flatten(),
            Weights::Ffn(w) => w.flatten(),
        }
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        match self {
            Weights::Lstm(w) => w.assign_flat(flat),
            Weights::Ffn(w) => w.assign_flat(flat),
        }
    }
}

/// Trains a model with shuffled minibatch Adam and keeps the epoch weights
/// with the best daylight-masked validation nMAE.
pub fn train(config: &ModelConfig, data: &TrainData<'_>) -> Result<ModelArtifact, ForecasterError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(ForecasterError::Data(DataError::EmptySet("training windows".into())));
    }
    if data.val.is_empty() {
        return Err(ForecasterError::Data(DataError::EmptySet("validation windows".into())));
    }
    let layout = config.layout();
    let mut init_rng = substream(config.seed, "init");
    let mut weights = match config.arch {
        Architecture::Lstm => Weights::Lstm(init_network(
            config.hidden,
            config.layers,
            &layout,
            config.family,
            config.mixture_k,
            data.vocabulary.len(),
            &mut init_rng,
        )),
        Architecture::Ffn => {
            Weights::Ffn(init_ffn(FFN_WIDTH, config.family, config.mixture_k, &mut init_rng))
        }
    };

    let n_params = weights.flatten().len();
    let mut adam = AdamState::new(n_params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = substream_indexed(config.seed, "shuffle", epoch as u64);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut nll_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SampleWindow> = chunk.iter().map(|&i| data.train[i]).collect();
            let mut step = |w: &mut Weights| -> Result<f64, NetError> {
                let (nll, gflat) = match w {
                    Weights::Lstm(net) => {
                        let (nll, g) =
                            compute_gradients(&batch, net, &layout, config.loss_range())?;
                        (nll, g.flatten())
                    }
                    Weights::Ffn(net) => {
                        let (nll, g) = ffn_gradients(&batch, net)?;
                        (nll, g.flatten())
                    }
                };
                let mut flat = w.flatten();
                adam_step(&mut flat, &gflat, &mut adam, config.learning_rate);
                w.assign_flat(&flat);
                Ok(nll)
            };
            match step(&mut weights) {
                Ok(nll) => {
                    nll_sum += nll * batch.len() as f64;
                    seen += batch.len();
                }
                Err(source) => {
                    return Err(ForecasterError::Train { epoch, batch: batch_idx, source })
                }
            }
        }
        let train_nll = nll_sum / seen as f64;

        let val_nmae = validation_nmae(config, &weights, &layout, data.val, epoch)?;
        history.push(EpochRecord { epoch, train_nll, val_nmae });
        if best.as_ref().map(|(_, b, _)| val_nmae < *b).unwrap_or(true) {
            best = Some((epoch, val_nmae, weights.flatten()));
        }
    }

    let (best_epoch, _, best_flat) = best.unwrap();
    weights.assign_flat(&best_flat);
    Ok(ModelArtifact {
        format_version: artifact::ARTIFACT_VERSION,
        config: config.clone(),
        weights: match weights {
            Weights::Lstm(w) => WeightsPayload::Lstm(w),
            Weights::Ffn(w) => WeightsPayload::Ffn(w),
        },
        static_stats: data.static_stats.clone(),
        vocabulary: data.vocabulary.to_vec(),
        history,
        best_epoch,
    })
}

/// Median-of-paths validation nMAE, daylight-masked.
fn validation_nmae(
    config: &ModelConfig,
    weights: &Weights,
    layout: &InputLayout,
    val: &[&SampleWindow],
    epoch: usize,
) -> Result<f64, ForecasterError> {
    use rayon::prelude::*;
    let medians: Vec<Result<Vec<f64>, NetError>> = val
        .par_iter()
        .enumerate()
        .map(|(wi, w)| median_forecast(config, weights, layout, w, wi, epoch, config.val_paths))
        .collect();
    let mut scores = Vec::with_capacity(val.len());
    let mut medians_keep = Vec::with_capacity(val.len());
    for m in medians {
        medians_keep.push(m?);
    }
    for (w, med) in val.iter().zip(&medians_keep) {
        scores.push(window_score(w, med));
    }
    Ok(point_metrics(&scores)?.nmae)
}

fn window_score<'a>(w: &'a SampleWindow, forecast: &'a [f64]) -> WindowScore<'a> {
    WindowScore {
        forecast,
        observed: &w.targets[CONTEXT_LEN..],
        mask: &w.daylight[CONTEXT_LEN..],
        nominal_power_w: w.nominal_power_w,
    }
}

/// Median of `n_paths` ancestral sample paths for one window.
fn median_forecast(
    config: &ModelConfig,
    weights: &Weights,
    layout: &InputLayout,
    window: &SampleWindow,
    window_idx: usize,
    epoch: usize,
    n_paths: usize,
) -> Result<Vec<f64>, NetError> {
    let paths = sample_paths(config, weights, layout, window, window_idx, epoch, n_paths)?;
    Ok(median_of(&paths))
}

fn sample_paths(
    config: &ModelConfig,
    weights: &Weights,
    layout: &InputLayout,
    window: &SampleWindow,
    window_idx: usize,
    epoch: usize,
    n_paths: usize,
) -> Result<Vec<Vec<f64>>, NetError> {
    let mut paths = Vec::with_capacity(n_paths);
    match weights {
        Weights::Lstm(net) => {
            let state = encode(window, net, layout)?;
            for p in 0..n_paths {
                let stream = derive_seed_indexed(config.seed, "val-paths", epoch as u64)
                    ^ derive_seed_indexed(config.seed, "val-window", window_idx as u64);
                let mut rng = substream_indexed(stream, "path", p as u64);
                let (path, _) = decode_path_from_state(state.clone(), window, net, layout,
                    &mut rng)?;
                paths.push(path);
            }
        }
        Weights::Ffn(net) => {
            for p in 0..n_paths {
                let stream = derive_seed_indexed(config.seed, "val-paths", epoch as u64)
                    ^ derive_seed_indexed(config.seed, "val-window", window_idx as u64);
                let mut rng = substream_indexed(stream, "path", p as u64);
                paths.push(ffn_sample_forecast(window, net, &mut rng)?);
            }
        }
    }
    Ok(paths)
}

/// Per-step median via the sorted-sample order statistic (level 0.5).
fn median_of(paths: &[Vec<f64>]) -> Vec<f64> {
    let horizon = paths[0].len();
    let mut out = Vec::with_capacity(horizon);
    let mut column = Vec::with_capacity(paths.len());
    for t in 0..horizon {
        column.clear();
        column.extend(paths.iter().map(|p| p[t]));
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(crate::metrics::empirical_quantile(&column, 0.5));
    }
    out
}
