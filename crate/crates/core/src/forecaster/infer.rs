//! Inference and evaluation: sample paths → quantiles → median point
//! forecast, scored against observations and the intraday physical baseline.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ForecasterError, ModelArtifact, WeightsPayload};
use crate::data::{DataError, SampleWindow, CONTEXT_LEN};
use crate::distributions::Family;
use crate::metrics::{
    crps_empirical, empirical_quantile, point_metrics, skill_score, MetricsReport, SystemBreakdown,
    WindowScore,
};
use crate::net::ffn::ffn_sample_forecast;
use crate::net::{decode_path_from_state, encode};
use crate::rng::{derive_seed, substream_indexed};

/// Sample paths, empirical quantiles and the median point forecast of one
/// window, in Watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub window_id: String,
    pub system_id: String,
    pub t0: DateTime<Utc>,
    pub paths: Vec<Vec<f64>>,
    pub quantile_levels: Vec<f64>,
    /// `quantiles[l][t]` = level `quantile_levels[l]` at forecast step t.
    pub quantiles: Vec<Vec<f64>>,
    pub median: Vec<f64>,
}

impl ForecastResult {
    /// Newline-delimited JSON record (paths omitted, quantiles keyed by level).
    pub fn to_ndjson_record(&self) -> serde_json::Value {
        let quantiles: serde_json::Map<String, serde_json::Value> = self
            .quantile_levels
            .iter()
            .zip(&self.quantiles)
            .map(|(l, q)| (format!("{l}"), json!(q)))
            .collect();
        json!({
            "window_id": self.window_id,
            "system_id": self.system_id,
            "t0": self.t0.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "median": self.median,
            "quantiles": quantiles,
        })
    }
}

/// Resolves a window's embedding row against the artifact vocabulary.
///
/// System-ID models refuse systems unseen at training time; description
/// models score them through the standardized static features.
fn resolve_system_index(
    artifact: &ModelArtifact,
    window: &SampleWindow,
) -> Result<usize, ForecasterError> {
    match artifact.vocabulary.binary_search(&window.system_id) {
        Ok(idx) => Ok(idx),
        Err(_) if artifact.config.use_system_id => {
            Err(ForecasterError::UnknownSystem { system_id: window.system_id.clone() })
        }
        Err(_) => Ok(0), // embedding unused by this configuration
    }
}

/// Runs `n_paths` ancestral decodes and reduces them to quantiles.
///
/// Quantile level α maps to sorted sample ⌈α·n⌉ (1-based), so quantile
/// vectors can never cross; the median is level 0.5.
pub fn forecast(
    artifact: &ModelArtifact,
    window: &SampleWindow,
    n_paths: usize,
    levels: &[f64],
) -> Result<ForecastResult, ForecasterError> {
    if n_paths == 0 {
        return Err(ForecasterError::Config("n_paths must be >= 1".into()));
    }
    for &l in levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(ForecasterError::Config(format!("quantile level {l} outside (0,1)")));
        }
    }
    let mut window = window.clone();
    window.system_index = resolve_system_index(artifact, &window)?;
    let layout = artifact.config.layout();
    // per-window deterministic path streams, independent of evaluation order
    let stream = derive_seed(artifact.config.seed, &format!("forecast/{}", window.window_id()));

    let mut paths = Vec::with_capacity(n_paths);
    match &artifact.weights {
        WeightsPayload::Lstm(net) => {
            let state = encode(&window, net, &layout)?;
            for p in 0..n_paths {
                let mut rng = substream_indexed(stream, "path", p as u64);
                let (path, _) =
                    decode_path_from_state(state.clone(), &window, net, &layout, &mut rng)?;
                paths.push(path);
            }
        }
        WeightsPayload::Ffn(net) => {
            for p in 0..n_paths {
                let mut rng = substream_indexed(stream, "path", p as u64);
                paths.push(ffn_sample_forecast(&window, net, &mut rng)?);
            }
        }
    }

    let horizon = paths[0].len();
    let mut quantiles = vec![Vec::with_capacity(horizon); levels.len()];
    let mut median = Vec::with_capacity(horizon);
    let mut column = Vec::with_capacity(n_paths);
    for t in 0..horizon {
        column.clear();
        column.extend(paths.iter().map(|p| p[t]));
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (li, &l) in levels.iter().enumerate() {
            quantiles[li].push(empirical_quantile(&column, l));
        }
        median.push(empirical_quantile(&column, 0.5));
    }
    Ok(ForecastResult {
        window_id: window.window_id(),
        system_id: window.system_id.clone(),
        t0: window.t0,
        paths,
        quantile_levels: levels.to_vec(),
        quantiles,
        median,
    })
}

/// Daylight-masked nMAE of the raw intraday physical forecast over the
/// forecast interval — the reference predictor for skill scores.
pub fn baseline_nmae(windows: &[&SampleWindow]) -> Result<f64, DataError> {
    if windows.is_empty() {
        return Err(DataError::EmptySet("baseline windows".into()));
    }
    let scores: Vec<WindowScore<'_>> = windows
        .iter()
        .map(|w| WindowScore {
            forecast: &w.phys24_raw[CONTEXT_LEN..],
            observed: &w.targets[CONTEXT_LEN..],
            mask: &w.daylight[CONTEXT_LEN..],
            nominal_power_w: w.nominal_power_w,
        })
        .collect();
    point_metrics(&scores)
        .map(|m| m.nmae)
        .map_err(|e| DataError::EmptySet(format!("baseline scoring: {e}")))
}

/// Scores an artifact on a window set: nMAE/nRMSE/CRPS of the model, nMAE of
/// the intraday physical baseline, skill, and the per-system improvement
/// ranking.
pub fn evaluate(
    artifact: &ModelArtifact,
    windows: &[&SampleWindow],
) -> Result<MetricsReport, ForecasterError> {
    if windows.is_empty() {
        return Err(ForecasterError::Data(DataError::EmptySet("evaluation windows".into())));
    }
    let n_paths = artifact.config.num_paths;
    let results: Vec<Result<ForecastResult, ForecasterError>> =
        windows.par_iter().map(|w| forecast(artifact, w, n_paths, &[])).collect();
    let mut forecasts = Vec::with_capacity(windows.len());
    for r in results {
        forecasts.push(r?);
    }

    let model_scores: Vec<WindowScore<'_>> = windows
        .iter()
        .zip(&forecasts)
        .map(|(w, f)| WindowScore {
            forecast: &f.median,
            observed: &w.targets[CONTEXT_LEN..],
            mask: &w.daylight[CONTEXT_LEN..],
            nominal_power_w: w.nominal_power_w,
        })
        .collect();
    let model_metrics = point_metrics(&model_scores)?;
    let base_nmae = baseline_nmae(windows)?;
    let skill = skill_score(model_metrics.nmae, base_nmae)?;

    let mut crps_sum = 0.0;
    let mut crps_norm_sum = 0.0;
    let mut crps_windows = 0usize;
    for (w, f) in windows.iter().zip(&forecasts) {
        match crps_empirical(&f.paths, &w.targets[CONTEXT_LEN..], &w.daylight[CONTEXT_LEN..]) {
            Ok(c) => {
                crps_sum += c;
                crps_norm_sum += c / w.nominal_power_w;
                crps_windows += 1;
            }
            Err(crate::metrics::MetricsError::EmptySet(_)) => {} // fully dark window
            Err(e) => return Err(e.into()),
        }
    }
    if crps_windows == 0 {
        return Err(ForecasterError::Metrics(crate::metrics::MetricsError::EmptySet(
            "every window fully masked".into(),
        )));
    }

    // per-system breakdown, ranked by improvement over the baseline
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by(|&a, &b| windows[a].system_id.cmp(&windows[b].system_id));
    let mut per_system = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let sys = &windows[order[i]].system_id;
        let mut model_group = Vec::new();
        let mut base_group = Vec::new();
        let mut j = i;
        while j < order.len() && &windows[order[j]].system_id == sys {
            let w = windows[order[j]];
            model_group.push(model_scores[order[j]]);
            base_group.push(WindowScore {
                forecast: &w.phys24_raw[CONTEXT_LEN..],
                observed: &w.targets[CONTEXT_LEN..],
                mask: &w.daylight[CONTEXT_LEN..],
                nominal_power_w: w.nominal_power_w,
            });
            j += 1;
        }
        let m = point_metrics(&model_group)?;
        let b = point_metrics(&base_group)?;
        per_system.push(SystemBreakdown {
            system_id: sys.clone(),
            windows: j - i,
            nmae: m.nmae,
            baseline_nmae: b.nmae,
            improvement: b.nmae - m.nmae,
        });
        i = j;
    }
    per_system.sort_by(|a, b| b.improvement.partial_cmp(&a.improvement).unwrap());

    Ok(MetricsReport {
        nmae: model_metrics.nmae,
        nrmse: model_metrics.nrmse,
        skill,
        reference: "phys24".into(),
        baseline_nmae: base_nmae,
        crps_w: crps_sum / crps_windows as f64,
        crps_norm: crps_norm_sum / crps_windows as f64,
        counted_points: model_metrics.counted_points,
        windows: windows.len(),
        per_system,
    })
}

/// True when the artifact's output family keeps all mass on [0, ∞).
pub fn nonnegative_support(artifact: &ModelArtifact) -> bool {
    artifact.config.family == Family::PosGaussian
}
