//! Ablation harness: trains the model variants with replicate seeds and
//! tabulates median ± std of every test metric next to the physical
//! baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_nmae, evaluate, train, Architecture, ForecasterError, ModelConfig, TrainData};
use crate::data::{SampleWindow, StaticStats};
use crate::distributions::Family;
use crate::metrics::{skill_score, MetricsReport, SystemBreakdown};

/// One ablation variant; ids follow the comparison-table numbering (8 is the
/// external convolutional model and is not part of this artifact).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant(pub u32);

impl Variant {
    pub const ALL: [Variant; 8] =
        [Variant(1), Variant(2), Variant(3), Variant(4), Variant(5), Variant(6), Variant(7),
        Variant(9)];

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "pos_gaussian_mixture_phys_id",
            2 => "gaussian_mixture_phys_id",
            3 => "student_mixture_phys_id",
            4 => "description_features",
            5 => "no_system_covariates",
            6 => "single_component_no_system",
            7 => "no_physical_covariates",
            9 => "ffn_baseline",
            _ => "unknown",
        }
    }

    /// Builds the variant's configuration from a base config.
    ///
    /// Variants differ from the base only in the documented fields, so any
    /// covariate ablation changes exactly the relevant toggles.
    pub fn config(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        c.arch = Architecture::Lstm;
        c.family = Family::PosGaussian;
        c.use_physical = true;
        c.use_system_id = true;
        c.use_system_description = false;
        match self.0 {
            1 => {}
            2 => c.family = Family::Gaussian,
            3 => c.family = Family::Student,
            4 => {
                c.use_system_id = false;
                c.use_system_description = true;
            }
            5 => {
                c.use_system_id = false;
            }
            6 => {
                c.mixture_k = 1;
                c.use_system_id = false;
            }
            7 => {
                c.use_physical = false;
            }
            9 => {
                c.arch = Architecture::Ffn;
                c.use_physical = false;
                c.use_system_id = false;
            }
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub model_id: u32,
    pub label: String,
    pub replicates: usize,
    pub nmae_median: f64,
    pub nmae_std: f64,
    pub nrmse_median: f64,
    pub nrmse_std: f64,
    /// Skill of the median nMAE against the baseline.
    pub skill: f64,
    pub crps_median: f64,
    pub crps_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub baseline_nmae: f64,
    pub baseline_nrmse: f64,
    pub rows: Vec<AblationRow>,
    /// Per-system improvement ranking of variant 1 (replicate-averaged).
    pub per_system_model_1: Vec<SystemBreakdown>,
    pub replicates: usize,
    pub base_seed: u64,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model_id,label,replicates,nmae_median,nmae_std,nrmse_median,nrmse_std,skill,\
             crps_median,crps_std\n",
        );
        out.push_str(&format!(
            "baseline,phys24,,{:.6},,{:.6},,0.000000,,\n",
            self.baseline_nmae, self.baseline_nrmse
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.model_id,
                r.label,
                r.replicates,
                r.nmae_median,
                r.nmae_std,
                r.nrmse_median,
                r.nrmse_std,
                r.skill,
                r.crps_median,
                r.crps_std
            ));
        }
        out
    }

    pub fn row(&self, id: u32) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.model_id == id)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Trains `replicates` seeds of each requested variant and evaluates them on
/// the test partition. Replicate r runs with seed `base.seed + r`.
pub fn run_ablation(
    base: &ModelConfig,
    variants: &[Variant],
    replicates: usize,
    train_windows: &[&SampleWindow],
    val_windows: &[&SampleWindow],
    test_windows: &[&SampleWindow],
    vocabulary: &[String],
    static_stats: &StaticStats,
) -> Result<AblationTable, ForecasterError> {
    if replicates == 0 {
        return Err(ForecasterError::Config("replicates must be >= 1".into()));
    }
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| (0..replicates).map(move |r| (v, r as u64)))
        .collect();

    let reports: Vec<Result<(Variant, MetricsReport), ForecasterError>> = jobs
        .par_iter()
        .map(|&(variant, replicate)| {
            let mut config = variant.config(base);
            config.seed = base.seed + replicate;
            let data = TrainData {
                train: train_windows,
                val: val_windows,
                vocabulary,
                static_stats,
            };
            let artifact = train(&config, &data)?;
            let report = evaluate(&artifact, test_windows)?;
            Ok((variant, report))
        })
        .collect();

    let mut by_variant: std::collections::BTreeMap<u32, Vec<MetricsReport>> = Default::default();
    for r in reports {
        let (variant, report) = r?;
        by_variant.entry(variant.0).or_default().push(report);
    }

    let base_nmae = baseline_nmae(test_windows)?;
    let baseline_scores: Vec<crate::metrics::WindowScore<'_>> = test_windows
        .iter()
        .map(|w| crate::metrics::WindowScore {
            forecast: &w.phys24_raw[crate::data::CONTEXT_LEN..],
            observed: &w.targets[crate::data::CONTEXT_LEN..],
            mask: &w.daylight[crate::data::CONTEXT_LEN..],
            nominal_power_w: w.nominal_power_w,
        })
        .collect();
    let baseline_points = crate::metrics::point_metrics(&baseline_scores)?;

    let mut rows = Vec::new();
    let mut per_system_model_1 = Vec::new();
    for (&id, reports) in &by_variant {
        let mut nmae: Vec<f64> = reports.iter().map(|r| r.nmae).collect();
        let mut nrmse: Vec<f64> = reports.iter().map(|r| r.nrmse).collect();
        let mut crps: Vec<f64> = reports.iter().map(|r| r.crps_w).collect();
        let nmae_median = median(&mut nmae);
        let row = AblationRow {
            model_id: id,
            label: Variant(id).label().to_string(),
            replicates: reports.len(),
            nmae_median,
            nmae_std: std_dev(&nmae),
            nrmse_median: median(&mut nrmse),
            nrmse_std: std_dev(&nrmse),
            skill: skill_score(nmae_median, base_nmae)?,
            crps_median: median(&mut crps),
            crps_std: std_dev(&crps),
        };
        rows.push(row);
        if id == 1 {
            per_system_model_1 = average_per_system(reports);
        }
    }

    Ok(AblationTable {
        baseline_nmae: base_nmae,
        baseline_nrmse: baseline_points.nrmse,
        rows,
        per_system_model_1,
        replicates,
        base_seed: base.seed,
    })
}

/// Averages per-system breakdowns across replicates, re-ranked by
/// improvement.
fn average_per_system(reports: &[MetricsReport]) -> Vec<SystemBreakdown> {
    let mut acc: std::collections::BTreeMap<String, (usize, f64, f64, usize)> = Default::default();
    for r in reports {
        for s in &r.per_system {
            let e = acc.entry(s.system_id.clone()).or_insert((0, 0.0, 0.0, s.windows));
            e.0 += 1;
            e.1 += s.nmae;
            e.2 += s.baseline_nmae;
        }
    }
    let mut out: Vec<SystemBreakdown> = acc
        .into_iter()
        .map(|(system_id, (n, nmae, base, windows))| {
            let nmae = nmae / n as f64;
            let baseline_nmae = base / n as f64;
            SystemBreakdown {
                system_id,
                windows,
                nmae,
                baseline_nmae,
                improvement: baseline_nmae - nmae,
            }
        })
        .collect();
    out.sort_by(|a, b| b.improvement.partial_cmp(&a.improvement).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_7_differs_from_1_only_in_physical_toggle() {
        let base = ModelConfig::default();
        let c1 = serde_json::to_value(Variant(1).config(&base)).unwrap();
        let c7 = serde_json::to_value(Variant(7).config(&base)).unwrap();
        let (o1, o7) = (c1.as_object().unwrap(), c7.as_object().unwrap());
        let mut diffs = Vec::new();
        for (k, v) in o1 {
            if o7[k] != *v {
                diffs.push(k.clone());
            }
        }
        assert_eq!(diffs, vec!["use_physical".to_string()]);
    }

    #[test]
    fn variant_enumeration_covers_eight_models() {
        assert_eq!(Variant::ALL.len(), 8);
        let base = ModelConfig::default();
        for v in Variant::ALL {
            let c = v.config(&base);
            assert!(c.validate().is_ok(), "variant {} invalid", v.0);
        }
        assert_eq!(Variant(9).config(&base).arch, Architecture::Ffn);
        assert_eq!(Variant(6).config(&base).mixture_k, 1);
        assert_eq!(Variant(2).config(&base).family, Family::Gaussian);
    }
}
