//! Forecast quality metrics with daylight masking: nMAE, nRMSE, skill score
//! and the empirical CRPS.
//!
//! Night steps (solar zenith ≥ 85°) are excluded everywhere, otherwise the
//! zero-power hours would drag every error metric toward 0.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::synth::solar::{solar_zenith, NIGHT_ZENITH_DEG};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptySet(String),
    ShapeMismatch { expected: usize, got: usize },
    UndefinedReference,
    TooFewPaths(usize),
}

impl std::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricsError::EmptySet(what) => write!(f, "no scorable data: {what}"),
            MetricsError::ShapeMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            MetricsError::UndefinedReference => {
                write!(f, "skill score undefined for a zero-error reference")
            }
            MetricsError::TooFewPaths(p) => {
                write!(f, "CRPS needs at least 2 sample paths, got {p}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// True where the sun stands above the night threshold.
pub fn daylight_mask(
    timestamps: &[DateTime<Utc>],
    latitude_deg: f64,
    longitude_deg: f64,
) -> Vec<bool> {
    timestamps
        .iter()
        .map(|&t| solar_zenith(latitude_deg, longitude_deg, t) < NIGHT_ZENITH_DEG)
        .collect()
}

/// One window's forecast/observation pair for point scoring.
#[derive(Debug, Clone, Copy)]
pub struct WindowScore<'a> {
    pub forecast: &'a [f64],
    pub observed: &'a [f64],
    pub mask: &'a [bool],
    pub nominal_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    /// Fraction of nominal power.
    pub nmae: f64,
    pub nrmse: f64,
    pub counted_points: usize,
    /// Windows dropped because every step was masked.
    pub excluded_windows: usize,
}

/// Per-window normalized errors averaged over windows; the nRMSE square
/// root is taken after the window average.
pub fn point_metrics(windows: &[WindowScore<'_>]) -> Result<PointMetrics, MetricsError> {
    let mut mae_acc = 0.0;
    let mut mse_acc = 0.0;
    let mut used = 0usize;
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for w in windows {
        if w.forecast.len() != w.observed.len() || w.forecast.len() != w.mask.len() {
            return Err(MetricsError::ShapeMismatch {
                expected: w.forecast.len(),
                got: w.observed.len().min(w.mask.len()),
            });
        }
        let mut abs = 0.0;
        let mut sq = 0.0;
        let mut n = 0usize;
        for ((f, z), &m) in w.forecast.iter().zip(w.observed).zip(w.mask) {
            if m {
                let e = f - z;
                abs += e.abs();
                sq += e * e;
                n += 1;
            }
        }
        if n == 0 {
            excluded += 1;
            continue;
        }
        mae_acc += abs / n as f64 / w.nominal_power_w;
        mse_acc += sq / n as f64 / (w.nominal_power_w * w.nominal_power_w);
        used += 1;
        counted += n;
    }
    if used == 0 {
        return Err(MetricsError::EmptySet("all windows masked or none given".into()));
    }
    Ok(PointMetrics {
        nmae: mae_acc / used as f64,
        nrmse: (mse_acc / used as f64).sqrt(),
        counted_points: counted,
        excluded_windows: excluded,
    })
}

/// Skill of a model against a reference predictor, from their nMAEs.
pub fn skill_score(nmae_model: f64, nmae_ref: f64) -> Result<f64, MetricsError> {
    if nmae_ref <= 0.0 {
        return Err(MetricsError::UndefinedReference);
    }
    Ok(1.0 - nmae_model / nmae_ref)
}

/// Empirical CRPS of one window from its sample paths, energy form:
///
/// CRPS = (1/P)Σ|xᵢ−z| − (1/2P²)ΣΣ|xᵢ−xⱼ|, averaged over unmasked steps.
///
/// Exact for the empirical predictive distribution; equals the α-integral of
/// twice the quantile loss with the empirical quantile function.
pub fn crps_empirical(
    paths: &[Vec<f64>],
    observations: &[f64],
    mask: &[bool],
) -> Result<f64, MetricsError> {
    if paths.len() < 2 {
        return Err(MetricsError::TooFewPaths(paths.len()));
    }
    let horizon = observations.len();
    for p in paths {
        if p.len() != horizon {
            return Err(MetricsError::ShapeMismatch { expected: horizon, got: p.len() });
        }
    }
    if mask.len() != horizon {
        return Err(MetricsError::ShapeMismatch { expected: horizon, got: mask.len() });
    }
    let n_paths = paths.len();
    let mut acc = 0.0;
    let mut steps = 0usize;
    let mut xs = vec![0.0; n_paths];
    for t in 0..horizon {
        if !mask[t] {
            continue;
        }
        for (i, p) in paths.iter().enumerate() {
            xs[i] = p[t];
        }
        // sorting turns the double sum Σ|xᵢ−xⱼ| into a linear sweep
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let z = observations[t];
        let term1: f64 = xs.iter().map(|x| (x - z).abs()).sum::<f64>() / n_paths as f64;
        let mut pair_sum = 0.0;
        let mut prefix = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            pair_sum += i as f64 * x - prefix;
            prefix += x;
        }
        let term2 = pair_sum / (n_paths * n_paths) as f64;
        acc += term1 - term2;
        steps += 1;
    }
    if steps == 0 {
        return Err(MetricsError::EmptySet("all steps masked".into()));
    }
    Ok(acc / steps as f64)
}

/// Empirical step quantile: level α maps to sorted element ⌈α·n⌉ (1-based).
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let k = (alpha * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Reference CRPS oracle: discretized α-integral of 2Λ_α with the empirical
/// quantile function. Kept for tests and cross-checks of the energy form.
pub fn crps_pinball_oracle(
    paths: &[Vec<f64>],
    observations: &[f64],
    mask: &[bool],
    n_levels: usize,
) -> f64 {
    let horizon = observations.len();
    let n_paths = paths.len();
    let mut acc = 0.0;
    let mut steps = 0usize;
    for t in 0..horizon {
        if !mask[t] {
            continue;
        }
        let mut xs: Vec<f64> = paths.iter().map(|p| p[t]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let z = observations[t];
        let mut integral = 0.0;
        for l in 0..n_levels {
            let alpha = (l as f64 + 0.5) / n_levels as f64;
            let q = empirical_quantile(&xs, alpha);
            let indicator = if z < q { 1.0 } else { 0.0 };
            let pinball = (alpha - indicator) * (z - q);
            integral += 2.0 * pinball;
        }
        acc += integral / n_levels as f64;
        let _ = n_paths;
        steps += 1;
    }
    acc / steps as f64
}

/// Per-system slice of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBreakdown {
    pub system_id: String,
    pub windows: usize,
    pub nmae: f64,
    pub baseline_nmae: f64,
    /// baseline nMAE − model nMAE; positive means the model wins.
    pub improvement: f64,
}

/// Full evaluation report for one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmae: f64,
    pub nrmse: f64,
    /// 1 − nMAE/nMAE_ref against `reference`.
    pub skill: f64,
    pub reference: String,
    pub baseline_nmae: f64,
    /// CRPS in Watts.
    pub crps_w: f64,
    /// CRPS divided by the mean nominal power (comparability variant).
    pub crps_norm: f64,
    pub counted_points: usize,
    pub windows: usize,
    /// Sorted by improvement, best first.
    pub per_system: Vec<SystemBreakdown>,
}

impl MetricsReport {
    /// One flat CSV row; `label` names the model variant.
    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:.6},{:.6},{:.6},{:.6}\n",
            self.nmae, self.nrmse, self.skill, self.crps_w
        )
    }

    pub fn csv_header() -> &'static str {
        "model,nmae,nrmse,skill,crps\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn daylight_mask_day_and_night() {
        let noon = Utc.with_ymd_and_hms(2021, 6, 21, 12, 0, 0).unwrap();
        let midnight = Utc.with_ymd_and_hms(2021, 6, 21, 0, 0, 0).unwrap();
        let equator_noon = Utc.with_ymd_and_hms(2021, 3, 21, 12, 0, 0).unwrap();
        let m = daylight_mask(&[noon, midnight], 49.6, 0.0);
        assert_eq!(m, vec![true, false]);
        let m = daylight_mask(&[equator_noon], 0.0, 0.0);
        assert_eq!(m, vec![true]);
    }

    #[test]
    fn perfect_forecast_scores_zero() {
        let obs = [3.0, 5.0, 0.0];
        let mask = [true, true, true];
        let ws = [WindowScore { forecast: &obs, observed: &obs, mask: &mask, nominal_power_w: 10.0 }];
        let m = point_metrics(&ws).unwrap();
        assert_eq!(m.nmae, 0.0);
        assert_eq!(m.nrmse, 0.0);
        assert_eq!(m.counted_points, 3);
    }

    #[test]
    fn hand_computed_two_step_window() {
        // P=10, forecasts (6,8), observations (5,10):
        // nMAE = ((1+2)/2)/10 = 0.15; nRMSE = sqrt(((1+4)/2)/100) = 0.158114
        let f = [6.0, 8.0];
        let z = [5.0, 10.0];
        let mask = [true, true];
        let ws = [WindowScore { forecast: &f, observed: &z, mask: &mask, nominal_power_w: 10.0 }];
        let m = point_metrics(&ws).unwrap();
        assert!((m.nmae - 0.15).abs() < 1e-12);
        assert!((m.nrmse - 0.15811388300841897).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_scale_free() {
        let f = [6.0, 8.0];
        let z = [5.0, 10.0];
        let f2 = [12.0, 16.0];
        let z2 = [10.0, 20.0];
        let mask = [true, true];
        let a = point_metrics(&[WindowScore {
            forecast: &f,
            observed: &z,
            mask: &mask,
            nominal_power_w: 10.0,
        }])
        .unwrap();
        let b = point_metrics(&[WindowScore {
            forecast: &f2,
            observed: &z2,
            mask: &mask,
            nominal_power_w: 20.0,
        }])
        .unwrap();
        assert!((a.nmae - b.nmae).abs() < 1e-15);
        assert!((a.nrmse - b.nrmse).abs() < 1e-15);
    }

    #[test]
    fn all_masked_window_excluded_with_empty_set_error_at_zero() {
        let f = [1.0];
        let z = [2.0];
        let masked = [false];
        let open = [true];
        let ws = [
            WindowScore { forecast: &f, observed: &z, mask: &masked, nominal_power_w: 1.0 },
            WindowScore { forecast: &f, observed: &z, mask: &open, nominal_power_w: 1.0 },
        ];
        let m = point_metrics(&ws).unwrap();
        assert_eq!(m.excluded_windows, 1);
        let all_masked =
            [WindowScore { forecast: &f, observed: &z, mask: &masked, nominal_power_w: 1.0 }];
        assert!(point_metrics(&all_masked).is_err());
    }

    #[test]
    fn night_garbage_never_contributes() {
        let z = [5.0, 10.0, 7.0];
        let mask = [true, false, true];
        let clean = [5.5, 10.0, 7.5];
        let garbage = [5.5, 9.9e12, 7.5];
        let a = point_metrics(&[WindowScore {
            forecast: &clean,
            observed: &z,
            mask: &mask,
            nominal_power_w: 10.0,
        }])
        .unwrap();
        let b = point_metrics(&[WindowScore {
            forecast: &garbage,
            observed: &z,
            mask: &mask,
            nominal_power_w: 10.0,
        }])
        .unwrap();
        assert_eq!(a, b);
        // CRPS likewise
        let paths_clean = vec![vec![5.0, 1.0, 6.0], vec![6.0, 2.0, 8.0]];
        let paths_garbage = vec![vec![5.0, -4e9, 6.0], vec![6.0, 3e7, 8.0]];
        let ca = crps_empirical(&paths_clean, &z, &mask).unwrap();
        let cb = crps_empirical(&paths_garbage, &z, &mask).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn skill_reproduces_reported_numbers() {
        // nMAE pairs from the reported comparison table
        assert!((skill_score(6.707, 7.958).unwrap() - 0.15720).abs() < 1e-4);
        assert!((skill_score(9.333, 7.958).unwrap() - (-0.17278)).abs() < 1e-4);
        assert_eq!(skill_score(3.3, 3.3).unwrap(), 0.0);
        assert!(skill_score(1.0, 0.0).is_err());
    }

    #[test]
    fn skill_is_decreasing_in_model_error() {
        let mut prev = f64::INFINITY;
        for nmae in [1.0, 2.0, 3.0, 5.0] {
            let s = skill_score(nmae, 4.0).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn crps_degenerate_predictor_is_absolute_error() {
        let paths = vec![vec![4.0, 2.0], vec![4.0, 2.0], vec![4.0, 2.0]];
        let obs = [5.0, 2.0];
        let mask = [true, true];
        let c = crps_empirical(&paths, &obs, &mask).unwrap();
        // (|4−5| + |2−2|)/2
        assert_eq!(c, 0.5);
    }

    #[test]
    fn crps_two_paths_hand_value() {
        // paths {0, 2}, obs 1: (1/2)(1+1) − (1/8)(0+2+2+0) = 1 − 0.5 = 0.5
        let paths = vec![vec![0.0], vec![2.0]];
        let c = crps_empirical(&paths, &[1.0], &[true]).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        // cross-check against the discretized pinball integral
        let oracle = crps_pinball_oracle(&paths, &[1.0], &[true], 100_000);
        assert!((c - oracle).abs() < 1e-4, "energy={c} pinball={oracle}");
    }

    #[test]
    fn crps_at_most_mean_absolute_deviation() {
        let mut rng = crate::rng::substream(2, "crps-mad");
        use rand::Rng;
        for _ in 0..50 {
            let paths: Vec<Vec<f64>> =
                (0..20).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let z = rng.gen_range(-3.0..3.0);
            let c = crps_empirical(&paths, &[z], &[true]).unwrap();
            let mad: f64 =
                paths.iter().map(|p| (p[0] - z).abs()).sum::<f64>() / paths.len() as f64;
            assert!(c <= mad + 1e-12);
        }
    }

    #[test]
    fn energy_form_matches_pinball_discretization() {
        // spec property: 100 half-open levels within 1% relative, P=100
        let mut rng = crate::rng::substream(3, "crps-pinball");
        use rand::Rng;
        for case in 0..20 {
            let horizon = 4;
            let paths: Vec<Vec<f64>> = (0..100)
                .map(|_| (0..horizon).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let obs: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..10.0)).collect();
            let mask = vec![true; horizon];
            let energy = crps_empirical(&paths, &obs, &mask).unwrap();
            let pinball = crps_pinball_oracle(&paths, &obs, &mask, 100);
            assert!(
                (energy - pinball).abs() / energy.abs() < 0.01,
                "case {case}: energy={energy} pinball={pinball}"
            );
        }
    }

    #[test]
    fn crps_needs_two_paths() {
        assert!(matches!(
            crps_empirical(&[vec![1.0]], &[1.0], &[true]),
            Err(MetricsError::TooFewPaths(1))
        ));
    }

    #[test]
    fn single_window_jensen_nrmse_at_least_nmae() {
        let mut rng = crate::rng::substream(4, "jensen");
        use rand::Rng;
        for _ in 0..30 {
            let f: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..10.0)).collect();
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..10.0)).collect();
            let mask = vec![true; 8];
            let m = point_metrics(&[WindowScore {
                forecast: &f,
                observed: &z,
                mask: &mask,
                nominal_power_w: 1.0,
            }])
            .unwrap();
            assert!(m.nrmse >= m.nmae - 1e-12);
        }
    }
}
