//! Window segmentation, scaling, covariates and static-feature
//! standardization.

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::validate::ValidatedSeries;
use super::{
    DataError, PVSystemDescriptor, PipelineConfig, SampleWindow, CONTEXT_LEN, COVARIATE_COLS,
    SCALE_FLOOR, WINDOW_LEN,
};
use crate::linalg::Mat;
use crate::synth::solar::{solar_zenith, NIGHT_ZENITH_DEG};

/// Per-feature standardization statistics, stored with the model artifact so
/// unseen systems can be scored later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub const STATIC_FEATURES: usize = 4;

/// Population z-scores of (exposition, inclination, nominal power,
/// calibration) over the fleet. A zero-variance feature keeps std 1 and
/// contributes a warning instead of an error.
pub fn standardize_static(
    descriptors: &[PVSystemDescriptor],
) -> (StaticStats, Vec<Vec<f64>>, Vec<String>) {
    let raw: Vec<[f64; STATIC_FEATURES]> = descriptors
        .iter()
        .map(|d| [d.exposition_deg, d.inclination_deg, d.nominal_power_w, d.calibration_factor])
        .collect();
    let names = ["exposition", "inclination", "nominal_power", "calibration"];
    let n = raw.len() as f64;
    let mut means = vec![0.0; STATIC_FEATURES];
    let mut stds = vec![0.0; STATIC_FEATURES];
    let mut warnings = Vec::new();
    for f in 0..STATIC_FEATURES {
        let mean: f64 = raw.iter().map(|r| r[f]).sum::<f64>() / n;
        let var: f64 = raw.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
        means[f] = mean;
        let std = var.sqrt();
        if std < 1e-12 {
            warnings.push(format!(
                "static feature '{}' has zero variance across the fleet; keeping std 1",
                names[f]
            ));
            stds[f] = 1.0;
        } else {
            stds[f] = std;
        }
    }
    let stats = StaticStats { means, stds };
    let transformed = raw.iter().map(|r| apply_static_stats(r, &stats)).collect();
    (stats, transformed, warnings)
}

/// Standardizes one descriptor with previously computed fleet statistics.
pub fn standardize_with(desc: &PVSystemDescriptor, stats: &StaticStats) -> Vec<f64> {
    apply_static_stats(
        &[desc.exposition_deg, desc.inclination_deg, desc.nominal_power_w, desc.calibration_factor],
        stats,
    )
}

fn apply_static_stats(raw: &[f64; STATIC_FEATURES], stats: &StaticStats) -> Vec<f64> {
    (0..STATIC_FEATURES).map(|f| (raw[f] - stats.means[f]) / stats.stds[f]).collect()
}

/// Mean absolute context value, the per-window scale. Falls back to 1.0 for
/// (near-)all-zero contexts.
pub fn scale_factor(context_targets: &[f64]) -> f64 {
    let s: f64 =
        context_targets.iter().map(|z| z.abs()).sum::<f64>() / context_targets.len() as f64;
    if s < SCALE_FLOOR {
        1.0
    } else {
        s
    }
}

/// Emits one window start index per local midnight whose three covered days
/// (two context days + the forecast day) are all valid.
///
/// Returned values index the series hour of t₀ − 48h (the first context
/// step); consecutive windows overlap by 48h.
pub fn segment(v: &ValidatedSeries) -> Vec<usize> {
    let mut out = Vec::new();
    for d in 2..v.day_valid.len() {
        if v.day_valid[d] && v.day_valid[d - 1] && v.day_valid[d - 2] {
            out.push(v.day_start_idx[d - 2]);
        }
    }
    out
}

/// Builds the dynamic covariate matrix (72 × 7) for a window: scaled
/// physical forecasts at the three leads, then sin/cos hour-of-day and
/// sin/cos day-of-year, plus the broadcast static features.
pub fn build_covariates(
    series_phys: [&[Option<f64>]; 3],
    window_start_idx: usize,
    start_time: DateTime<Utc>,
    scale: f64,
    system_id: &str,
    static_features: &[f64],
    cfg: &PipelineConfig,
) -> Result<(Mat, Vec<f64>), DataError> {
    let mut m = Mat::zeros(WINDOW_LEN, COVARIATE_COLS);
    let leads = [24u32, 48, 72];
    for t in 0..WINDOW_LEN {
        let row = m.row_mut(t);
        for (li, phys) in series_phys.iter().enumerate() {
            let v = phys[window_start_idx + t].ok_or(DataError::MissingPhysical {
                system_id: system_id.to_string(),
                lead_hours: leads[li],
                step: t,
            })?;
            row[li] = v / scale;
        }
        let ts = start_time + Duration::hours(t as i64 + cfg.utc_offset_hours as i64);
        let hour = ts.hour() as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        row[3] = (two_pi * hour / 24.0).sin();
        row[4] = (two_pi * hour / 24.0).cos();
        let doy = (ts.ordinal() - 1) as f64;
        row[5] = (two_pi * doy / 365.25).sin();
        row[6] = (two_pi * doy / 365.25).cos();
    }
    Ok((m, static_features.to_vec()))
}

/// Assembles a full sample window from a validated series.
pub fn assemble_window(
    v: &ValidatedSeries,
    desc: &PVSystemDescriptor,
    static_features: Vec<f64>,
    system_index: usize,
    start_idx: usize,
    cfg: &PipelineConfig,
) -> Result<SampleWindow, DataError> {
    let s = &v.series;
    let t0 = s.timestamp(start_idx + CONTEXT_LEN);
    let mut targets = Vec::with_capacity(WINDOW_LEN);
    let mut observed = Vec::with_capacity(WINDOW_LEN);
    for t in 0..WINDOW_LEN {
        match s.power_w[start_idx + t] {
            Some(z) => {
                targets.push(z);
                observed.push(true);
            }
            None => {
                targets.push(0.0);
                observed.push(false);
            }
        }
    }
    for (t, &obs) in observed.iter().enumerate().take(CONTEXT_LEN) {
        if !obs {
            return Err(DataError::MissingContext {
                window_id: format!("{}@{}", s.system_id, t0.format("%Y-%m-%d")),
                step: t,
            });
        }
    }
    let scale = scale_factor(&targets[..CONTEXT_LEN]);
    let (covariates, static_features) = build_covariates(
        [&s.phys24_w, &s.phys48_w, &s.phys72_w],
        start_idx,
        s.timestamp(start_idx),
        scale,
        &s.system_id,
        &static_features,
        cfg,
    )?;
    let daylight = (0..WINDOW_LEN)
        .map(|t| {
            solar_zenith(desc.latitude_deg, desc.longitude_deg, s.timestamp(start_idx + t))
                < NIGHT_ZENITH_DEG
        })
        .collect();
    let phys24_raw = (0..WINDOW_LEN)
        .map(|t| s.phys24_w[start_idx + t].unwrap_or(0.0))
        .collect();
    Ok(SampleWindow {
        system_id: s.system_id.clone(),
        system_index,
        t0,
        targets,
        observed,
        covariates,
        static_features,
        scale,
        daylight,
        phys24_raw,
        nominal_power_w: desc.nominal_power_w,
    })
}

#[cfg(test)]
mod tests {
    use super::super::validate::validate_days;
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn scale_is_mean_absolute_value() {
        assert_eq!(scale_factor(&[5.0; 48]), 5.0);
        let mut ctx = vec![0.0; 24];
        ctx.extend(vec![10.0; 24]);
        assert_eq!(scale_factor(&ctx), 5.0);
    }

    #[test]
    fn all_zero_context_falls_back_to_one() {
        assert_eq!(scale_factor(&[0.0; 48]), 1.0);
    }

    fn series_with_valid_days(valid: &[bool]) -> (RawSeriesFixture, ValidatedSeries) {
        let fixture = RawSeriesFixture::new(valid);
        let validated = validate_days(
            &fixture.series,
            &fixture.desc,
            &PipelineConfig::default(),
        )
        .unwrap();
        (fixture, validated)
    }

    struct RawSeriesFixture {
        series: super::super::RawSeries,
        desc: PVSystemDescriptor,
    }

    impl RawSeriesFixture {
        fn new(valid: &[bool]) -> Self {
            let mut power = Vec::new();
            for &ok in valid {
                for h in 0..24 {
                    if ok {
                        let x = (h as f64 - 12.0) / 4.0;
                        power.push(Some(8000.0 * (-x * x).exp()));
                    } else {
                        // poke a 3h hole to invalidate the day
                        power.push(if (10..13).contains(&h) { None } else { Some(100.0) });
                    }
                }
            }
            let n = power.len();
            let series = super::super::RawSeries {
                system_id: "s1".into(),
                start: Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap(),
                power_w: power,
                phys24_w: vec![Some(50.0); n],
                phys48_w: vec![Some(60.0); n],
                phys72_w: vec![Some(70.0); n],
            };
            let desc = PVSystemDescriptor {
                system_id: "s1".into(),
                exposition_deg: 180.0,
                inclination_deg: 30.0,
                nominal_power_w: 10_000.0,
                calibration_factor: 1.0,
                latitude_deg: 49.6,
                longitude_deg: 6.1,
            };
            RawSeriesFixture { series, desc }
        }
    }

    #[test]
    fn five_valid_days_make_three_windows() {
        let (_, v) = series_with_valid_days(&[true; 5]);
        assert_eq!(segment(&v).len(), 3);
    }

    #[test]
    fn two_valid_days_make_no_windows() {
        let (_, v) = series_with_valid_days(&[true, true]);
        assert!(segment(&v).is_empty());
    }

    #[test]
    fn hole_in_day_five_of_ten() {
        let mut valid = [true; 10];
        valid[4] = false; // day 5 (1-based)
        let (_, v) = series_with_valid_days(&valid);
        // window spans (1-3),(2-4),(6-8),(7-9),(8-10)
        assert_eq!(segment(&v).len(), 5);
    }

    #[test]
    fn gap_free_range_yields_d_minus_two() {
        for d in [3usize, 4, 9, 30] {
            let (_, v) = series_with_valid_days(&vec![true; d]);
            assert_eq!(segment(&v).len(), d - 2);
        }
    }

    #[test]
    fn hour_six_time_features() {
        let (f, v) = series_with_valid_days(&[true; 3]);
        let w = assemble_window(&v, &f.desc, vec![0.0; 4], 0, segment(&v)[0],
            &PipelineConfig::default()).unwrap();
        // window starts at local midnight, so step 6 is 06:00
        let row = w.covariates.row(6);
        assert!((row[3] - 1.0).abs() < 1e-12);
        assert!(row[4].abs() < 1e-12);
    }

    #[test]
    fn physical_columns_are_scaled() {
        let (f, v) = series_with_valid_days(&[true; 3]);
        let w = assemble_window(&v, &f.desc, vec![0.0; 4], 0, segment(&v)[0],
            &PipelineConfig::default()).unwrap();
        // phys24 = 50 W everywhere
        let row = w.covariates.row(10);
        assert!((row[0] * w.scale - 50.0).abs() < 1e-9);
        assert!((row[1] * w.scale - 60.0).abs() < 1e-9);
        assert!((row[2] * w.scale - 70.0).abs() < 1e-9);
        // raw copy survives unscaled
        assert_eq!(w.phys24_raw[10], 50.0);
    }

    #[test]
    fn missing_physical_forecast_is_an_error() {
        let (f, v) = series_with_valid_days(&[true; 3]);
        let mut broken = v.clone();
        broken.series.phys48_w[50] = None;
        let err = assemble_window(&broken, &f.desc, vec![0.0; 4], 0, segment(&v)[0],
            &PipelineConfig::default()).unwrap_err();
        match err {
            DataError::MissingPhysical { lead_hours, step, .. } => {
                assert_eq!(lead_hours, 48);
                assert_eq!(step, 50);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nominal_power_standardization_example() {
        let descs: Vec<PVSystemDescriptor> = [10_000.0, 20_000.0, 30_000.0f64]
            .iter()
            .enumerate()
            .map(|(i, &pn)| PVSystemDescriptor {
                system_id: format!("s{i}"),
                exposition_deg: 180.0,
                inclination_deg: 30.0,
                nominal_power_w: pn,
                calibration_factor: 1.0,
                latitude_deg: 49.6,
                longitude_deg: 6.1,
            })
            .collect();
        let (_, feats, warnings) = standardize_static(&descs);
        let pn_feats: Vec<f64> = feats.iter().map(|f| f[2]).collect();
        assert!((pn_feats[0] + 1.224744871391589).abs() < 1e-9);
        assert!(pn_feats[1].abs() < 1e-12);
        assert!((pn_feats[2] - 1.224744871391589).abs() < 1e-9);
        // exposition/inclination/calibration are constant here
        assert_eq!(warnings.len(), 3);
        assert!(feats.iter().all(|f| f[0] == 0.0 && f[1] == 0.0 && f[3] == 0.0));
    }

    #[test]
    fn standardized_features_have_zero_mean_unit_std() {
        let descs: Vec<PVSystemDescriptor> = (0..7)
            .map(|i| PVSystemDescriptor {
                system_id: format!("s{i}"),
                exposition_deg: 120.0 + 17.0 * i as f64,
                inclination_deg: 10.0 + 9.0 * i as f64,
                nominal_power_w: 4000.0 * (i + 1) as f64,
                calibration_factor: 0.8 + 0.05 * i as f64,
                latitude_deg: 49.6,
                longitude_deg: 6.1,
            })
            .collect();
        let (_, feats, warnings) = standardize_static(&descs);
        assert!(warnings.is_empty());
        for f in 0..STATIC_FEATURES {
            let vals: Vec<f64> = feats.iter().map(|r| r[f]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_feature_maps_to_plus_minus_one() {
        let descs: Vec<PVSystemDescriptor> = [0.0, 10.0f64]
            .iter()
            .enumerate()
            .map(|(i, &e)| PVSystemDescriptor {
                system_id: format!("s{i}"),
                exposition_deg: e,
                inclination_deg: 30.0,
                nominal_power_w: 10_000.0,
                calibration_factor: 1.0,
                latitude_deg: 49.6,
                longitude_deg: 6.1,
            })
            .collect();
        let (_, feats, _) = standardize_static(&descs);
        assert!((feats[0][0] + 1.0).abs() < 1e-12);
        assert!((feats[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_never_corrupts_stored_targets() {
        // targets are stored unscaled; the division happens on network input,
        // so the pipeline itself is lossless
        let (f, v) = series_with_valid_days(&[true; 4]);
        for idx in segment(&v) {
            let w = assemble_window(&v, &f.desc, vec![0.0; 4], 0, idx,
                &PipelineConfig::default()).unwrap();
            for (t, &z) in w.targets.iter().enumerate() {
                assert_eq!(z, v.series.power_w[idx + t].unwrap());
                // derived scale/unscale round trip is exact to the last ulp
                let back = (z / w.scale) * w.scale;
                assert!((back - z).abs() <= z.abs() * f64::EPSILON);
            }
        }
    }
}
