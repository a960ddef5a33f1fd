//! Synthetic PV fleet: a stand-in for proprietary SCADA + NWP feeds.
//!
//! One shared regional clearness AR(1) path drives every system (plus small
//! per-system jitter), reproducing the high inter-system correlation that
//! motivates day-grouped splits. Emulated physical-model forecasts apply
//! lead-dependent clearness noise to the same clear-sky curve — and ignore
//! injected shading entirely, which is what makes local-effect correction
//! measurable downstream.

pub mod solar;

use chrono::{Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PVSystemDescriptor, RawSeries};
use crate::rng::{substream, substream_indexed};
pub use solar::{clear_sky_power, incidence_cosine, solar_azimuth, solar_zenith, NIGHT_ZENITH_DEG};

/// A recurring partial obstruction of one system during a local-hour range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadingEffect {
    pub system_index: usize,
    /// Local hours [start, end) during which output is attenuated.
    pub start_hour: u32,
    pub end_hour: u32,
    /// Multiplier in (0, 1]; 1 disables the effect.
    pub attenuation: f64,
}

/// Missing-data process: a contiguous block of whole-day outages hitting a
/// random subset of systems, plus i.i.d. missing hours everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingDataParams {
    pub outage_system_fraction: f64,
    pub outage_days: usize,
    pub iid_missing_prob: f64,
}

impl Default for MissingDataParams {
    fn default() -> Self {
        MissingDataParams { outage_system_fraction: 0.25, outage_days: 21, iid_missing_prob: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub n_systems: usize,
    pub latitude_range_deg: (f64, f64),
    pub longitude_range_deg: (f64, f64),
    /// Sampled log-uniformly: nominal powers span two orders of magnitude.
    pub nominal_power_range_w: (f64, f64),
    pub exposition_range_deg: (f64, f64),
    pub inclination_range_deg: (f64, f64),
    pub calibration_range: (f64, f64),
    pub shading: Vec<ShadingEffect>,
    pub missing: MissingDataParams,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec::default_for(12)
    }
}

impl FleetSpec {
    /// Desk-scale defaults with two shaded systems placed relative to the
    /// fleet size (none when the fleet is too small to spare them).
    pub fn default_for(n_systems: usize) -> Self {
        let shading = if n_systems >= 3 {
            let mut s = vec![ShadingEffect {
                system_index: n_systems / 6,
                start_hour: 7,
                end_hour: 11,
                attenuation: 0.4,
            }];
            let second = (2 * n_systems) / 3;
            if second != s[0].system_index {
                s.push(ShadingEffect {
                    system_index: second,
                    start_hour: 13,
                    end_hour: 17,
                    attenuation: 0.5,
                });
            }
            s
        } else {
            Vec::new()
        };
        FleetSpec {
            n_systems,
            latitude_range_deg: (49.55, 49.65),
            longitude_range_deg: (6.05, 6.15),
            nominal_power_range_w: (1_400.0, 247_000.0),
            exposition_range_deg: (150.0, 210.0),
            inclination_range_deg: (15.0, 45.0),
            calibration_range: (0.85, 1.05),
            shading,
            missing: MissingDataParams::default(),
            seed: 0,
        }
    }
}

/// Regional sky and forecast-error process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    /// AR(1) coefficient of the hourly clearness index, in [0, 1).
    pub ar_coeff: f64,
    pub innovation_std: f64,
    /// Clearness stays inside these bounds.
    pub clearness_bounds: (f64, f64),
    /// Clearness-error std of the emulated physical forecast per lead
    /// (24h, 48h, 72h); must be increasing.
    pub lead_error_stds: [f64; 3],
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            ar_coeff: 0.95,
            innovation_std: 0.06,
            clearness_bounds: (0.05, 1.0),
            lead_error_stds: [0.08, 0.13, 0.18],
        }
    }
}

/// Ground truth of everything the generator injected; written as JSON so
/// downstream checks can verify local-effect correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectsLog {
    pub shading: Vec<ShadingRecord>,
    pub outage_system_ids: Vec<String>,
    pub outage_start: NaiveDate,
    pub outage_days: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadingRecord {
    pub system_id: String,
    pub start_hour: u32,
    pub end_hour: u32,
    pub attenuation: f64,
}

#[derive(Debug, Clone)]
pub struct FleetData {
    pub series: Vec<RawSeries>,
    pub descriptors: Vec<PVSystemDescriptor>,
    pub effects: EffectsLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Config(String),
}

impl std::fmt::Display for SynthError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SynthError::Config(m) => write!(f, "fleet spec error: {m}"),
        }
    }
}

impl std::error::Error for SynthError {}

fn validate_spec(spec: &FleetSpec, weather: &WeatherParams, n_days: usize) -> Result<(), SynthError> {
    if spec.n_systems == 0 {
        return Err(SynthError::Config("fleet must contain at least one system".into()));
    }
    if n_days < 30 {
        return Err(SynthError::Config(format!("date range must cover >= 30 days, got {n_days}")));
    }
    for s in &spec.shading {
        if !(s.attenuation > 0.0 && s.attenuation <= 1.0) {
            return Err(SynthError::Config(format!(
                "shading attenuation {} outside (0, 1]",
                s.attenuation
            )));
        }
        if s.system_index >= spec.n_systems {
            return Err(SynthError::Config(format!(
                "shading system index {} out of range",
                s.system_index
            )));
        }
    }
    if !(weather.ar_coeff >= 0.0 && weather.ar_coeff < 1.0) {
        return Err(SynthError::Config(format!("AR coefficient {} outside [0, 1)", weather.ar_coeff)));
    }
    let (lo, hi) = weather.clearness_bounds;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(SynthError::Config("clearness bounds must satisfy 0 <= lo <= hi <= 1".into()));
    }
    let [a, b, c] = weather.lead_error_stds;
    if !(a <= b && b <= c) {
        return Err(SynthError::Config("lead error stds must be non-decreasing".into()));
    }
    Ok(())
}

/// Generates a fleet of hourly series with descriptors and an effects log.
pub fn generate_fleet(
    spec: &FleetSpec,
    weather: &WeatherParams,
    start_date: NaiveDate,
    n_days: usize,
) -> Result<FleetData, SynthError> {
    validate_spec(spec, weather, n_days)?;
    let n_hours = n_days * 24;
    let start = Utc
        .from_utc_datetime(&start_date.and_hms_opt(0, 0, 0).unwrap());

    let descriptors = sample_descriptors(spec);

    // shared regional clearness path
    let (k_lo, k_hi) = weather.clearness_bounds;
    let k_mean = 0.5 * (k_lo + k_hi);
    let mut sky = Vec::with_capacity(n_hours);
    {
        let mut rng = substream(spec.seed, "fleet-sky");
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut k = k_mean;
        for _ in 0..n_hours {
            k = k_mean
                + weather.ar_coeff * (k - k_mean)
                + weather.innovation_std * noise.sample(&mut rng);
            k = k.clamp(k_lo, k_hi);
            sky.push(k);
        }
    }

    // shared regional forecast-error paths, one per lead, 3h-smoothed
    let lead_khat: Vec<Vec<f64>> = (0..3)
        .map(|lead| {
            let sigma = weather.lead_error_stds[lead];
            let mut rng = substream_indexed(spec.seed, "fleet-lead-error", lead as u64);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let raw: Vec<f64> = (0..n_hours).map(|_| sigma * noise.sample(&mut rng)).collect();
            (0..n_hours)
                .map(|t| {
                    // 3h moving average, rescaled to keep the requested std
                    let lo = t.saturating_sub(1);
                    let hi = (t + 2).min(n_hours);
                    let mean: f64 = raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                    let e = mean * 3f64.sqrt();
                    (sky[t] + e).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();

    // outage block: random subset of systems, contiguous block in the spring
    // third of the range
    let (outage_systems, outage_start_day) = {
        let mut rng = substream(spec.seed, "fleet-missing");
        let n_out = (spec.missing.outage_system_fraction * spec.n_systems as f64).round() as usize;
        let mut idx: Vec<usize> = (0..spec.n_systems).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let mut chosen: Vec<usize> = idx.into_iter().take(n_out).collect();
        chosen.sort_unstable();
        (chosen, n_days / 3 + rng.gen_range(0..=(n_days / 18).max(1)))
    };
    let outage_end_day = (outage_start_day + spec.missing.outage_days).min(n_days);

    let mut series = Vec::with_capacity(spec.n_systems);
    for (i, desc) in descriptors.iter().enumerate() {
        let mut rng = substream_indexed(spec.seed, "fleet-system", i as u64);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let shading: Vec<&ShadingEffect> =
            spec.shading.iter().filter(|s| s.system_index == i).collect();

        let mut power_w = Vec::with_capacity(n_hours);
        let mut phys = [Vec::with_capacity(n_hours), Vec::with_capacity(n_hours),
            Vec::with_capacity(n_hours)];
        for t in 0..n_hours {
            let ts = start + Duration::hours(t as i64);
            let cs = clear_sky_power(desc, ts);
            // per-system clearness jitter tied to the regional innovation scale
            let k_sys =
                (sky[t] + 0.15 * weather.innovation_std * noise.sample(&mut rng)).clamp(k_lo, k_hi);
            let hour = ts.hour();
            let shade: f64 = shading
                .iter()
                .filter(|s| (s.start_hour..s.end_hour).contains(&hour))
                .map(|s| s.attenuation)
                .product();
            let obs = cs * k_sys * shade;
            // physical forecasts see descriptors + regional sky only: no
            // shading, no per-system jitter
            for lead in 0..3 {
                phys[lead].push(Some(cs * lead_khat[lead][t]));
            }
            // missing data: outage block + i.i.d. holes
            let day = t / 24;
            let in_outage = outage_systems.binary_search(&i).is_ok()
                && (outage_start_day..outage_end_day).contains(&day);
            let iid_hole = spec.missing.iid_missing_prob > 0.0
                && rng.gen_range(0.0..1.0) < spec.missing.iid_missing_prob;
            power_w.push(if in_outage || iid_hole { None } else { Some(obs) });
        }
        let [phys24_w, phys48_w, phys72_w] = phys;
        series.push(RawSeries {
            system_id: desc.system_id.clone(),
            start,
            power_w,
            phys24_w,
            phys48_w,
            phys72_w,
        });
    }

    let effects = EffectsLog {
        shading: spec
            .shading
            .iter()
            .map(|s| ShadingRecord {
                system_id: descriptors[s.system_index].system_id.clone(),
                start_hour: s.start_hour,
                end_hour: s.end_hour,
                attenuation: s.attenuation,
            })
            .collect(),
        outage_system_ids: outage_systems
            .iter()
            .map(|&i| descriptors[i].system_id.clone())
            .collect(),
        outage_start: start_date + chrono::Days::new(outage_start_day as u64),
        outage_days: outage_end_day - outage_start_day,
        seed: spec.seed,
    };

    Ok(FleetData { series, descriptors, effects })
}

fn sample_descriptors(spec: &FleetSpec) -> Vec<PVSystemDescriptor> {
    let mut rng = substream(spec.seed, "fleet-descriptors");
    let uniform = |rng: &mut rand_chacha::ChaCha12Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    (0..spec.n_systems)
        .map(|i| {
            let (p_lo, p_hi) = spec.nominal_power_range_w;
            let log_p = uniform(&mut rng, (p_lo.ln(), p_hi.ln()));
            PVSystemDescriptor {
                system_id: format!("pv{i:03}"),
                exposition_deg: uniform(&mut rng, spec.exposition_range_deg),
                inclination_deg: uniform(&mut rng, spec.inclination_range_deg),
                nominal_power_w: log_p.exp(),
                calibration_factor: uniform(&mut rng, spec.calibration_range),
                latitude_deg: uniform(&mut rng, spec.latitude_range_deg),
                longitude_deg: uniform(&mut rng, spec.longitude_range_deg),
            }
        })
        .collect()
}

/// Daylight-masked nMAE of one forecast column against observations; used by
/// the generator's own property tests and the effects-log checks.
pub fn forecast_nmae(series: &RawSeries, desc: &PVSystemDescriptor, lead: usize) -> f64 {
    let phys = match lead {
        0 => &series.phys24_w,
        1 => &series.phys48_w,
        _ => &series.phys72_w,
    };
    let mut acc = 0.0;
    let mut n = 0usize;
    for t in 0..series.len() {
        let ts = series.timestamp(t);
        if solar_zenith(desc.latitude_deg, desc.longitude_deg, ts) >= NIGHT_ZENITH_DEG {
            continue;
        }
        if let (Some(obs), Some(f)) = (series.power_w[t], phys[t]) {
            acc += (f - obs).abs();
            n += 1;
        }
    }
    acc / n as f64 / desc.nominal_power_w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
    }

    fn quiet_spec() -> FleetSpec {
        FleetSpec {
            n_systems: 4,
            shading: vec![],
            missing: MissingDataParams {
                outage_system_fraction: 0.0,
                outage_days: 0,
                iid_missing_prob: 0.0,
            },
            seed: 42,
            ..FleetSpec::default()
        }
    }

    #[test]
    fn noiseless_sky_makes_observations_equal_forecasts() {
        let weather = WeatherParams {
            ar_coeff: 0.9,
            innovation_std: 0.0,
            clearness_bounds: (1.0, 1.0),
            lead_error_stds: [0.0, 0.0, 0.0],
        };
        let fleet = generate_fleet(&quiet_spec(), &weather, start(), 40).unwrap();
        for s in &fleet.series {
            for t in 0..s.len() {
                let obs = s.power_w[t].unwrap();
                assert_eq!(Some(obs), s.phys24_w[t]);
                assert_eq!(Some(obs), s.phys48_w[t]);
                assert_eq!(Some(obs), s.phys72_w[t]);
            }
        }
    }

    #[test]
    fn shaded_system_overpredicted_by_physical_model() {
        let weather = WeatherParams {
            ar_coeff: 0.9,
            innovation_std: 0.0,
            clearness_bounds: (1.0, 1.0),
            lead_error_stds: [0.0, 0.0, 0.0],
        };
        let mut spec = quiet_spec();
        spec.shading =
            vec![ShadingEffect { system_index: 1, start_hour: 7, end_hour: 11, attenuation: 0.4 }];
        let fleet = generate_fleet(&spec, &weather, start(), 40).unwrap();
        let s = &fleet.series[1];
        let mut checked = 0;
        for t in 0..s.len() {
            let hour = s.timestamp(t).hour();
            let obs = s.power_w[t].unwrap();
            let f = s.phys24_w[t].unwrap();
            if (7..11).contains(&hour) && obs > 0.0 {
                assert!((f / obs - 1.0 / 0.4).abs() < 1e-9, "hour {hour}: {f} vs {obs}");
                checked += 1;
            } else if obs > 0.0 {
                assert!((f - obs).abs() < 1e-9);
            }
        }
        assert!(checked > 20);
        assert_eq!(fleet.effects.shading.len(), 1);
        assert_eq!(fleet.effects.shading[0].system_id, fleet.descriptors[1].system_id);
    }

    #[test]
    fn power_bounded_and_nonnegative() {
        let fleet =
            generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 60).unwrap();
        for (s, d) in fleet.series.iter().zip(&fleet.descriptors) {
            for v in s.power_w.iter().flatten() {
                assert!(*v >= 0.0);
                assert!(*v <= d.calibration_factor * d.nominal_power_w * 1.05);
            }
        }
    }

    #[test]
    fn lead_error_ordering() {
        let fleet =
            generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 90).unwrap();
        let mut n24 = 0.0;
        let mut n48 = 0.0;
        let mut n72 = 0.0;
        for (s, d) in fleet.series.iter().zip(&fleet.descriptors) {
            n24 += forecast_nmae(s, d, 0);
            n48 += forecast_nmae(s, d, 1);
            n72 += forecast_nmae(s, d, 2);
        }
        assert!(n24 < n48 && n48 < n72, "nMAE ordering violated: {n24} {n48} {n72}");
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 45)
            .unwrap();
        let b = generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 45)
            .unwrap();
        for (x, y) in a.series.iter().zip(&b.series) {
            assert_eq!(x.power_w, y.power_w);
            assert_eq!(x.phys24_w, y.phys24_w);
        }
        assert_eq!(a.descriptors, b.descriptors);
    }

    #[test]
    fn different_seed_changes_data() {
        let mut spec2 = FleetSpec::default();
        spec2.seed = 1;
        let a = generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 45)
            .unwrap();
        let b = generate_fleet(&spec2, &WeatherParams::default(), start(), 45).unwrap();
        assert_ne!(a.series[0].power_w, b.series[0].power_w);
    }

    #[test]
    fn regional_correlation_is_high() {
        let spec = FleetSpec {
            n_systems: 6,
            shading: vec![],
            missing: MissingDataParams {
                outage_system_fraction: 0.0,
                outage_days: 0,
                iid_missing_prob: 0.0,
            },
            ..FleetSpec::default()
        };
        let fleet = generate_fleet(&spec, &WeatherParams::default(), start(), 45).unwrap();
        let mut corrs = Vec::new();
        for day in 0..45 {
            for i in 0..spec.n_systems {
                for j in (i + 1)..spec.n_systems {
                    let (a, b) = (&fleet.series[i], &fleet.series[j]);
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for h in 0..24 {
                        let t = day * 24 + h;
                        let ts = a.timestamp(t);
                        let di = &fleet.descriptors[i];
                        if solar_zenith(di.latitude_deg, di.longitude_deg, ts) < NIGHT_ZENITH_DEG {
                            xs.push(a.power_w[t].unwrap());
                            ys.push(b.power_w[t].unwrap());
                        }
                    }
                    if xs.len() >= 4 {
                        corrs.push(pearson(&xs, &ys));
                    }
                }
            }
        }
        corrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = corrs[corrs.len() / 2];
        assert!(median > 0.9, "median inter-system correlation {median}");
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx).powi(2);
            syy += (b - my).powi(2);
        }
        sxy / (sxx.sqrt() * syy.sqrt())
    }

    #[test]
    fn shading_inflates_baseline_error() {
        let fleet =
            generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 90).unwrap();
        let nmae: Vec<f64> = fleet
            .series
            .iter()
            .zip(&fleet.descriptors)
            .map(|(s, d)| forecast_nmae(s, d, 0))
            .collect();
        let mut sorted = nmae.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        for rec in &fleet.effects.shading {
            let idx =
                fleet.descriptors.iter().position(|d| d.system_id == rec.system_id).unwrap();
            assert!(
                nmae[idx] > median,
                "shaded {} nMAE {} not above median {median}",
                rec.system_id,
                nmae[idx]
            );
        }
    }

    #[test]
    fn outages_and_iid_holes_are_injected() {
        let fleet =
            generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 60).unwrap();
        assert_eq!(fleet.effects.outage_system_ids.len(), 3); // 25% of 12
        let missing_total: usize = fleet
            .series
            .iter()
            .map(|s| s.power_w.iter().filter(|v| v.is_none()).count())
            .sum();
        assert!(missing_total > 3 * 24 * 15, "missing hours {missing_total}");
        // phys forecasts never go missing
        for s in &fleet.series {
            assert!(s.phys24_w.iter().all(|v| v.is_some()));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = FleetSpec::default();
        spec.shading[0].attenuation = 0.0;
        assert!(generate_fleet(&spec, &WeatherParams::default(), start(), 60).is_err());
        assert!(generate_fleet(&FleetSpec::default(), &WeatherParams::default(), start(), 10)
            .is_err());
        let mut w = WeatherParams::default();
        w.lead_error_stds = [0.2, 0.1, 0.3];
        assert!(generate_fleet(&FleetSpec::default(), &w, start(), 60).is_err());
    }
}
