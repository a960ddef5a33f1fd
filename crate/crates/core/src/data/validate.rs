//! Day-level cleaning and validity flags.
//!
//! A calendar day is invalid iff it overlaps a missing run longer than two
//! hours, contains a blocked-constant daylight run, contains a value above
//! 1.5 × nominal power, or keeps missing values that interpolation could not
//! fill (series edges). Negative readings are clipped to zero first and
//! isolated missing runs (≤ 2h) are filled by linear interpolation.

use chrono::{Duration, NaiveDate, Timelike};

use super::{DataError, PVSystemDescriptor, PipelineConfig, RawSeries, ABERRANT_FACTOR,
    BLOCKED_RUN_LEN, MAX_INTERP_RUN};
use crate::synth::solar::{solar_zenith, NIGHT_ZENITH_DEG};

/// Per-day validity verdicts for one system.
#[derive(Debug, Clone)]
pub struct DayValidity {
    pub day: NaiveDate,
    pub valid: bool,
}

/// A cleaned series together with its day flags and day index layout.
#[derive(Debug, Clone)]
pub struct ValidatedSeries {
    /// Interpolated, clipped copy of the input series.
    pub series: RawSeries,
    /// One flag per complete local day frame.
    pub day_valid: Vec<bool>,
    pub days: Vec<NaiveDate>,
    /// Index into the series of each day's local midnight.
    pub day_start_idx: Vec<usize>,
    pub utc_offset_hours: i32,
}

/// Cleans one series and computes per-day validity flags.
pub fn validate_days(
    series: &RawSeries,
    desc: &PVSystemDescriptor,
    cfg: &PipelineConfig,
) -> Result<ValidatedSeries, DataError> {
    series.check_consistency()?;
    let n = series.len();
    let mut power = series.power_w.clone();

    // clip negatives before any rule fires
    for v in power.iter_mut().flatten() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    // missing runs: remember long runs, interpolate short interior ones
    let mut in_long_run = vec![false; n];
    let mut i = 0;
    while i < n {
        if power[i].is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && power[i].is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        let left = run_start.checked_sub(1).and_then(|j| power[j]);
        let right = power.get(i).copied().flatten();
        if run_len <= MAX_INTERP_RUN {
            if let (Some(a), Some(b)) = (left, right) {
                for (k, slot) in power[run_start..i].iter_mut().enumerate() {
                    let frac = (k + 1) as f64 / (run_len + 1) as f64;
                    *slot = Some(a + (b - a) * frac);
                }
            }
        } else {
            for f in &mut in_long_run[run_start..i] {
                *f = true;
            }
        }
    }

    // day frames: complete 24h blocks aligned to local midnight
    let offset = Duration::hours(cfg.utc_offset_hours as i64);
    let local_start = series.start + offset;
    let lead_in = ((24 - local_start.hour()) % 24) as usize;
    let mut days = Vec::new();
    let mut day_start_idx = Vec::new();
    let mut day_valid = Vec::new();

    // daylight flags for the blocked-constant rule
    let daylight: Vec<bool> = (0..n)
        .map(|i| {
            solar_zenith(desc.latitude_deg, desc.longitude_deg, series.timestamp(i))
                < NIGHT_ZENITH_DEG
        })
        .collect();
    let blocked = blocked_constant_steps(&power, &daylight);

    let mut start = lead_in;
    while start + 24 <= n {
        let day = (series.timestamp(start) + offset).date_naive();
        let slice = start..start + 24;
        let mut valid = true;
        for i in slice.clone() {
            match power[i] {
                None => valid = false,                       // unfillable or long gap
                Some(v) if v > ABERRANT_FACTOR * desc.nominal_power_w => valid = false,
                _ => {}
            }
            if in_long_run[i] || blocked[i] {
                valid = false;
            }
        }
        days.push(day);
        day_start_idx.push(start);
        day_valid.push(valid);
        start += 24;
    }

    let mut cleaned = series.clone();
    cleaned.power_w = power;
    Ok(ValidatedSeries { series: cleaned, day_valid, days, day_start_idx, utc_offset_hours: cfg.utc_offset_hours })
}

/// Marks every step belonging to a run of ≥ `BLOCKED_RUN_LEN` consecutive
/// identical nonzero daylight values.
fn blocked_constant_steps(power: &[Option<f64>], daylight: &[bool]) -> Vec<bool> {
    let n = power.len();
    let mut flags = vec![false; n];
    let mut i = 0;
    while i < n {
        let v = match power[i] {
            Some(v) if v != 0.0 && daylight[i] => v,
            _ => {
                i += 1;
                continue;
            }
        };
        let run_start = i;
        while i < n && daylight[i] && power[i] == Some(v) {
            i += 1;
        }
        if i - run_start >= BLOCKED_RUN_LEN {
            for f in &mut flags[run_start..i] {
                *f = true;
            }
        }
    }
    flags
}
