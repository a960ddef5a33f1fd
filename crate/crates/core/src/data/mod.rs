//! Data pipeline: cleans per-system hourly series, segments them into 72h
//! windows (48h context + 24h forecast), attaches covariates and scaling,
//! and produces leakage-safe day-grouped train/val/test splits.

mod io;
mod split;
mod validate;
mod window;

pub use io::{read_data_csv, read_descriptors_csv, write_data_csv, write_descriptors_csv};
pub use split::{split, BalancingReport, Partition, SplitAssignment};
pub use validate::{validate_days, DayValidity, ValidatedSeries};
pub use window::{build_covariates, scale_factor, segment, standardize_static, standardize_with, StaticStats};

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

/// Steps in a full sample window (48h context + 24h forecast).
pub const WINDOW_LEN: usize = 72;
/// Steps in the context interval.
pub const CONTEXT_LEN: usize = 48;
/// Steps in the forecasting interval.
pub const HORIZON: usize = 24;

/// Number of dynamic covariate columns (3 physical leads + 4 time features).
pub const COVARIATE_COLS: usize = 7;
/// Column index of the first physical-forecast column.
pub const PHYS_COL: usize = 0;
/// Column index of the first time-feature column.
pub const TIME_COL: usize = 3;

/// Values above this multiple of nominal power flag a day as aberrant.
pub const ABERRANT_FACTOR: f64 = 1.5;
/// Length of an identical-nonzero daylight run that flags a day as blocked.
pub const BLOCKED_RUN_LEN: usize = 6;
/// Longest missing run that linear interpolation is allowed to fill.
pub const MAX_INTERP_RUN: usize = 2;
/// Context scales below this fall back to 1.0.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Pipeline-wide settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fixed offset added to UTC to obtain local time (no DST arithmetic).
    pub utc_offset_hours: i32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { utc_offset_hours: 0 }
    }
}

/// One PV system's hourly series with physical-model forecasts at the three
/// issue leads. Missing measurements are explicit `None` markers; the hourly
/// grid itself has no gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSeries {
    pub system_id: String,
    /// First hour of the series (UTC, hour-aligned).
    pub start: DateTime<Utc>,
    pub power_w: Vec<Option<f64>>,
    pub phys24_w: Vec<Option<f64>>,
    pub phys48_w: Vec<Option<f64>>,
    pub phys72_w: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.power_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_w.is_empty()
    }

    pub fn timestamp(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::hours(idx as i64)
    }

    pub fn check_consistency(&self) -> Result<(), DataError> {
        if self.start.minute() != 0 || self.start.second() != 0 {
            return Err(DataError::Format(format!(
                "series {} does not start on an hour boundary",
                self.system_id
            )));
        }
        let n = self.power_w.len();
        if self.phys24_w.len() != n || self.phys48_w.len() != n || self.phys72_w.len() != n {
            return Err(DataError::Format(format!(
                "series {} has inconsistent column lengths",
                self.system_id
            )));
        }
        Ok(())
    }
}

/// Static description of one PV system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVSystemDescriptor {
    pub system_id: String,
    pub exposition_deg: f64,
    pub inclination_deg: f64,
    pub nominal_power_w: f64,
    pub calibration_factor: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl PVSystemDescriptor {
    pub fn check(&self) -> Result<(), DataError> {
        if !(self.nominal_power_w > 0.0) {
            return Err(DataError::Format(format!(
                "system {}: nominal power must be > 0",
                self.system_id
            )));
        }
        if !(0.0..=90.0).contains(&self.inclination_deg) {
            return Err(DataError::Format(format!(
                "system {}: inclination must lie in [0, 90]",
                self.system_id
            )));
        }
        Ok(())
    }
}

/// One 72h training/inference unit.
///
/// Targets are stored unscaled (Watts); the network divides by `scale` on
/// input. Physical covariate columns inside `covariates` are already divided
/// by `scale`, while `phys24_raw` keeps the unscaled intraday forecast for
/// baseline scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleWindow {
    pub system_id: String,
    /// Row of this system in the model vocabulary / embedding table.
    pub system_index: usize,
    /// Forecast reference time: local midnight, stored as UTC.
    pub t0: DateTime<Utc>,
    pub targets: Vec<f64>,
    pub observed: Vec<bool>,
    /// 72 × `COVARIATE_COLS`: scaled phys24/phys48/phys72, then sin/cos hour
    /// of day and sin/cos day of year.
    pub covariates: Mat,
    /// Standardized (exposition, inclination, nominal power, calibration).
    pub static_features: Vec<f64>,
    pub scale: f64,
    /// Solar zenith < 85° per step.
    pub daylight: Vec<bool>,
    /// Unscaled intraday physical forecast, all 72 steps.
    pub phys24_raw: Vec<f64>,
    pub nominal_power_w: f64,
}

impl SampleWindow {
    pub fn window_id(&self) -> String {
        format!("{}@{}", self.system_id, self.t0.format("%Y-%m-%d"))
    }

    /// Local calendar day of the forecast interval start.
    pub fn t0_day(&self, utc_offset_hours: i32) -> NaiveDate {
        (self.t0 + Duration::hours(utc_offset_hours as i64)).date_naive()
    }

    pub fn context_observed(&self) -> bool {
        self.observed[..CONTEXT_LEN].iter().all(|&o| o)
    }

    pub fn forecast_observed(&self) -> bool {
        self.observed[CONTEXT_LEN..].iter().all(|&o| o)
    }
}

/// Per-system validity summary kept for auditability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemValidity {
    pub system_id: String,
    pub total_days: usize,
    pub valid_days: usize,
    pub windows: usize,
}

/// Windows plus the fleet-level artifacts needed to rebuild inputs later.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub windows: Vec<SampleWindow>,
    pub static_stats: StaticStats,
    /// Sorted system ids; `SampleWindow::system_index` points into this.
    pub vocabulary: Vec<String>,
    pub validity: Vec<SystemValidity>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Format(String),
    MissingPhysical { system_id: String, lead_hours: u32, step: usize },
    MissingContext { window_id: String, step: usize },
    UnknownSystem(String),
    EmptySet(String),
    BalancingFailed { best_gap: f64, retries: usize },
    Io(String),
}

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataError::Format(m) => write!(f, "format error: {m}"),
            DataError::MissingPhysical { system_id, lead_hours, step } => write!(
                f,
                "system {system_id}: missing {lead_hours}h physical forecast at window step {step}"
            ),
            DataError::MissingContext { window_id, step } => {
                write!(f, "window {window_id}: unobserved context target at step {step}")
            }
            DataError::UnknownSystem(id) => write!(f, "system {id} has no descriptor"),
            DataError::EmptySet(what) => write!(f, "empty set: {what}"),
            DataError::BalancingFailed { best_gap, retries } => write!(
                f,
                "val/test balancing failed after {retries} retries; best gap {:.4} pp",
                best_gap * 100.0
            ),
            DataError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for DataError {}

/// Builds all sample windows for a fleet.
///
/// Per system: clean + flag days, segment into 72h windows, scale, attach
/// covariates and the standardized static features computed over the whole
/// descriptor fleet.
pub fn build_dataset(
    series: &[RawSeries],
    descriptors: &[PVSystemDescriptor],
    cfg: &PipelineConfig,
) -> Result<Dataset, DataError> {
    if descriptors.is_empty() {
        return Err(DataError::EmptySet("descriptors".into()));
    }
    let mut vocabulary: Vec<String> = descriptors.iter().map(|d| d.system_id.clone()).collect();
    vocabulary.sort();
    vocabulary.dedup();

    let (static_stats, standardized, mut warnings) = standardize_static(descriptors);
    let by_id: std::collections::HashMap<&str, (&PVSystemDescriptor, &Vec<f64>)> = descriptors
        .iter()
        .zip(&standardized)
        .map(|(d, s)| (d.system_id.as_str(), (d, s)))
        .collect();

    let mut windows = Vec::new();
    let mut validity = Vec::new();
    for s in series {
        s.check_consistency()?;
        let (desc, feats) = by_id
            .get(s.system_id.as_str())
            .copied()
            .ok_or_else(|| DataError::UnknownSystem(s.system_id.clone()))?;
        let system_index = vocabulary.binary_search(&s.system_id).unwrap();
        let validated = validate_days(s, desc, cfg)?;
        let skeletons = segment(&validated);
        let mut count = 0;
        for t0_idx in &skeletons {
            windows.push(window::assemble_window(
                &validated,
                desc,
                feats.clone(),
                system_index,
                *t0_idx,
                cfg,
            )?);
            count += 1;
        }
        validity.push(SystemValidity {
            system_id: s.system_id.clone(),
            total_days: validated.day_valid.len(),
            valid_days: validated.day_valid.iter().filter(|&&v| v).count(),
            windows: count,
        });
        if count == 0 {
            warnings.push(format!("system {} produced no windows", s.system_id));
        }
    }
    // deterministic global order: by system, then time
    windows.sort_by(|a, b| (&a.system_id, a.t0).cmp(&(&b.system_id, b.t0)));
    Ok(Dataset { windows, static_stats, vocabulary, validity, warnings })
}

/// Returns the windows of one split partition.
pub fn filter_partition<'a>(
    windows: &'a [SampleWindow],
    assignment: &SplitAssignment,
    part: Partition,
    utc_offset_hours: i32,
) -> Vec<&'a SampleWindow> {
    windows
        .iter()
        .filter(|w| assignment.partition_of(w.t0_day(utc_offset_hours)) == Some(part))
        .collect()
}
