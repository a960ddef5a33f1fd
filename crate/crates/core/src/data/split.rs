//! Leakage-safe day-grouped train/val/test split.
//!
//! All systems' windows for a calendar day land in one partition. Train days
//! follow a static day-index pattern (i mod 5 ∈ {0,1,2} → 60%), spreading
//! every month across both train and held-out sets; the remaining days are
//! shuffled into val/test halves, re-drawn until the intraday physical
//! baseline nMAE of the two halves agrees within 0.1 percentage points.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, SampleWindow};
use crate::rng::substream_indexed;

/// Balancing tolerance on |nMAE_val − nMAE_test| (fraction, 0.001 = 0.1 pp).
pub const BALANCE_TOLERANCE: f64 = 0.001;
/// Maximum val/test re-draws before giving up.
pub const MAX_BALANCE_RETRIES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// How the accepted val/test cut was found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalancingReport {
    pub val_baseline_nmae: f64,
    pub test_baseline_nmae: f64,
    pub gap: f64,
    pub retries_used: usize,
}

/// Day → partition map, serialized as JSON next to the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<NaiveDate, Partition>,
    pub seed: u64,
    pub balancing: BalancingReport,
}

impl SplitAssignment {
    pub fn partition_of(&self, day: NaiveDate) -> Option<Partition> {
        self.assignment.get(&day).copied()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.assignment.values().filter(|&&p| p == part).count()
    }
}

/// Splits windows by their t₀ calendar day.
///
/// `baseline_nmae` scores a set of windows with the intraday physical
/// forecast (the reference predictor); it is injected so this module stays
/// independent of the metrics implementation.
pub fn split(
    windows: &[SampleWindow],
    utc_offset_hours: i32,
    baseline_nmae: &dyn Fn(&[&SampleWindow]) -> Result<f64, DataError>,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    if windows.is_empty() {
        return Err(DataError::EmptySet("windows to split".into()));
    }
    let mut days: Vec<NaiveDate> = windows.iter().map(|w| w.t0_day(utc_offset_hours)).collect();
    days.sort();
    days.dedup();

    let mut assignment: BTreeMap<NaiveDate, Partition> = BTreeMap::new();
    let mut held_out: Vec<NaiveDate> = Vec::new();
    for (i, day) in days.iter().enumerate() {
        if i % 5 < 3 {
            assignment.insert(*day, Partition::Train);
        } else {
            held_out.push(*day);
        }
    }

    let windows_of = |days: &[NaiveDate]| -> Vec<&SampleWindow> {
        windows
            .iter()
            .filter(|w| days.contains(&w.t0_day(utc_offset_hours)))
            .collect()
    };

    let mut best: Option<(f64, usize, Vec<NaiveDate>, Vec<NaiveDate>, f64, f64)> = None;
    for retry in 0..=MAX_BALANCE_RETRIES {
        let mut shuffled = held_out.clone();
        let mut rng = substream_indexed(seed, "split", retry as u64);
        shuffled.shuffle(&mut rng);
        let half = shuffled.len().div_ceil(2);
        let (val_days, test_days) = shuffled.split_at(half);
        let mut val_days = val_days.to_vec();
        let mut test_days = test_days.to_vec();
        val_days.sort();
        test_days.sort();
        let val_nmae = baseline_nmae(&windows_of(&val_days))?;
        let test_nmae = baseline_nmae(&windows_of(&test_days))?;
        let gap = (val_nmae - test_nmae).abs();
        if best.as_ref().map(|b| gap < b.0).unwrap_or(true) {
            best = Some((gap, retry, val_days, test_days, val_nmae, test_nmae));
        }
        if gap <= BALANCE_TOLERANCE {
            break;
        }
    }
    let (gap, retries_used, val_days, test_days, val_nmae, test_nmae) = best.unwrap();
    if gap > BALANCE_TOLERANCE {
        return Err(DataError::BalancingFailed { best_gap: gap, retries: MAX_BALANCE_RETRIES });
    }
    for d in val_days {
        assignment.insert(d, Partition::Val);
    }
    for d in test_days {
        assignment.insert(d, Partition::Test);
    }
    Ok(SplitAssignment {
        assignment,
        seed,
        balancing: BalancingReport {
            val_baseline_nmae: val_nmae,
            test_baseline_nmae: test_nmae,
            gap,
            retries_used,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CONTEXT_LEN, WINDOW_LEN};
    use crate::linalg::Mat;
    use chrono::{Duration, TimeZone, Utc};

    /// Minimal windows: one per (system, day), with phys24 carrying a
    /// per-day pseudo-random error against the targets.
    fn toy_windows(n_systems: usize, n_days: usize, seed: u64) -> Vec<SampleWindow> {
        let start = Utc.with_ymd_and_hms(2021, 1, 3, 0, 0, 0).unwrap();
        let mut out = Vec::new();
        for d in 0..n_days {
            // i.i.d. per-day baseline error, shared by all systems
            let noise = {
                let mut h = seed ^ (d as u64).wrapping_mul(0x9e3779b97f4a7c15);
                h ^= h >> 33;
                h = h.wrapping_mul(0xff51afd7ed558ccd);
                h ^= h >> 33;
                (h % 1000) as f64 / 1000.0
            };
            for sysi in 0..n_systems {
                let targets = vec![100.0; WINDOW_LEN];
                let phys24_raw: Vec<f64> =
                    (0..WINDOW_LEN).map(|_| 100.0 + 20.0 * noise).collect();
                out.push(SampleWindow {
                    system_id: format!("s{sysi}"),
                    system_index: sysi,
                    t0: start + Duration::days(d as i64),
                    targets,
                    observed: vec![true; WINDOW_LEN],
                    covariates: Mat::zeros(WINDOW_LEN, crate::data::COVARIATE_COLS),
                    static_features: vec![0.0; 4],
                    scale: 100.0,
                    daylight: (0..WINDOW_LEN).map(|t| (8..18).contains(&(t % 24))).collect(),
                    phys24_raw,
                    nominal_power_w: 1000.0,
                });
            }
        }
        out
    }

    fn toy_baseline(ws: &[&SampleWindow]) -> Result<f64, DataError> {
        if ws.is_empty() {
            return Err(DataError::EmptySet("baseline windows".into()));
        }
        let mut acc = 0.0;
        for w in ws {
            let mut err = 0.0;
            let mut n = 0usize;
            for t in CONTEXT_LEN..WINDOW_LEN {
                if w.daylight[t] {
                    err += (w.phys24_raw[t] - w.targets[t]).abs();
                    n += 1;
                }
            }
            acc += err / n as f64 / w.nominal_power_w;
        }
        Ok(acc / ws.len() as f64)
    }

    #[test]
    fn hundred_days_split_60_20_20() {
        let ws = toy_windows(3, 100, 7);
        let s = split(&ws, 0, &toy_baseline, 7).unwrap();
        assert_eq!(s.count(Partition::Train), 60);
        assert_eq!(s.count(Partition::Val), 20);
        assert_eq!(s.count(Partition::Test), 20);
    }

    #[test]
    fn no_day_in_two_partitions() {
        let ws = toy_windows(4, 60, 3);
        let s = split(&ws, 0, &toy_baseline, 3).unwrap();
        // the map structure makes cross-partition days impossible; check that
        // every window day is covered exactly once
        for w in &ws {
            assert!(s.partition_of(w.t0_day(0)).is_some());
        }
        assert_eq!(s.assignment.len(), 60);
    }

    #[test]
    fn balancing_converges_on_iid_errors() {
        let ws = toy_windows(2, 80, 11);
        let s = split(&ws, 0, &toy_baseline, 11).unwrap();
        assert!(s.balancing.gap <= BALANCE_TOLERANCE);
        assert!(s.balancing.retries_used <= MAX_BALANCE_RETRIES);
    }

    #[test]
    fn deterministic_given_seed() {
        let ws = toy_windows(2, 50, 5);
        let a = split(&ws, 0, &toy_baseline, 5).unwrap();
        let b = split(&ws, 0, &toy_baseline, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn mod5_pattern_covers_every_month() {
        let ws = toy_windows(1, 90, 2);
        let s = split(&ws, 0, &toy_baseline, 2).unwrap();
        use chrono::Datelike;
        let mut months: std::collections::BTreeMap<u32, (usize, bool, bool)> = Default::default();
        for (day, part) in &s.assignment {
            let e = months.entry(day.month()).or_default();
            e.0 += 1;
            match part {
                Partition::Train => e.1 = true,
                _ => e.2 = true,
            }
        }
        // any month that spans a full mod-5 period must see both classes
        for (m, (days, train, held)) in months {
            if days >= 5 {
                assert!(train && held, "month {m} lacks coverage");
            }
        }
    }

    #[test]
    fn empty_windows_error() {
        assert!(split(&[], 0, &toy_baseline, 1).is_err());
    }
}
