//! CSV input/output for series and descriptor files.
//!
//! Data CSV: one row per (timestamp, system), header
//! `timestamp_utc,system_id,power_w,phys24_w,phys48_w,phys72_w`; an empty
//! field is a missing value. Descriptor CSV: one row per system, header
//! `system_id,exposition_deg,inclination_deg,nominal_power_w,calibration_factor,latitude,longitude`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};

use super::{DataError, PVSystemDescriptor, RawSeries};

fn io_err(e: impl std::fmt::Display) -> DataError {
    DataError::Io(e.to_string())
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>, DataError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| DataError::Format(format!("bad timestamp '{s}': {e}")))
}

fn parse_opt_f64(field: &str, name: &str) -> Result<Option<f64>, DataError> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|e| DataError::Format(format!("bad {name} value '{t}': {e}")))
}

/// Reads per-system hourly series from the data CSV. Rows may arrive in any
/// order; the hourly grid is rebuilt per system and interior holes become
/// missing markers.
pub fn read_data_csv(path: &Path) -> Result<Vec<RawSeries>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(io_err)?;
    let headers = rdr.headers().map_err(io_err)?.clone();
    let expected = ["timestamp_utc", "system_id", "power_w", "phys24_w", "phys48_w", "phys72_w"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DataError::Format(format!(
            "unexpected data CSV header {:?}, want {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }

    type Row = (Option<f64>, Option<f64>, Option<f64>, Option<f64>);
    let mut by_system: BTreeMap<String, BTreeMap<DateTime<Utc>, Row>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        let ts = parse_ts(&rec[0])?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(DataError::Format(format!("timestamp {ts} is not hour-aligned")));
        }
        let row = (
            parse_opt_f64(&rec[2], "power_w")?,
            parse_opt_f64(&rec[3], "phys24_w")?,
            parse_opt_f64(&rec[4], "phys48_w")?,
            parse_opt_f64(&rec[5], "phys72_w")?,
        );
        by_system.entry(rec[1].to_string()).or_default().insert(ts, row);
    }

    let mut out = Vec::new();
    for (system_id, rows) in by_system {
        let (&start, _) = rows.iter().next().unwrap();
        let (&end, _) = rows.iter().next_back().unwrap();
        let n = ((end - start).num_hours() + 1) as usize;
        let mut s = RawSeries {
            system_id,
            start,
            power_w: vec![None; n],
            phys24_w: vec![None; n],
            phys48_w: vec![None; n],
            phys72_w: vec![None; n],
        };
        for (ts, (p, f24, f48, f72)) in rows {
            let idx = (ts - start).num_hours() as usize;
            s.power_w[idx] = p;
            s.phys24_w[idx] = f24;
            s.phys48_w[idx] = f48;
            s.phys72_w[idx] = f72;
        }
        out.push(s);
    }
    Ok(out)
}

/// Writes series as the data CSV, one row per hour per system.
pub fn write_data_csv(path: &Path, series: &[RawSeries]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_path(path).map_err(io_err)?;
    wtr.write_record(["timestamp_utc", "system_id", "power_w", "phys24_w", "phys48_w", "phys72_w"])
        .map_err(io_err)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for s in series {
        for i in 0..s.len() {
            let ts = s.start + Duration::hours(i as i64);
            wtr.write_record([
                ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                s.system_id.clone(),
                fmt(s.power_w[i]),
                fmt(s.phys24_w[i]),
                fmt(s.phys48_w[i]),
                fmt(s.phys72_w[i]),
            ])
            .map_err(io_err)?;
        }
    }
    wtr.flush().map_err(io_err)?;
    Ok(())
}

/// Reads the descriptor CSV.
pub fn read_descriptors_csv(path: &Path) -> Result<Vec<PVSystemDescriptor>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(io_err)?;
    let headers = rdr.headers().map_err(io_err)?.clone();
    let expected = [
        "system_id",
        "exposition_deg",
        "inclination_deg",
        "nominal_power_w",
        "calibration_factor",
        "latitude",
        "longitude",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DataError::Format(format!(
            "unexpected descriptor CSV header {:?}, want {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        let req = |i: usize, name: &str| -> Result<f64, DataError> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| DataError::Format(format!("bad {name} '{}': {e}", &rec[i])))
        };
        let d = PVSystemDescriptor {
            system_id: rec[0].to_string(),
            exposition_deg: req(1, "exposition_deg")?,
            inclination_deg: req(2, "inclination_deg")?,
            nominal_power_w: req(3, "nominal_power_w")?,
            calibration_factor: req(4, "calibration_factor")?,
            latitude_deg: req(5, "latitude")?,
            longitude_deg: req(6, "longitude")?,
        };
        d.check()?;
        out.push(d);
    }
    Ok(out)
}

/// Writes the descriptor CSV.
pub fn write_descriptors_csv(path: &Path, descs: &[PVSystemDescriptor]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_path(path).map_err(io_err)?;
    wtr.write_record([
        "system_id",
        "exposition_deg",
        "inclination_deg",
        "nominal_power_w",
        "calibration_factor",
        "latitude",
        "longitude",
    ])
    .map_err(io_err)?;
    for d in descs {
        wtr.write_record([
            d.system_id.clone(),
            format!("{}", d.exposition_deg),
            format!("{}", d.inclination_deg),
            format!("{}", d.nominal_power_w),
            format!("{}", d.calibration_factor),
            format!("{}", d.latitude_deg),
            format!("{}", d.longitude_deg),
        ])
        .map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)?;
    Ok(())
}
