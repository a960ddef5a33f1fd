//! Solar position and clear-sky PV power.
//!
//! Declination/hour-angle geometry with the equation of time omitted: the
//! goal is forecast-quality realism for synthetic fleets and night masking,
//! not astronomical accuracy (errors stay well under 1 degree of zenith
//! equivalent per omitted term at these latitudes).

use chrono::{DateTime, Datelike, Timelike, Utc};

use super::super::data::PVSystemDescriptor;

/// Zenith angle above which a time step counts as night.
pub const NIGHT_ZENITH_DEG: f64 = 85.0;

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Solar declination in degrees for a day of year (1-based).
fn declination_deg(day_of_year: u32) -> f64 {
    23.44 * (2.0 * std::f64::consts::PI * (284.0 + day_of_year as f64) / 365.0).sin()
}

/// Hour angle in degrees from longitude-corrected local solar time.
fn hour_angle_deg(timestamp: DateTime<Utc>, longitude_deg: f64) -> f64 {
    let utc_hours = timestamp.hour() as f64
        + timestamp.minute() as f64 / 60.0
        + timestamp.second() as f64 / 3600.0;
    let solar_time = utc_hours + longitude_deg / 15.0;
    15.0 * (solar_time - 12.0)
}

/// Solar zenith angle in degrees, in [0, 180].
///
/// cos z = sin φ sin δ + cos φ cos δ cos ω.
pub fn solar_zenith(latitude_deg: f64, longitude_deg: f64, timestamp: DateTime<Utc>) -> f64 {
    let phi = latitude_deg * DEG;
    let delta = declination_deg(timestamp.ordinal()) * DEG;
    let omega = hour_angle_deg(timestamp, longitude_deg) * DEG;
    let cos_z = phi.sin() * delta.sin() + phi.cos() * delta.cos() * omega.cos();
    cos_z.clamp(-1.0, 1.0).acos() / DEG
}

/// Solar azimuth in degrees clockwise from north (180 = south).
pub fn solar_azimuth(latitude_deg: f64, longitude_deg: f64, timestamp: DateTime<Utc>) -> f64 {
    let phi = latitude_deg * DEG;
    let delta = declination_deg(timestamp.ordinal()) * DEG;
    let omega = hour_angle_deg(timestamp, longitude_deg) * DEG;
    let cos_z = phi.sin() * delta.sin() + phi.cos() * delta.cos() * omega.cos();
    let sin_z = (1.0 - cos_z * cos_z).sqrt();
    if sin_z < 1e-12 {
        return 180.0; // sun at the zenith; azimuth is arbitrary
    }
    let cos_a = ((delta.sin() * phi.cos() - delta.cos() * phi.sin() * omega.cos()) / sin_z)
        .clamp(-1.0, 1.0);
    let a = cos_a.acos() / DEG;
    if omega > 0.0 {
        360.0 - a
    } else {
        a
    }
}

/// Cosine of the incidence angle between the sun and the panel normal.
///
/// cos θᵢ = cos z cos β + sin z sin β cos(A_sun − A_panel), with β the panel
/// inclination from horizontal and A_panel the exposition.
pub fn incidence_cosine(
    zenith_deg: f64,
    azimuth_deg: f64,
    exposition_deg: f64,
    inclination_deg: f64,
) -> f64 {
    let z = zenith_deg * DEG;
    let beta = inclination_deg * DEG;
    z.cos() * beta.cos() + z.sin() * beta.sin() * ((azimuth_deg - exposition_deg) * DEG).cos()
}

/// Deterministic clear-sky PV power in Watts.
///
/// P = calibration · P_n · max(0, cos θᵢ) · max(0, cos z)^0.3, zero once the
/// sun is below the horizon. The cos^0.3 factor is a crude air-mass
/// attenuation stand-in.
pub fn clear_sky_power(desc: &PVSystemDescriptor, timestamp: DateTime<Utc>) -> f64 {
    let z = solar_zenith(desc.latitude_deg, desc.longitude_deg, timestamp);
    if z >= 90.0 {
        return 0.0;
    }
    let a = solar_azimuth(desc.latitude_deg, desc.longitude_deg, timestamp);
    let cos_inc = incidence_cosine(z, a, desc.exposition_deg, desc.inclination_deg).max(0.0);
    let atmos = (z * DEG).cos().max(0.0).powf(0.3);
    desc.calibration_factor * desc.nominal_power_w * cos_inc * atmos
}
