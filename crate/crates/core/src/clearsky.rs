//! Clear-sky global horizontal irradiance for an equatorial site.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, solar_position};
use crate::ingest::{IrradianceSample, IrradianceSeries};
use crate::site::Location;

/// `G_c = scale * E0 * I_sc * cos(a)^cos_exponent * exp(-decay * (90 - a))`, `a` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearSkyConstants {
    pub scale: f64,
    /// W/m².
    pub solar_constant: f64,
    pub cos_exponent: f64,
    /// Per degree of elevation.
    pub decay: f64,
}

impl Default for ClearSkyConstants {
    fn default() -> Self {
        Self {
            scale: 0.8277,
            solar_constant: 1366.1,
            cos_exponent: 1.3644,
            decay: 0.0013,
        }
    }
}

impl ClearSkyConstants {
    pub fn ghi(&self, zenith_deg: f64, eccentricity: f64) -> Result<f64> {
        if !(0.0..=90.0).contains(&zenith_deg) {
            return Err(Error::InvalidZenith(zenith_deg));
        }
        if zenith_deg == 90.0 {
            return Ok(0.0);
        }
        let cos_z = zenith_deg.to_radians().cos().max(0.0);
        Ok(self.scale
            * eccentricity
            * self.solar_constant
            * cos_z.powf(self.cos_exponent)
            * (-self.decay * (90.0 - zenith_deg)).exp())
    }

    /// Like [`ClearSkyConstants::ghi`] but zero for the sun at or below the horizon.
    pub fn ghi_clamped(&self, zenith_deg: f64, eccentricity: f64) -> f64 {
        if zenith_deg >= 90.0 {
            0.0
        } else {
            self.ghi(zenith_deg.max(0.0), eccentricity).unwrap_or(0.0)
        }
    }
}

/// Earth-sun distance correction from the day angle (radians).
pub fn eccentricity(day_angle: f64) -> f64 {
    1.00011
        + 0.034221 * day_angle.cos()
        + 0.001280 * day_angle.sin()
        + 0.000719 * (2.0 * day_angle).cos()
        + 0.000077 * (2.0 * day_angle).sin()
}

pub fn clear_sky_ghi(zenith_deg: f64, eccentricity: f64) -> Result<f64> {
    ClearSkyConstants::default().ghi(zenith_deg, eccentricity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearSkyPoint {
    pub timestamp: chrono::DateTime<Utc>,
    pub zenith_deg: f64,
    pub ghi: f64,
}

/// Clear-sky GHI over the local calendar day `date` (00:00 to 24:00 local,
/// end exclusive) every `step_s` seconds. Night samples are zero.
pub fn clear_sky_profile(
    date: NaiveDate,
    location: &Location,
    step_s: u32,
    constants: &ClearSkyConstants,
) -> Result<Vec<ClearSkyPoint>> {
    if step_s == 0 {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let offset = location.utc_offset()?;
    let start = offset
        .from_local_datetime(&date.and_time(NaiveTime::MIN))
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc);
    let n = 86_400 / step_s + u32::from(86_400 % step_s != 0);
    Ok((0..n)
        .map(|i| {
            let t = start + Duration::seconds(i64::from(i) * i64::from(step_s));
            let g = solar_position(t, location.latitude_deg, location.longitude_deg);
            ClearSkyPoint {
                timestamp: t,
                zenith_deg: g.zenith_deg,
                ghi: constants.ghi_clamped(g.zenith_deg, g.eccentricity),
            }
        })
        .collect())
}

pub fn clear_sky_curve(date: NaiveDate, location: &Location, step_s: u32) -> Result<IrradianceSeries> {
    let profile = clear_sky_profile(date, location, step_s, &ClearSkyConstants::default())?;
    IrradianceSeries::new(
        profile
            .into_iter()
            .map(|p| IrradianceSample::ghi_only(p.timestamp, p.ghi))
            .collect(),
    )
}

/// Clear-sky GHI at one instant; zero at night.
pub fn clear_sky_at(t: chrono::DateTime<Utc>, location: &Location, constants: &ClearSkyConstants) -> f64 {
    let g = solar_position(t, location.latitude_deg, location.longitude_deg);
    constants.ghi_clamped(g.zenith_deg, g.eccentricity)
}

/// `100 * (measured - clear) / clear`, undefined when `clear` is not positive.
pub fn deviation_percent(measured: f64, clear: f64) -> Option<f64> {
    (clear > 0.0).then(|| 100.0 * (measured - clear) / clear)
}

/// Solar declination (radians) from the day angle, Spencer's series.
pub fn declination(day_angle: f64) -> f64 {
    let g = day_angle;
    0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin()
}

/// Daily mean extraterrestrial irradiance on a horizontal plane, W/m².
pub fn daily_extraterrestrial(date: NaiveDate, latitude_deg: f64, solar_constant: f64) -> f64 {
    let gamma = geometry::day_angle(date.ordinal()).expect("ordinal within 1..=366");
    let e0 = eccentricity(gamma);
    let decl = declination(gamma);
    let lat = latitude_deg.to_radians();
    let sunset = (-lat.tan() * decl.tan()).clamp(-1.0, 1.0).acos();
    (solar_constant / PI)
        * e0
        * (sunset * lat.sin() * decl.sin() + lat.cos() * decl.cos() * sunset.sin())
}
