//! Temperature-based daily irradiance estimators used as baselines.
//!
//! All four produce a daily mean irradiance in W/m² from the daily mean
//! extraterrestrial irradiance `Ra` and weather summaries:
//!
//! * Hargreaves-Samani: `k_rs * sqrt(dT) * Ra`
//! * Bristow-Campbell: `Ra * A * (1 - exp(-B * dT^C))`
//! * Donatelli-Campbell: `Ra * tau_cs * (1 - exp(-b * f(Tavg) * dT^2 * f(Tmin)))`,
//!   `f(Tavg) = 0.017 * exp(exp(-0.053 * Tavg))`, `f(Tmin) = exp(Tmin / Tnc)`
//! * Hunt: `a0 * sqrt(dT) * Ra + a1 * Tmax + a2 * P + a3 * P^2 + a4`
//!
//! Negative estimates are clamped to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkKind {
    HargreavesSamani,
    DonatelliCampbell,
    BristowCampbell,
    Hunt,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::HargreavesSamani,
        BenchmarkKind::DonatelliCampbell,
        BenchmarkKind::BristowCampbell,
        BenchmarkKind::Hunt,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            BenchmarkKind::HargreavesSamani => "hs",
            BenchmarkKind::DonatelliCampbell => "dc",
            BenchmarkKind::BristowCampbell => "bc",
            BenchmarkKind::Hunt => "hunt",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.short_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown benchmark model `{s}`")))
    }
}

/// Daily weather summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInputs {
    /// Daily mean extraterrestrial irradiance on a horizontal plane, W/m².
    pub extraterrestrial: f64,
    pub tmax_c: f64,
    pub tmin_c: f64,
    pub rain_mm: Option<f64>,
}

impl BenchmarkInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.extraterrestrial >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "extraterrestrial irradiance {} must be non-negative",
                self.extraterrestrial
            )));
        }
        if !(self.tmax_c >= self.tmin_c) {
            return Err(Error::InvalidParameter(format!(
                "tmax {} below tmin {}",
                self.tmax_c, self.tmin_c
            )));
        }
        if self.rain_mm.is_some_and(|r| !(r >= 0.0)) {
            return Err(Error::InvalidParameter("rain must be non-negative".into()));
        }
        Ok(())
    }

    fn range(&self) -> f64 {
        self.tmax_c - self.tmin_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    pub hs_k_rs: f64,
    pub bc_a: f64,
    pub bc_b: f64,
    pub bc_c: f64,
    pub dc_tau_cs: f64,
    pub dc_b: f64,
    pub dc_t_nc: f64,
    /// Hunt coefficients; `a1` in W/m²/°C, `a2` in W/m²/mm, `a3` in W/m²/mm², `a4` in W/m².
    pub hunt_a: [f64; 5],
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            hs_k_rs: 0.16,
            bc_a: 0.7,
            bc_b: 0.004,
            bc_c: 2.4,
            dc_tau_cs: 0.75,
            dc_b: 0.1,
            dc_t_nc: 4.0,
            hunt_a: [0.16, 0.0, -1.0, 0.0, 0.0],
        }
    }
}

pub fn benchmark_estimate(kind: BenchmarkKind, inputs: &BenchmarkInputs, params: &BenchmarkParams) -> Result<f64> {
    inputs.validate()?;
    let ra = inputs.extraterrestrial;
    let dt = inputs.range();
    let s = match kind {
        BenchmarkKind::HargreavesSamani => params.hs_k_rs * dt.sqrt() * ra,
        BenchmarkKind::BristowCampbell => ra * params.bc_a * (1.0 - (-params.bc_b * dt.powf(params.bc_c)).exp()),
        BenchmarkKind::DonatelliCampbell => {
            let t_avg = 0.5 * (inputs.tmax_c + inputs.tmin_c);
            let f_avg = 0.017 * (-0.053 * t_avg).exp().exp();
            let f_min = (inputs.tmin_c / params.dc_t_nc).exp();
            ra * params.dc_tau_cs * (1.0 - (-params.dc_b * f_avg * dt * dt * f_min).exp())
        }
        BenchmarkKind::Hunt => {
            let p = inputs.rain_mm.ok_or(Error::MissingInput("rain_mm"))?;
            let [a0, a1, a2, a3, a4] = params.hunt_a;
            a0 * dt.sqrt() * ra + a1 * inputs.tmax_c + a2 * p + a3 * p * p + a4
        }
    };
    Ok(s.max(0.0))
}

/// Spreads a daily mean over the day following `profile` (typically the
/// clear-sky GHI at each instant), preserving the daily mean of `profile`'s
/// sampling grid. A profile that is zero everywhere yields zeros.
pub fn disaggregate(daily_mean: f64, profile: &[f64], profile_mean: f64) -> Vec<f64> {
    if profile_mean <= 0.0 {
        return vec![0.0; profile.len()];
    }
    profile.iter().map(|g| daily_mean * g / profile_mean).collect()
}
