//! Site configuration: location, camera intrinsics and sampling settings.

use std::path::Path;

use chrono::FixedOffset;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LensModel;

pub const DEFAULT_SAMPLES: usize = 5000;
pub const DEFAULT_SEED: u64 = 20160901;

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Geographic location with the local clock offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub utc_offset_minutes: i32,
}

impl Location {
    /// Rooftop site in Singapore (1.34 N, 103.68 E, UTC+8) used when no
    /// site file is given.
    pub const DEFAULT: Location = Location {
        latitude_deg: 1.34,
        longitude_deg: 103.68,
        utc_offset_minutes: 480,
    };

    pub fn utc_offset(&self) -> Result<FixedOffset> {
        FixedOffset::east_opt(self.utc_offset_minutes * 60).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "utc offset {} min out of range",
                self.utc_offset_minutes
            ))
        })
    }
}

/// Key-value site description, stored as TOML.
///
/// ```toml
/// latitude_deg = 1.3483
/// longitude_deg = 103.6831
/// utc_offset_minutes = 480
/// focal_scale_px = 1414.2
/// center_x_px = 1000.0
/// center_y_px = 1000.0
/// image_circle_radius_px = 1000.0
/// samples_n = 5000
/// rng_seed = 20160901
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub utc_offset_minutes: i32,
    pub focal_scale_px: f64,
    pub center_x_px: f64,
    pub center_y_px: f64,
    pub image_circle_radius_px: f64,
    #[serde(default = "default_samples")]
    pub samples_n: usize,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

impl SiteConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SiteConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<site>".into(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() as u64 + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("site config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(Error::InvalidParameter(format!(
                "latitude {} outside [-90, 90]",
                self.latitude_deg
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude_deg) {
            return Err(Error::InvalidParameter(format!(
                "longitude {} outside [-180, 180]",
                self.longitude_deg
            )));
        }
        if self.samples_n == 0 {
            return Err(Error::InvalidParameter("samples_n must be at least 1".into()));
        }
        self.utc_offset()?;
        self.lens()?;
        Ok(())
    }

    pub fn lens(&self) -> Result<LensModel> {
        LensModel::new(
            self.focal_scale_px,
            self.center_x_px,
            self.center_y_px,
            self.image_circle_radius_px,
        )
    }

    pub fn location(&self) -> Location {
        Location {
            latitude_deg: self.latitude_deg,
            longitude_deg: self.longitude_deg,
            utc_offset_minutes: self.utc_offset_minutes,
        }
    }

    pub fn utc_offset(&self) -> Result<FixedOffset> {
        self.location().utc_offset()
    }
}
