//! Synthetic fisheye sky images with known luminance and sun position.
//!
//! A rendered pixel inverts the camera equation used by the luminance stage:
//! linear value `radiance * e_t * S / f_s^2`, forward gamma, optional
//! Gaussian noise, rounding and clamping to `0..=255`. Pixels outside the
//! image circle are black and the sun disk is saturated.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::clearsky;
use crate::error::{Error, Result};
use crate::geometry::{pixel_to_ray, solar_position, sun_direction_from_geometry, LensModel, SolarGeometry, UnitVector};
use crate::ingest::{CaptureMeta, IrradianceSample, IrradianceSeries, PartialMeta, Sidecar, SkyImage};
use crate::luminance::engamma;
use crate::regress::PolyModel;
use crate::site::Location;

pub const DEFAULT_IMAGE_SIZE: u32 = 256;
pub const DEFAULT_SUN_DISK_DEG: f64 = 1.5;
/// Linear pixel level targeted by the simulated auto-exposure.
pub const TARGET_LINEAR_LEVEL: f64 = 60.0;
pub const DEFAULT_ISO: f64 = 100.0;
pub const DEFAULT_F_NUMBER: f64 = 2.8;

/// Everything needed to draw one frame.
pub struct SceneSpec<F> {
    /// Relative sky radiance along a direction, non-negative.
    pub radiance: F,
    pub sun_direction: UnitVector,
    pub sun_disk_radius_deg: f64,
    pub meta: CaptureMeta,
    pub lens: LensModel,
    pub width: u32,
    pub height: u32,
    /// Standard deviation of additive pixel noise, in 8-bit code values.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn render_scene<F: Fn(&UnitVector) -> f64>(spec: &SceneSpec<F>) -> Result<SkyImage> {
    if spec.sun_direction.z < 0.0 {
        return Err(Error::BelowHorizon { z: spec.sun_direction.z });
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma {}", spec.noise_sigma)));
    }
    let gain = spec.meta.exposure_gain();
    let cos_disk = spec.sun_disk_radius_deg.to_radians().cos();
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma checked above");
    let mut rng = noise_rng(spec.noise_seed, 0);

    SkyImage::from_fn(spec.width, spec.height, spec.meta, |u, v| {
        let Ok(ray) = pixel_to_ray(f64::from(u), f64::from(v), &spec.lens) else {
            return [0, 0, 0];
        };
        if ray.dot(&spec.sun_direction) >= cos_disk {
            return [255, 255, 255];
        }
        let linear = (spec.radiance)(&ray).max(0.0) * gain;
        let mut value = engamma(linear);
        if spec.noise_sigma > 0.0 {
            value += noise.sample(&mut rng);
        }
        let code = value.round().clamp(0.0, 255.0) as u8;
        [code, code, code]
    })
}

/// Shape of the simulated day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileShape {
    /// Fixed true luminance regardless of sun height.
    Constant { luminance: f64 },
    /// Uniform sky radiance fixed over the day, so the true luminance follows
    /// `radiance * cos(zenith)`; `peak_luminance` is reached at the lowest
    /// zenith of the sampled times.
    ClearSky { peak_luminance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayProfile {
    pub date: NaiveDate,
    pub location: Location,
    pub start: NaiveTime,
    pub end: NaiveTime,
    pub shape: ProfileShape,
}

impl DayProfile {
    /// 08:00 to 18:00 local with the given shape.
    pub fn daytime(date: NaiveDate, location: Location, shape: ProfileShape) -> Self {
        Self {
            date,
            location,
            start: NaiveTime::from_hms_opt(8, 0, 0).expect("valid time"),
            end: NaiveTime::from_hms_opt(18, 0, 0).expect("valid time"),
            shape,
        }
    }

    /// `n` evenly spaced instants from start to end inclusive, whole seconds.
    pub fn timestamps(&self, n: usize) -> Result<Vec<DateTime<Utc>>> {
        if self.start >= self.end {
            return Err(Error::InvalidWindow {
                start: self.start.to_string(),
                end: self.end.to_string(),
            });
        }
        let offset = self.location.utc_offset()?;
        let t0 = offset
            .from_local_datetime(&self.date.and_time(self.start))
            .single()
            .ok_or_else(|| Error::InvalidParameter("ambiguous local start time".into()))?
            .with_timezone(&Utc);
        let span = (self.end - self.start).num_seconds();
        Ok((0..n)
            .map(|i| {
                let s = if n > 1 { span * i as i64 / (n as i64 - 1) } else { 0 };
                t0 + Duration::seconds(s)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub profile: DayProfile,
    pub n_images: usize,
    pub seed: u64,
    /// Gaussian noise on the ground-truth irradiance, W/m².
    pub irradiance_noise_sigma: f64,
    /// Gaussian noise on pixel code values.
    pub pixel_noise_sigma: f64,
    pub image_size: u32,
    pub sun_disk_radius_deg: f64,
}

impl DatasetConfig {
    pub fn new(profile: DayProfile, n_images: usize, seed: u64) -> Self {
        Self {
            profile,
            n_images,
            seed,
            irradiance_noise_sigma: 0.0,
            pixel_noise_sigma: 0.0,
            image_size: DEFAULT_IMAGE_SIZE,
            sun_disk_radius_deg: DEFAULT_SUN_DISK_DEG,
        }
    }

    pub fn lens(&self) -> Result<LensModel> {
        let c = (f64::from(self.image_size) - 1.0) / 2.0;
        LensModel::horizon_fit(c, c, c - 0.5)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub images: Vec<SkyImage>,
    pub geometry: Vec<SolarGeometry>,
    /// Cosine-weighted luminance used to generate the irradiance.
    pub true_luminance: Vec<f64>,
    /// Reference cubic of the true luminance, plus noise, clamped at zero.
    pub truth: IrradianceSeries,
    pub lens: LensModel,
}

/// Renders a day of uniform-sky images and the matching irradiance series.
///
/// Exposure time is chosen per image so the linear sky level sits near
/// [`TARGET_LINEAR_LEVEL`], which keeps the sky unsaturated at any radiance.
pub fn render_dataset(config: &DatasetConfig) -> Result<SyntheticDataset> {
    if config.n_images == 0 {
        return Err(Error::EmptyInput);
    }
    if !(config.irradiance_noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter("irradiance noise must be non-negative".into()));
    }
    let lens = config.lens()?;
    let loc = config.profile.location;
    let times = config.profile.timestamps(config.n_images)?;
    let geometry: Vec<SolarGeometry> = times
        .iter()
        .map(|t| solar_position(*t, loc.latitude_deg, loc.longitude_deg))
        .collect();
    if let Some(g) = geometry.iter().find(|g| g.zenith_deg >= 90.0) {
        return Err(Error::SunBelowHorizon { zenith_deg: g.zenith_deg });
    }

    let radiance: Vec<f64> = match config.profile.shape {
        ProfileShape::Constant { luminance } => geometry
            .iter()
            .map(|g| luminance / g.zenith_deg.to_radians().cos())
            .collect(),
        ProfileShape::ClearSky { peak_luminance } => {
            let min_zenith = geometry.iter().map(|g| g.zenith_deg).fold(f64::INFINITY, f64::min);
            vec![peak_luminance / min_zenith.to_radians().cos(); geometry.len()]
        }
    };
    if radiance.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter("profile luminance must be positive".into()));
    }
    let true_luminance: Vec<f64> = radiance
        .iter()
        .zip(&geometry)
        .map(|(r, g)| r * g.zenith_deg.to_radians().cos())
        .collect();

    let images = (0..config.n_images)
        .into_par_iter()
        .map(|i| {
            let exposure = TARGET_LINEAR_LEVEL * DEFAULT_F_NUMBER * DEFAULT_F_NUMBER / (radiance[i] * DEFAULT_ISO);
            let meta = CaptureMeta::new(times[i], exposure, DEFAULT_ISO, DEFAULT_F_NUMBER)?;
            let rho = radiance[i];
            let spec = SceneSpec {
                radiance: move |_: &UnitVector| rho,
                sun_direction: sun_direction_from_geometry(&geometry[i], geometry[i].azimuth_deg)?,
                sun_disk_radius_deg: config.sun_disk_radius_deg,
                meta,
                lens,
                width: config.image_size,
                height: config.image_size,
                noise_sigma: config.pixel_noise_sigma,
                noise_seed: config.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            };
            render_scene(&spec)
        })
        .collect::<Result<Vec<_>>>()?;

    let cubic = PolyModel::reference_cubic();
    let noise = Normal::new(0.0, config.irradiance_noise_sigma)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = noise_rng(config.seed, u64::MAX);
    let samples = times
        .iter()
        .zip(&true_luminance)
        .map(|(t, l)| {
            let mut s = cubic.eval(*l);
            if config.irradiance_noise_sigma > 0.0 {
                s += noise.sample(&mut rng);
            }
            IrradianceSample::ghi_only(*t, s.max(0.0))
        })
        .collect();

    Ok(SyntheticDataset {
        images,
        geometry,
        true_luminance,
        truth: IrradianceSeries::new(samples)?,
        lens,
    })
}

/// Clear-sky shaped profile for `date` at `location`: see [`ProfileShape::ClearSky`].
pub fn clear_sky_day(date: NaiveDate, location: Location, peak_luminance: f64) -> DayProfile {
    DayProfile::daytime(date, location, ProfileShape::ClearSky { peak_luminance })
}

pub fn image_file_name(index: usize) -> String {
    format!("img_{index:04}.png")
}

/// Writes `img_NNNN.png` files with embedded metadata, `sidecar.csv` and
/// `weather.csv` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &SyntheticDataset) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut sidecar = Sidecar::default();
    for (i, image) in dataset.images.iter().enumerate() {
        let name = image_file_name(i);
        image.save_png(dir.join(&name))?;
        sidecar.insert(name, PartialMeta::from(image.meta));
    }
    sidecar.save(dir.join("sidecar.csv"))?;
    dataset.truth.save(dir.join("weather.csv"))?;
    Ok(())
}

/// Clear-sky irradiance at each rendered instant, for comparison plots.
pub fn clear_sky_reference(dataset: &SyntheticDataset) -> Vec<f64> {
    dataset
        .geometry
        .iter()
        .map(|g| clearsky::ClearSkyConstants::default().ghi_clamped(g.zenith_deg, g.eccentricity))
        .collect()
}
