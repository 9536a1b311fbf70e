//! Relative luminance of a sky image from cosine-weighted pixel samples.

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_to_sun, sample_rng, sample_sun_pixels, LensModel, SolarGeometry};
use crate::ingest::{format_timestamp, parse_timestamp, CaptureMeta, SkyImage};
use crate::site::DEFAULT_SAMPLES;
use crate::sundetect::{sun_with_fallback, SunSource, DEFAULT_SUN_THRESHOLD};

pub const GAMMA: f64 = 2.2;

pub const RECORD_COLUMNS: [&str; 7] = ["timestamp", "N", "Lr", "L", "zenith_deg", "sun_source", "sample_count"];

/// Rec. 709 / SMPTE RP 177 luma weights.
pub fn pixel_luminance(r: f64, g: f64, b: f64) -> f64 {
    0.2126 * r + 0.7152 * g + 0.0722 * b
}

/// Undoes display gamma on the 0..255 scale: `255 * (y / 255)^2.2`.
pub fn degamma(y: f64) -> f64 {
    255.0 * (y.clamp(0.0, 255.0) / 255.0).powf(GAMMA)
}

/// Forward display gamma, the inverse of [`degamma`].
pub fn engamma(y: f64) -> f64 {
    255.0 * (y.clamp(0.0, 255.0) / 255.0).powf(1.0 / GAMMA)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinearly interpolated RGB at a sub-pixel position. Coordinates are
/// clamped to the raster.
pub fn bilinear_rgb(image: &SkyImage, u: f64, v: f64) -> [f64; 3] {
    let max_u = f64::from(image.width() - 1);
    let max_v = f64::from(image.height() - 1);
    let u = u.clamp(0.0, max_u);
    let v = v.clamp(0.0, max_v);
    let u0 = u.floor();
    let v0 = v.floor();
    let (fu, fv) = (u - u0, v - v0);
    let (u0, v0) = (u0 as u32, v0 as u32);
    let u1 = (u0 + 1).min(image.width() - 1);
    let v1 = (v0 + 1).min(image.height() - 1);
    let (p00, p10, p01, p11) = (
        image.pixel(u0, v0),
        image.pixel(u1, v0),
        image.pixel(u0, v1),
        image.pixel(u1, v1),
    );
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = lerp(f64::from(p00[c]), f64::from(p10[c]), fu);
        let bottom = lerp(f64::from(p01[c]), f64::from(p11[c]), fu);
        *o = lerp(top, bottom, fv);
    }
    out
}

/// Mean linearised luminance over the sample positions (the quantity `N`).
pub fn mean_sampled_luminance(image: &SkyImage, samples: &[(f64, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    // running mean is exact for constant inputs
    let mut mean = 0.0;
    for (k, &(u, v)) in samples.iter().enumerate() {
        let [r, g, b] = bilinear_rgb(image, u, v);
        let y = degamma(pixel_luminance(r, g, b));
        if k == 0 {
            mean = y;
        } else {
            mean += (y - mean) / (k + 1) as f64;
        }
    }
    Ok(mean)
}

/// `N * f^2 / (e_t * S)`, with the calibration constant taken as 1.
pub fn relative_luminance(mean_pixel: f64, meta: &CaptureMeta) -> f64 {
    mean_pixel * (meta.f_number * meta.f_number) / (meta.exposure_time * meta.iso)
}

/// `L_r * cos(zenith)`.
pub fn weighted_luminance(relative: f64, zenith_deg: f64) -> Result<f64> {
    if !(0.0..=90.0).contains(&zenith_deg) {
        return Err(Error::InvalidZenith(zenith_deg));
    }
    if zenith_deg == 90.0 {
        return Ok(0.0);
    }
    Ok(relative * zenith_deg.to_radians().cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub samples_n: usize,
    pub seed: u64,
    /// Per-image random stream; use the image index within the corpus.
    pub stream: u64,
    pub sun_threshold: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            samples_n: DEFAULT_SAMPLES,
            seed: crate::site::DEFAULT_SEED,
            stream: 0,
            sun_threshold: DEFAULT_SUN_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceRecord {
    pub timestamp: DateTime<Utc>,
    /// Mean degamma'd pixel luminance, 0..255.
    pub mean_pixel_luminance: f64,
    pub relative_luminance: f64,
    /// Relative luminance weighted by the cosine of the solar zenith angle.
    pub weighted_luminance: f64,
    pub zenith_deg: f64,
    pub sun_source: SunSource,
    pub sample_count: usize,
}

/// Sun location, sampling, luminance and normalisation for one image.
pub fn image_luminance_pipeline(
    image: &SkyImage,
    lens: &LensModel,
    geom: &SolarGeometry,
    config: &PipelineConfig,
) -> Result<LuminanceRecord> {
    let sun = sun_with_fallback(image, lens, geom, geom.azimuth_deg, config.sun_threshold)?;
    let rotation = rotation_to_sun(&sun.direction);
    let mut rng = sample_rng(config.seed, config.stream);
    let pixels = sample_sun_pixels(
        &mut rng,
        config.samples_n,
        &rotation,
        lens,
        image.width(),
        image.height(),
    )?;
    let mean = mean_sampled_luminance(image, &pixels)?;
    let relative = relative_luminance(mean, &image.meta);
    Ok(LuminanceRecord {
        timestamp: image.meta.timestamp,
        mean_pixel_luminance: mean,
        relative_luminance: relative,
        weighted_luminance: weighted_luminance(relative, geom.zenith_deg)?,
        zenith_deg: geom.zenith_deg,
        sun_source: sun.source,
        sample_count: pixels.len(),
    })
}

pub fn write_records<W: Write>(w: W, records: &[LuminanceRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RECORD_COLUMNS)?;
    for r in records {
        wtr.write_record([
            format_timestamp(&r.timestamp),
            r.mean_pixel_luminance.to_string(),
            r.relative_luminance.to_string(),
            r.weighted_luminance.to_string(),
            r.zenith_deg.to_string(),
            r.sun_source.as_str().to_string(),
            r.sample_count.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R, name: &str) -> Result<Vec<LuminanceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        return Err(Error::Parse {
            path: name.into(),
            line: 1,
            message: format!("expected header `{}`", RECORD_COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            path: name.into(),
            line,
            message,
        };
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(format!("{}: {e}", RECORD_COLUMNS[i])));
        out.push(LuminanceRecord {
            timestamp: parse_timestamp(&rec[0]).map_err(|e| err(format!("timestamp: {e}")))?,
            mean_pixel_luminance: num(1)?,
            relative_luminance: num(2)?,
            weighted_luminance: num(3)?,
            zenith_deg: num(4)?,
            sun_source: match &rec[5] {
                "detected" => SunSource::Detected,
                "geometric" => SunSource::GeometricFallback,
                other => return Err(err(format!("unknown sun_source `{other}`"))),
            },
            sample_count: rec[6].parse().map_err(|e| err(format!("sample_count: {e}")))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn meta(exposure: f64) -> CaptureMeta {
        CaptureMeta::new(Utc.with_ymd_and_hms(2016, 9, 1, 5, 0, 0).unwrap(), exposure, 200.0, 2.8).unwrap()
    }

    fn lens() -> LensModel {
        LensModel::horizon_fit(100.0, 100.0, 99.0).unwrap()
    }

    fn geom(z: f64) -> SolarGeometry {
        SolarGeometry {
            zenith_deg: z,
            azimuth_deg: 180.0,
            day_angle_rad: 0.0,
            eccentricity: 1.0,
        }
    }

    /// Uniform grey sky with a small white sun at the image centre.
    fn uniform_with_sun(value: u8) -> SkyImage {
        SkyImage::from_fn(201, 201, meta(1.0 / 250.0), |u, v| {
            if (f64::from(u) - 100.0).hypot(f64::from(v) - 100.0) <= 1.5 {
                [255, 255, 255]
            } else {
                [value, value, value]
            }
        })
        .unwrap()
    }

    #[test]
    fn luma_examples() {
        assert!((pixel_luminance(255.0, 255.0, 255.0) - 255.0).abs() < 1e-12);
        assert_eq!(pixel_luminance(0.0, 0.0, 0.0), 0.0);
        assert!((pixel_luminance(255.0, 0.0, 0.0) - 54.213).abs() < 1e-12);
    }

    #[test]
    fn degamma_examples() {
        assert_eq!(degamma(255.0), 255.0);
        assert_eq!(degamma(0.0), 0.0);
        assert!((degamma(127.5) - 55.497).abs() < 1e-3, "{}", degamma(127.5));
        assert!((degamma(127.5) - 255.0 * 0.5f64.powf(2.2)).abs() < 1e-12);
    }

    #[test]
    fn relative_luminance_examples() {
        assert!((relative_luminance(100.0, &meta(0.004)) - 980.0).abs() < 1e-9);
        assert_eq!(relative_luminance(0.0, &meta(0.004)), 0.0);
        assert!((relative_luminance(100.0, &meta(0.008)) - 490.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_luminance_examples() {
        assert_eq!(weighted_luminance(123.0, 0.0).unwrap(), 123.0);
        assert!((weighted_luminance(1000.0, 60.0).unwrap() - 500.0).abs() < 1e-9);
        assert_eq!(weighted_luminance(1000.0, 90.0).unwrap(), 0.0);
        assert!(matches!(weighted_luminance(1.0, 90.5), Err(Error::InvalidZenith(_))));
        assert!(matches!(weighted_luminance(1.0, -0.1), Err(Error::InvalidZenith(_))));
    }

    #[test]
    fn uniform_field_mean_is_exact() {
        let img = SkyImage::from_fn(32, 32, meta(0.01), |_, _| [90, 90, 90]).unwrap();
        let samples: Vec<_> = (0..97).map(|i| (f64::from(i) * 0.31 % 31.0, f64::from(i) * 0.17 % 31.0)).collect();
        let n = mean_sampled_luminance(&img, &samples).unwrap();
        assert_eq!(n, degamma(pixel_luminance(90.0, 90.0, 90.0)));
        assert!(matches!(mean_sampled_luminance(&img, &[]), Err(Error::EmptySampleSet)));
    }

    #[test]
    fn two_tone_mean() {
        let img = SkyImage::from_fn(40, 10, meta(0.01), |u, _| if u < 20 { [50, 50, 50] } else { [200, 200, 200] }).unwrap();
        let left: Vec<_> = (0..50).map(|i| (2.0 + f64::from(i % 15), 5.0)).collect();
        let right: Vec<_> = (0..50).map(|i| (22.0 + f64::from(i % 15) + 0.25, 5.5)).collect();
        let all: Vec<_> = left.into_iter().chain(right).collect();
        let n = mean_sampled_luminance(&img, &all).unwrap();
        let expect = 0.5 * (degamma(pixel_luminance(50.0, 50.0, 50.0)) + degamma(pixel_luminance(200.0, 200.0, 200.0)));
        assert!((n - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn bilinear_interpolates_between_pixels() {
        let img = SkyImage::from_fn(2, 2, meta(0.01), |u, v| {
            let x = (u * 100 + v * 50) as u8;
            [x, x, x]
        })
        .unwrap();
        assert_eq!(bilinear_rgb(&img, 0.5, 0.5), [75.0; 3]);
        assert_eq!(bilinear_rgb(&img, 1.0, 1.0), [150.0; 3]);
    }

    #[test]
    fn pipeline_on_uniform_sky() {
        let img = uniform_with_sun(128);
        let cfg = PipelineConfig {
            samples_n: 4000,
            ..PipelineConfig::default()
        };
        let rec = image_luminance_pipeline(&img, &lens(), &geom(0.0), &cfg).unwrap();
        assert_eq!(rec.sun_source, SunSource::Detected);
        assert_eq!(rec.sample_count, 4000);
        let sky = degamma(pixel_luminance(128.0, 128.0, 128.0));
        // the sun disk covers a handful of samples
        assert!(rec.mean_pixel_luminance >= sky && rec.mean_pixel_luminance < sky * 1.02);
        assert_eq!(rec.weighted_luminance, rec.relative_luminance);
        assert!((rec.relative_luminance - relative_luminance(rec.mean_pixel_luminance, &img.meta)).abs() < 1e-9);

        let again = image_luminance_pipeline(&img, &lens(), &geom(0.0), &cfg).unwrap();
        assert_eq!(rec, again);

        let tilted = image_luminance_pipeline(&img, &lens(), &geom(60.0), &cfg).unwrap();
        assert!((tilted.weighted_luminance / rec.weighted_luminance - 0.5).abs() < 1e-12);
        assert!(tilted.weighted_luminance <= tilted.relative_luminance);
    }

    #[test]
    fn night_image_is_rejected() {
        let img = uniform_with_sun(20);
        let err = image_luminance_pipeline(&img, &lens(), &geom(100.0), &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SunBelowHorizon { .. }));
    }

    #[test]
    fn records_round_trip() {
        let img = uniform_with_sun(100);
        let cfg = PipelineConfig {
            samples_n: 200,
            ..PipelineConfig::default()
        };
        let rec = image_luminance_pipeline(&img, &lens(), &geom(20.0), &cfg).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,N,Lr,L,zenith_deg,sun_source,sample_count\n"));
        assert_eq!(read_records(buf.as_slice(), "mem").unwrap(), vec![rec]);
    }

    proptest! {
        #[test]
        fn gamma_round_trip(y in 0.0f64..=255.0) {
            prop_assert!((degamma(engamma(y)) - y).abs() < 1e-9);
        }

        #[test]
        fn brightening_never_lowers_mean(seed in 0u64..1000, bump in 1u8..40, at in 0usize..64) {
            let base = SkyImage::from_fn(8, 8, meta(0.01), |u, v| {
                let x = ((u * 31 + v * 17 + seed as u32) % 200) as u8;
                [x, x / 2, 255 - x]
            }).unwrap();
            let mut pixels = base.pixels().to_vec();
            pixels[at] = pixels[at].map(|c| c.saturating_add(bump));
            let bright = SkyImage::new(8, 8, pixels, base.meta).unwrap();
            let samples: Vec<_> = (0..64).map(|i| (f64::from(i % 8) * 0.97, f64::from(i / 8) * 0.93)).collect();
            prop_assert!(mean_sampled_luminance(&bright, &samples).unwrap() >= mean_sampled_luminance(&base, &samples).unwrap());
        }

        #[test]
        fn mean_is_permutation_invariant(rot in 0usize..50) {
            let img = SkyImage::from_fn(16, 16, meta(0.01), |u, v| [(u * 13) as u8, (v * 11) as u8, 7]).unwrap();
            let samples: Vec<_> = (0..50).map(|i| (f64::from(i) * 0.29 % 15.0, f64::from(i) * 0.41 % 15.0)).collect();
            let mut rotated = samples.clone();
            rotated.rotate_left(rot);
            let a = mean_sampled_luminance(&img, &samples).unwrap();
            let b = mean_sampled_luminance(&img, &rotated).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
