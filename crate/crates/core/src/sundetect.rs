//! Sun localisation by red-channel thresholding and connected components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_to_ray, ray_to_pixel, sun_direction_from_geometry, LensModel, SolarGeometry, UnitVector};
use crate::ingest::SkyImage;

pub const DEFAULT_SUN_THRESHOLD: u8 = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SunSource {
    Detected,
    GeometricFallback,
}

impl SunSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SunSource::Detected => "detected",
            SunSource::GeometricFallback => "geometric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunLocation {
    pub pixel_u: f64,
    pub pixel_v: f64,
    pub direction: UnitVector,
    pub source: SunSource,
}

/// A connected set of above-threshold pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub area: usize,
    pub centroid_u: f64,
    pub centroid_v: f64,
}

/// 8-connected components of `mask` (row-major, `width` columns), in order
/// of their first pixel in scan order.
pub fn connected_components(mask: &[bool], width: usize) -> Vec<Blob> {
    if width == 0 {
        return Vec::new();
    }
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut area, mut su, mut sv) = (0usize, 0.0f64, 0.0f64);
        while let Some(idx) = stack.pop() {
            let (u, v) = (idx % width, idx / width);
            area += 1;
            su += u as f64;
            sv += v as f64;
            for dv in -1isize..=1 {
                for du in -1isize..=1 {
                    let (nu, nv) = (u as isize + du, v as isize + dv);
                    if nu < 0 || nv < 0 || nu >= width as isize || nv >= height as isize {
                        continue;
                    }
                    let n = nv as usize * width + nu as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        blobs.push(Blob {
            area,
            centroid_u: su / area as f64,
            centroid_v: sv / area as f64,
        });
    }
    blobs
}

/// Centroid of the largest 8-connected region with red >= `threshold`
/// inside the image circle. Equal areas are resolved toward the region
/// closer to the zenith.
pub fn detect_sun(image: &SkyImage, lens: &LensModel, threshold: u8) -> Result<SunLocation> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mask: Vec<bool> = image
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, p)| p[0] >= threshold && lens.contains((i % w) as f64, (i / w) as f64))
        .collect();
    debug_assert_eq!(mask.len(), w * h);

    let zenith_of = |b: &Blob| {
        pixel_to_ray(b.centroid_u, b.centroid_v, lens)
            .map(|d| d.zenith_angle())
            .unwrap_or(f64::INFINITY)
    };
    let best = connected_components(&mask, w)
        .into_iter()
        .fold(None::<Blob>, |best, b| match best {
            None => Some(b),
            Some(cur) if b.area > cur.area => Some(b),
            Some(cur) if b.area == cur.area && zenith_of(&b) < zenith_of(&cur) => Some(b),
            keep => keep,
        })
        .ok_or(Error::NoSunPixels { threshold })?;

    // the centroid of a non-convex region can leave the circle; pull it back
    let (u, v) = clamp_to_circle(best.centroid_u, best.centroid_v, lens);
    let mut direction = pixel_to_ray(u, v, lens)?;
    direction.z = direction.z.max(0.0);
    Ok(SunLocation {
        pixel_u: u,
        pixel_v: v,
        direction,
        source: SunSource::Detected,
    })
}

fn clamp_to_circle(u: f64, v: f64, lens: &LensModel) -> (f64, f64) {
    let (du, dv) = (u - lens.center_x, v - lens.center_y);
    let r = du.hypot(dv);
    if r <= lens.image_circle_radius {
        (u, v)
    } else {
        let s = lens.image_circle_radius / r;
        (lens.center_x + du * s, lens.center_y + dv * s)
    }
}

/// Image-based detection, or the astronomical sun position when nothing
/// crosses the threshold.
pub fn sun_with_fallback(
    image: &SkyImage,
    lens: &LensModel,
    geom: &SolarGeometry,
    azimuth_deg: f64,
    threshold: u8,
) -> Result<SunLocation> {
    if geom.zenith_deg > 90.0 {
        return Err(Error::SunBelowHorizon {
            zenith_deg: geom.zenith_deg,
        });
    }
    match detect_sun(image, lens, threshold) {
        Ok(loc) => Ok(loc),
        Err(Error::NoSunPixels { .. }) => {
            let direction = sun_direction_from_geometry(geom, azimuth_deg)?;
            let (pixel_u, pixel_v) = ray_to_pixel(&direction, lens)?;
            Ok(SunLocation {
                pixel_u,
                pixel_v,
                direction,
                source: SunSource::GeometricFallback,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CaptureMeta;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn meta() -> CaptureMeta {
        CaptureMeta::new(Utc.with_ymd_and_hms(2016, 9, 1, 5, 0, 0).unwrap(), 0.001, 100.0, 4.0).unwrap()
    }

    fn lens() -> LensModel {
        LensModel::horizon_fit(200.0, 200.0, 199.0).unwrap()
    }

    fn disks(disks: &[(f64, f64, f64)], background: [u8; 3]) -> SkyImage {
        SkyImage::from_fn(400, 400, meta(), |u, v| {
            let inside = disks
                .iter()
                .any(|&(cu, cv, r)| (f64::from(u) - cu).hypot(f64::from(v) - cv) <= r);
            if inside {
                [255, 255, 255]
            } else {
                background
            }
        })
        .unwrap()
    }

    fn geom(zenith: f64) -> SolarGeometry {
        SolarGeometry {
            zenith_deg: zenith,
            azimuth_deg: 90.0,
            day_angle_rad: 0.0,
            eccentricity: 1.0,
        }
    }

    #[test]
    fn symmetric_disk_centroid() {
        let img = disks(&[(100.0, 200.0, 12.0)], [40, 60, 120]);
        let s = detect_sun(&img, &lens(), DEFAULT_SUN_THRESHOLD).unwrap();
        assert!((s.pixel_u - 100.0).abs() <= 0.5 && (s.pixel_v - 200.0).abs() <= 0.5);
        assert_eq!(s.source, SunSource::Detected);
        assert!(s.direction.z >= 0.0);
    }

    #[test]
    fn largest_blob_wins() {
        // areas ~ pi r^2: r = 12.6 -> ~500 px, r = 4 -> ~50 px
        let img = disks(&[(150.0, 150.0, 4.0), (250.0, 230.0, 12.6)], [10, 10, 10]);
        let blobs = {
            let w = img.width() as usize;
            let mask: Vec<bool> = img.pixels().iter().map(|p| p[0] >= 240).collect();
            connected_components(&mask, w)
        };
        let mut areas: Vec<_> = blobs.iter().map(|b| b.area).collect();
        areas.sort_unstable();
        assert_eq!(areas.len(), 2);
        assert!((480..=520).contains(&areas[1]) && (45..=55).contains(&areas[0]), "{areas:?}");
        let s = detect_sun(&img, &lens(), 240).unwrap();
        assert!((s.pixel_u - 250.0).abs() < 0.5 && (s.pixel_v - 230.0).abs() < 0.5);
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let mask = [true, false, false, true];
        assert_eq!(connected_components(&mask, 2).len(), 1);
    }

    #[test]
    fn equal_areas_prefer_the_zenith() {
        let img = disks(&[(60.0, 200.0, 5.0), (220.0, 200.0, 5.0)], [0, 0, 0]);
        let s = detect_sun(&img, &lens(), 240).unwrap();
        assert!((s.pixel_u - 220.0).abs() < 0.5);
    }

    #[test]
    fn dark_image_has_no_sun() {
        let img = disks(&[], [0, 0, 0]);
        assert!(matches!(detect_sun(&img, &lens(), 240), Err(Error::NoSunPixels { threshold: 240 })));
    }

    #[test]
    fn bright_pixels_outside_circle_are_ignored() {
        // a large reflection in the corner, a small sun inside
        let img = disks(&[(0.0, 0.0, 40.0), (200.0, 180.0, 3.0)], [0, 0, 0]);
        let s = detect_sun(&img, &lens(), 240).unwrap();
        assert!((s.pixel_u - 200.0).abs() < 0.5 && (s.pixel_v - 180.0).abs() < 0.5);
    }

    #[test]
    fn fallback_behaviour() {
        let bright = disks(&[(200.0, 200.0, 6.0)], [50, 50, 50]);
        let s = sun_with_fallback(&bright, &lens(), &geom(30.0), 90.0, 240).unwrap();
        assert_eq!(s.source, SunSource::Detected);

        let overcast = disks(&[], [180, 180, 180]);
        let s = sun_with_fallback(&overcast, &lens(), &geom(30.0), 90.0, 240).unwrap();
        assert_eq!(s.source, SunSource::GeometricFallback);
        assert!((s.direction.z - 30f64.to_radians().cos()).abs() < 1e-12);
        // east is +u
        assert!(s.pixel_u > 200.0 && (s.pixel_v - 200.0).abs() < 1e-9);

        assert!(matches!(
            sun_with_fallback(&overcast, &lens(), &geom(95.0), 90.0, 240),
            Err(Error::SunBelowHorizon { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn blue_green_do_not_matter(g in 0u8..255, b in 0u8..255) {
            let base = disks(&[(180.0, 210.0, 8.0)], [30, 30, 30]);
            let recoloured = SkyImage::from_fn(400, 400, meta(), |u, v| {
                let p = base.pixel(u, v);
                [p[0], g, b]
            }).unwrap();
            let a = detect_sun(&base, &lens(), 240).unwrap();
            let c = detect_sun(&recoloured, &lens(), 240).unwrap();
            prop_assert_eq!((a.pixel_u, a.pixel_v), (c.pixel_u, c.pixel_v));
        }

        #[test]
        fn centroid_is_translation_equivariant(du in -60i32..60, dv in -60i32..60) {
            let a = detect_sun(&disks(&[(200.0, 200.0, 7.3)], [0, 0, 0]), &lens(), 240).unwrap();
            let moved = disks(&[(200.0 + f64::from(du), 200.0 + f64::from(dv), 7.3)], [0, 0, 0]);
            let b = detect_sun(&moved, &lens(), 240).unwrap();
            prop_assert!((b.pixel_u - a.pixel_u - f64::from(du)).abs() <= 0.5);
            prop_assert!((b.pixel_v - a.pixel_v - f64::from(dv)).abs() <= 0.5);
            prop_assert!(lens().contains(b.pixel_u, b.pixel_v));
        }
    }
}
