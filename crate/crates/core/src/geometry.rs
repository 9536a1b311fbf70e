//! Fisheye lens model, solar position and cosine-weighted hemisphere sampling.
//!
//! Conventions: the local frame is x = east, y = north, z = up. Pixel
//! coordinates are `(u, v)` with pixel centres on integer coordinates. A
//! direction with horizontal bearing `(x, y)` lands at `center + r * (x, y) / |(x, y)|`,
//! where `r = focal_scale * sin(theta / 2)` (equisolid projection, `focal_scale = 2f`).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use chrono::{DateTime, Datelike, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clearsky;
use crate::error::{Error, Result};

/// Tolerance for the unit-norm and orthonormality invariants.
pub const UNIT_TOL: f64 = 1e-9;

/// Equisolid fisheye lens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensModel {
    /// `2f` in pixel units.
    pub focal_scale: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub image_circle_radius: f64,
}

impl LensModel {
    pub fn new(focal_scale: f64, center_x: f64, center_y: f64, image_circle_radius: f64) -> Result<Self> {
        if !(focal_scale.is_finite() && focal_scale > 0.0) {
            return Err(Error::InvalidLens(format!("focal scale {focal_scale} must be positive")));
        }
        if !(image_circle_radius.is_finite() && image_circle_radius > 0.0) {
            return Err(Error::InvalidLens(format!(
                "image circle radius {image_circle_radius} must be positive"
            )));
        }
        if image_circle_radius > focal_scale {
            return Err(Error::InvalidLens(format!(
                "image circle radius {image_circle_radius} exceeds focal scale {focal_scale}"
            )));
        }
        if !(center_x.is_finite() && center_y.is_finite()) {
            return Err(Error::InvalidLens("non-finite image centre".into()));
        }
        Ok(Self {
            focal_scale,
            center_x,
            center_y,
            image_circle_radius,
        })
    }

    /// Lens whose image circle reaches exactly the horizon.
    pub fn horizon_fit(center_x: f64, center_y: f64, horizon_radius: f64) -> Result<Self> {
        Self::new(
            horizon_radius / (PI / 4.0).sin(),
            center_x,
            center_y,
            horizon_radius,
        )
    }

    /// Radius in pixels at which the horizon (`theta = 90 deg`) is imaged.
    pub fn horizon_radius(&self) -> f64 {
        self.focal_scale * (PI / 4.0).sin()
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (u - self.center_x).hypot(v - self.center_y) <= self.image_circle_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector {
    pub const ZENITH: UnitVector = UnitVector { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalises `(x, y, z)`; `None` for a zero or non-finite vector.
    pub fn normalize(x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        Some(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Direction at polar angle `theta` from +z and azimuth `phi` from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Angle to `other` in radians.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        // atan2 form stays accurate for nearly parallel vectors
        let cx = self.y * other.z - self.z * other.y;
        let cy = self.z * other.x - self.x * other.z;
        let cz = self.x * other.y - self.y * other.x;
        (cx * cx + cy * cy + cz * cz).sqrt().atan2(self.dot(other))
    }

    pub fn zenith_angle(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }
}

/// Proper rotation stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation by `angle` radians about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: &UnitVector, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let UnitVector { x, y, z } = *axis;
        RotationMatrix([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    pub fn apply(&self, v: &UnitVector) -> UnitVector {
        let m = &self.0;
        UnitVector {
            x: m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            y: m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            z: m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        }
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = m[j][i];
            }
        }
        RotationMatrix(t)
    }

    pub fn mul(&self, other: &RotationMatrix) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `max |(R^T R - I)_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for (i, row) in p.0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - target).abs());
            }
        }
        err
    }
}

/// Sun geometry for one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarGeometry {
    pub zenith_deg: f64,
    /// Bearing of the sun, degrees clockwise from north.
    pub azimuth_deg: f64,
    pub day_angle_rad: f64,
    pub eccentricity: f64,
}

impl SolarGeometry {
    pub fn is_daytime(&self) -> bool {
        self.zenith_deg <= 90.0
    }
}

/// Projects a direction onto the image plane.
pub fn ray_to_pixel(dir: &UnitVector, lens: &LensModel) -> Result<(f64, f64)> {
    if dir.z < 0.0 {
        return Err(Error::BelowHorizon { z: dir.z });
    }
    let rho = dir.x.hypot(dir.y);
    let theta = rho.atan2(dir.z);
    let r = lens.focal_scale * (theta / 2.0).sin();
    if r > lens.image_circle_radius {
        return Err(Error::OutsideImageCircle {
            radius: r,
            limit: lens.image_circle_radius,
        });
    }
    if rho == 0.0 {
        return Ok((lens.center_x, lens.center_y));
    }
    Ok((
        lens.center_x + r * dir.x / rho,
        lens.center_y + r * dir.y / rho,
    ))
}

/// Inverse of [`ray_to_pixel`].
pub fn pixel_to_ray(u: f64, v: f64, lens: &LensModel) -> Result<UnitVector> {
    let du = u - lens.center_x;
    let dv = v - lens.center_y;
    let r = du.hypot(dv);
    if r > lens.image_circle_radius {
        return Err(Error::OutsideImageCircle {
            radius: r,
            limit: lens.image_circle_radius,
        });
    }
    if r == 0.0 {
        return Ok(UnitVector::ZENITH);
    }
    let theta = 2.0 * (r / lens.focal_scale).asin();
    let (st, ct) = theta.sin_cos();
    Ok(UnitVector {
        x: st * du / r,
        y: st * dv / r,
        z: ct,
    })
}

/// Maps two uniform numbers in `[0, 1]` to a cosine-distributed direction
/// about +z: `phi = 2 pi r1`, `theta = acos(sqrt(r2))`.
pub fn cosine_direction(r1: f64, r2: f64) -> UnitVector {
    let phi = TAU * r1;
    let theta = r2.sqrt().acos();
    UnitVector::from_spherical(theta, phi)
}

/// Random stream for one image: seeded by the global seed, one ChaCha stream per image.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn draw_cosine_direction<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    cosine_direction(r1, r2)
}

/// `n` cosine-weighted directions about the zenith, deterministic in `seed`.
pub fn cosine_hemisphere_sample(seed: u64, n: usize) -> Vec<UnitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw_cosine_direction(&mut rng)).collect()
}

/// Minimal rotation taking +z onto `sun`.
///
/// The axis is `z x sun` and the angle `acos(z . sun)`. The antipode, where
/// the axis is undefined, maps to the half turn about x.
pub fn rotation_to_sun(sun: &UnitVector) -> RotationMatrix {
    let c = sun.z;
    // k = z x sun = (-sy, sx, 0), |k| = sin(angle)
    let kx = -sun.y;
    let ky = sun.x;
    if kx == 0.0 && ky == 0.0 && c > 0.0 {
        return RotationMatrix::IDENTITY;
    }
    if 1.0 + c <= 1e-15 {
        return RotationMatrix([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    }
    // R = I + [k]x + [k]x^2 / (1 + c)
    let f = 1.0 / (1.0 + c);
    RotationMatrix([
        [1.0 - f * ky * ky, f * kx * ky, ky],
        [f * kx * ky, 1.0 - f * kx * kx, -kx],
        [-ky, kx, 1.0 - f * (kx * kx + ky * ky)],
    ])
}

pub fn rotate_samples(points: &[UnitVector], rotation: &RotationMatrix) -> Vec<UnitVector> {
    points.iter().map(|p| rotation.apply(p)).collect()
}

/// Draws cosine-weighted directions, rotates them onto the sun and projects
/// them to pixels. Draws that fall below the horizon, outside the image
/// circle or outside the raster bounds are replaced by fresh draws, with at
/// most `100 * n` draws in total.
pub fn sample_sun_pixels<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    rotation: &RotationMatrix,
    lens: &LensModel,
    width: u32,
    height: u32,
) -> Result<Vec<(f64, f64)>> {
    let max_u = f64::from(width) - 1.0;
    let max_v = f64::from(height) - 1.0;
    let cap = n.saturating_mul(100);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= cap {
            return Err(Error::SamplingExhausted {
                wanted: n,
                attempts,
            });
        }
        attempts += 1;
        let dir = rotation.apply(&draw_cosine_direction(rng));
        let Ok((u, v)) = ray_to_pixel(&dir, lens) else {
            continue;
        };
        if (0.0..=max_u).contains(&u) && (0.0..=max_v).contains(&v) {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// `2 pi (d - 1) / 365`.
pub fn day_angle(day_of_year: u32) -> Result<f64> {
    if !(1..=366).contains(&day_of_year) {
        return Err(Error::InvalidDay(day_of_year));
    }
    Ok(TAU * f64::from(day_of_year - 1) / 365.0)
}

/// Low-precision solar position: NOAA formulation of the mean solar
/// longitude, equation of centre, obliquity, declination and equation of
/// time in Julian centuries since J2000. Good to about 0.01 degrees for
/// dates within a few centuries of 2000; refraction is ignored.
pub fn solar_position(timestamp: DateTime<Utc>, latitude_deg: f64, longitude_deg: f64) -> SolarGeometry {
    let doy = timestamp.ordinal();
    let minutes = f64::from(timestamp.num_seconds_from_midnight()) / 60.0
        + f64::from(timestamp.nanosecond()) / 6e10;
    let unix_days = (timestamp.timestamp() as f64 + f64::from(timestamp.timestamp_subsec_nanos()) * 1e-9) / 86_400.0;
    let t = (unix_days + 2_440_587.5 - 2_451_545.0) / 36_525.0;

    let mean_long = (280.46646 + t * (36_000.769_83 + t * 0.000_303_2)).rem_euclid(360.0).to_radians();
    let mean_anom = (357.529_11 + t * (35_999.050_29 - 0.000_153_7 * t)).to_radians();
    let ecc = 0.016_708_634 - t * (0.000_042_037 + 0.000_000_126_7 * t);
    let centre = mean_anom.sin() * (1.914_602 - t * (0.004_817 + 0.000_014 * t))
        + (2.0 * mean_anom).sin() * (0.019_993 - 0.000_101 * t)
        + (3.0 * mean_anom).sin() * 0.000_289;
    let omega = (125.04 - 1934.136 * t).to_radians();
    let app_long = (mean_long.to_degrees() + centre - 0.005_69 - 0.004_78 * omega.sin()).to_radians();
    let obliq_mean = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.000_59 - t * 0.001_813))) / 60.0) / 60.0;
    let obliq = (obliq_mean + 0.002_56 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let eq_time = 4.0
        * (y * (2.0 * mean_long).sin() - 2.0 * ecc * mean_anom.sin()
            + 4.0 * ecc * y * mean_anom.sin() * (2.0 * mean_long).cos()
            - 0.5 * y * y * (4.0 * mean_long).sin()
            - 1.25 * ecc * ecc * (2.0 * mean_anom).sin())
        .to_degrees();

    let true_solar_minutes = minutes + eq_time + 4.0 * longitude_deg;
    let hour_angle = (true_solar_minutes / 4.0 - 180.0).to_radians();
    let lat = latitude_deg.to_radians();

    let cos_zen = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    let zenith = cos_zen.clamp(-1.0, 1.0).acos();

    let east = -decl.cos() * hour_angle.sin();
    let north = decl.sin() * lat.cos() - decl.cos() * lat.sin() * hour_angle.cos();
    let azimuth = east.atan2(north).to_degrees().rem_euclid(360.0);

    let day_angle_rad = day_angle(doy).expect("chrono ordinal is within 1..=366");
    SolarGeometry {
        zenith_deg: zenith.to_degrees(),
        azimuth_deg: azimuth,
        day_angle_rad,
        eccentricity: clearsky::eccentricity(day_angle_rad),
    }
}

/// Sun direction from its zenith angle and bearing (clockwise from north).
pub fn sun_direction_from_geometry(geom: &SolarGeometry, azimuth_deg: f64) -> Result<UnitVector> {
    if geom.zenith_deg > 90.0 {
        return Err(Error::SunBelowHorizon {
            zenith_deg: geom.zenith_deg,
        });
    }
    let zen = geom.zenith_deg.to_radians();
    // bearing b from north towards east is the math angle pi/2 - b from +x
    Ok(UnitVector::from_spherical(zen, FRAC_PI_2 - azimuth_deg.to_radians()))
}
