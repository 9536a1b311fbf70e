//! Global horizontal irradiance (GHI) estimation from whole-sky camera images.
//!
//! The processing chain for a single image is:
//!
//! 1. locate the sun in the fisheye frame ([`sundetect`]), falling back to the
//!    astronomical sun position when no pixel is bright enough;
//! 2. draw cosine-weighted directions around the zenith, rotate them onto the
//!    sun and project them through the equisolid lens model ([`geometry`]);
//! 3. average the linearised luminance of the sampled pixels, normalise by
//!    exposure time, ISO and aperture and weight by the cosine of the solar
//!    zenith angle ([`luminance`]);
//! 4. map luminance to irradiance with a least-squares polynomial ([`regress`]).
//!
//! Around that chain sit a clear-sky model ([`clearsky`]), temperature-based
//! benchmark estimators ([`regress::benchmark`]), evaluation metrics and the
//! randomized train/test study ([`evaluate`]), a synthetic scene renderer used
//! as an end-to-end oracle ([`render`]) and data loaders ([`ingest`]).

pub mod clearsky;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod ingest;
pub mod luminance;
pub mod plot;
pub mod regress;
pub mod render;
pub mod site;
pub mod sundetect;

pub use error::{Error, Result};
