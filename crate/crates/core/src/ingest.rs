//! Sky images, capture metadata and weather-station series.
//!
//! Capture metadata (timestamp, exposure time, ISO, f-number) can be embedded
//! in the image (PNG `tEXt` chunks or EXIF) or supplied by a sidecar CSV
//! `filename,timestamp,exposure_s,iso,f_number`. When both are present the
//! sidecar wins field by field.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDateTime, NaiveTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default pairing tolerance between an image and a sensor reading.
pub const DEFAULT_MAX_GAP_S: f64 = 120.0;

pub const WEATHER_COLUMNS: [&str; 5] = ["timestamp", "ghi_wm2", "tmax_c", "tmin_c", "rain_mm"];
pub const SIDECAR_COLUMNS: [&str; 5] = ["filename", "timestamp", "exposure_s", "iso", "f_number"];
pub const PAIRS_COLUMNS: [&str; 4] = ["timestamp", "luminance", "irradiance", "gap_s"];

const TEXT_KEYS: [&str; 4] = ["timestamp", "exposure_s", "iso", "f_number"];

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s.trim()).map(|t| t.with_timezone(&Utc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub timestamp: DateTime<Utc>,
    /// Seconds.
    pub exposure_time: f64,
    pub iso: f64,
    pub f_number: f64,
}

impl CaptureMeta {
    pub fn new(timestamp: DateTime<Utc>, exposure_time: f64, iso: f64, f_number: f64) -> Result<Self> {
        for (name, v) in [("exposure time", exposure_time), ("iso", iso), ("f-number", f_number)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidMetadata(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            timestamp,
            exposure_time,
            iso,
            f_number,
        })
    }

    /// `e_t * S / f_s^2`: pixel value per unit scene luminance.
    pub fn exposure_gain(&self) -> f64 {
        self.exposure_time * self.iso / (self.f_number * self.f_number)
    }
}

/// Capture metadata with possibly missing fields, as read from one source.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PartialMeta {
    pub timestamp: Option<DateTime<Utc>>,
    pub exposure_time: Option<f64>,
    pub iso: Option<f64>,
    pub f_number: Option<f64>,
}

impl PartialMeta {
    /// Fields of `self` take precedence over `fallback`.
    pub fn or(self, fallback: PartialMeta) -> PartialMeta {
        PartialMeta {
            timestamp: self.timestamp.or(fallback.timestamp),
            exposure_time: self.exposure_time.or(fallback.exposure_time),
            iso: self.iso.or(fallback.iso),
            f_number: self.f_number.or(fallback.f_number),
        }
    }

    pub fn complete(self, image: &str) -> Result<CaptureMeta> {
        let missing = |field| Error::MissingMetadata {
            image: image.to_string(),
            field,
        };
        CaptureMeta::new(
            self.timestamp.ok_or_else(|| missing("timestamp"))?,
            self.exposure_time.ok_or_else(|| missing("exposure_time"))?,
            self.iso.ok_or_else(|| missing("iso"))?,
            self.f_number.ok_or_else(|| missing("f_number"))?,
        )
    }
}

impl From<CaptureMeta> for PartialMeta {
    fn from(m: CaptureMeta) -> Self {
        PartialMeta {
            timestamp: Some(m.timestamp),
            exposure_time: Some(m.exposure_time),
            iso: Some(m.iso),
            f_number: Some(m.f_number),
        }
    }
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
    pub meta: CaptureMeta,
}

impl SkyImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>, meta: CaptureMeta) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty raster {width}x{height}")));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidParameter(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            meta,
        })
    }

    pub fn from_fn(width: u32, height: u32, meta: CaptureMeta, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                pixels.push(f(u, v));
            }
        }
        Self::new(width, height, pixels, meta)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Pixel at column `u`, row `v`.
    pub fn pixel(&self, u: u32, v: u32) -> [u8; 3] {
        self.pixels[v as usize * self.width as usize + u as usize]
    }

    pub fn raw_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    /// Writes a PNG with the capture metadata in `tEXt` chunks.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        self.write_png(file)
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Io(std::io::Error::other(e));
        for (key, value) in TEXT_KEYS.iter().zip(meta_text_values(&self.meta)) {
            enc.add_text_chunk((*key).to_string(), value).map_err(png_err)?;
        }
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&self.raw_bytes()).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
        Ok(())
    }
}

fn meta_text_values(m: &CaptureMeta) -> [String; 4] {
    [
        format_timestamp(&m.timestamp),
        m.exposure_time.to_string(),
        m.iso.to_string(),
        m.f_number.to_string(),
    ]
}

/// Sidecar metadata keyed by file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    entries: HashMap<String, PartialMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarRow {
    filename: String,
    timestamp: Option<String>,
    exposure_s: Option<f64>,
    iso: Option<f64>,
    f_number: Option<f64>,
}

impl Sidecar {
    pub fn insert(&mut self, filename: impl Into<String>, meta: PartialMeta) {
        self.entries.insert(filename.into(), meta);
    }

    pub fn get(&self, filename: &str) -> Option<&PartialMeta> {
        self.entries.get(filename)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(&name, rdr.headers()?, &SIDECAR_COLUMNS, SIDECAR_COLUMNS.len())?;
        let mut sidecar = Sidecar::default();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let row: SidecarRow = rec.deserialize(None).map_err(|e| Error::Parse {
                path: name.clone(),
                line,
                message: e.to_string(),
            })?;
            let timestamp = row
                .timestamp
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_timestamp(&s))
                .transpose()
                .map_err(|e| Error::Parse {
                    path: name.clone(),
                    line,
                    message: format!("bad timestamp: {e}"),
                })?;
            sidecar.insert(
                row.filename,
                PartialMeta {
                    timestamp,
                    exposure_time: row.exposure_s,
                    iso: row.iso,
                    f_number: row.f_number,
                },
            );
        }
        Ok(sidecar)
    }

    /// Writes rows sorted by file name.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut names: Vec<_> = self.entries.keys().collect();
        names.sort();
        for name in names {
            let m = &self.entries[name];
            wtr.serialize(SidecarRow {
                filename: name.clone(),
                timestamp: m.timestamp.as_ref().map(format_timestamp),
                exposure_s: m.exposure_time,
                iso: m.iso,
                f_number: m.f_number,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Where to look for capture metadata.
#[derive(Debug, Clone, Copy)]
pub struct MetadataSource<'a> {
    pub embedded: bool,
    pub sidecar: Option<&'a Sidecar>,
    /// Offset applied to EXIF timestamps that carry no offset of their own.
    pub naive_offset: FixedOffset,
}

impl<'a> MetadataSource<'a> {
    pub fn embedded() -> Self {
        Self {
            embedded: true,
            sidecar: None,
            naive_offset: FixedOffset::east_opt(0).expect("zero offset"),
        }
    }

    pub fn sidecar(sidecar: &'a Sidecar) -> Self {
        Self {
            embedded: false,
            sidecar: Some(sidecar),
            ..Self::embedded()
        }
    }

    pub fn both(sidecar: &'a Sidecar) -> Self {
        Self {
            sidecar: Some(sidecar),
            ..Self::embedded()
        }
    }

    pub fn with_naive_offset(mut self, offset: FixedOffset) -> Self {
        self.naive_offset = offset;
        self
    }
}

/// Decodes an image file to 8-bit RGB and attaches its capture metadata.
pub fn load_sky_image(path: impl AsRef<Path>, source: &MetadataSource<'_>) -> Result<SkyImage> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::UnreadableImage {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path).map_err(|e| unreadable(e.to_string()))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| unreadable(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (width, height) = rgb.dimensions();

    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    let mut meta = PartialMeta::default();
    if let Some(sidecar) = source.sidecar {
        if let Some(m) = sidecar.get(&name) {
            meta = *m;
        }
    }
    if source.embedded {
        meta = meta.or(read_embedded_meta(&bytes, source.naive_offset));
    }
    let meta = meta.complete(&name)?;

    let pixels = rgb.pixels().map(|p| p.0).collect();
    SkyImage::new(width, height, pixels, meta)
}

/// Embedded metadata: PNG `tEXt` chunks first, then EXIF for what is still missing.
pub fn read_embedded_meta(bytes: &[u8], naive_offset: FixedOffset) -> PartialMeta {
    read_png_text_meta(bytes).or(read_exif_meta(bytes, naive_offset))
}

fn read_png_text_meta(bytes: &[u8]) -> PartialMeta {
    let mut meta = PartialMeta::default();
    let Ok(reader) = png::Decoder::new(Cursor::new(bytes)).read_info() else {
        return meta;
    };
    for chunk in &reader.info().uncompressed_latin1_text {
        let text = chunk.text.trim();
        match chunk.keyword.as_str() {
            "timestamp" => meta.timestamp = parse_timestamp(text).ok(),
            "exposure_s" => meta.exposure_time = text.parse().ok(),
            "iso" => meta.iso = text.parse().ok(),
            "f_number" => meta.f_number = text.parse().ok(),
            _ => {}
        }
    }
    meta
}

fn read_exif_meta(bytes: &[u8], naive_offset: FixedOffset) -> PartialMeta {
    use exif::{In, Tag, Value};

    let mut meta = PartialMeta::default();
    let Ok(data) = exif::Reader::new().read_from_container(&mut Cursor::new(bytes)) else {
        return meta;
    };
    let rational = |tag| match data.get_field(tag, In::PRIMARY).map(|f| &f.value) {
        Some(Value::Rational(v)) => v.first().map(|r| r.to_f64()),
        Some(v) => v.get_uint(0).map(f64::from),
        None => None,
    };
    let ascii = |tag| match data.get_field(tag, In::PRIMARY).map(|f| &f.value) {
        Some(Value::Ascii(v)) => v.first().map(|s| String::from_utf8_lossy(s).trim().to_string()),
        _ => None,
    };
    meta.exposure_time = rational(Tag::ExposureTime);
    meta.f_number = rational(Tag::FNumber);
    meta.iso = data
        .get_field(Tag::PhotographicSensitivity, In::PRIMARY)
        .and_then(|f| f.value.get_uint(0))
        .map(f64::from);
    if let Some(dt) = ascii(Tag::DateTimeOriginal) {
        if let Ok(naive) = NaiveDateTime::parse_from_str(&dt, "%Y:%m:%d %H:%M:%S") {
            let offset = ascii(Tag::OffsetTimeOriginal)
                .and_then(|s| parse_offset(&s))
                .unwrap_or(naive_offset);
            meta.timestamp = offset
                .from_local_datetime(&naive)
                .single()
                .map(|t| t.with_timezone(&Utc));
        }
    }
    meta
}

fn parse_offset(s: &str) -> Option<FixedOffset> {
    DateTime::parse_from_str(&format!("2000-01-01T00:00:00{s}"), "%Y-%m-%dT%H:%M:%S%:z")
        .ok()
        .map(|t| *t.offset())
}

/// Builds an EXIF (TIFF) block carrying the capture metadata.
pub fn encode_exif(meta: &CaptureMeta, offset: FixedOffset) -> Result<Vec<u8>> {
    use exif::{Field, In, Rational, Tag, Value};

    let local = meta.timestamp.with_timezone(&offset);
    let rational = |v: f64| {
        // six significant decimals are enough for camera settings
        let denom = 1_000_000u32;
        Rational {
            num: (v * f64::from(denom)).round() as u32,
            denom,
        }
    };
    let fields = [
        Field {
            tag: Tag::ExposureTime,
            ifd_num: In::PRIMARY,
            value: Value::Rational(vec![rational(meta.exposure_time)]),
        },
        Field {
            tag: Tag::FNumber,
            ifd_num: In::PRIMARY,
            value: Value::Rational(vec![rational(meta.f_number)]),
        },
        Field {
            tag: Tag::PhotographicSensitivity,
            ifd_num: In::PRIMARY,
            value: Value::Short(vec![meta.iso.round() as u16]),
        },
        Field {
            tag: Tag::DateTimeOriginal,
            ifd_num: In::PRIMARY,
            value: Value::Ascii(vec![local.format("%Y:%m:%d %H:%M:%S").to_string().into_bytes()]),
        },
        Field {
            tag: Tag::OffsetTimeOriginal,
            ifd_num: In::PRIMARY,
            value: Value::Ascii(vec![local.format("%:z").to_string().into_bytes()]),
        },
    ];
    let mut writer = exif::experimental::Writer::new();
    for f in &fields {
        writer.push_field(f);
    }
    let mut buf = Cursor::new(Vec::new());
    writer
        .write(&mut buf, false)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(buf.into_inner())
}

/// Encodes `image` as JPEG with an APP1 EXIF segment holding its metadata.
pub fn write_jpeg_with_exif(image: &SkyImage, offset: FixedOffset, quality: u8) -> Result<Vec<u8>> {
    let mut jpeg = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut jpeg, quality)
        .encode(&image.raw_bytes(), image.width, image.height, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let tiff = encode_exif(&image.meta, offset)?;
    let payload_len = 2 + 6 + tiff.len();
    let len = u16::try_from(payload_len)
        .map_err(|_| Error::InvalidParameter("EXIF block too large".into()))?;
    let mut out = Vec::with_capacity(jpeg.len() + payload_len + 2);
    out.extend_from_slice(&jpeg[..2]); // SOI
    out.extend_from_slice(&[0xFF, 0xE1]);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(b"Exif\0\0");
    out.extend_from_slice(&tiff);
    out.extend_from_slice(&jpeg[2..]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrradianceSample {
    pub timestamp: DateTime<Utc>,
    /// W/m².
    pub ghi: f64,
    pub tmax_c: Option<f64>,
    pub tmin_c: Option<f64>,
    pub rain_mm: Option<f64>,
}

impl IrradianceSample {
    pub fn ghi_only(timestamp: DateTime<Utc>, ghi: f64) -> Self {
        Self {
            timestamp,
            ghi,
            tmax_c: None,
            tmin_c: None,
            rain_mm: None,
        }
    }
}

/// Time-ordered pyranometer readings with optional temperature and rain channels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IrradianceSeries {
    samples: Vec<IrradianceSample>,
}

impl IrradianceSeries {
    pub fn new(samples: Vec<IrradianceSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(s.ghi.is_finite() && s.ghi >= 0.0) {
                return Err(Error::InvalidParameter(format!("sample {i}: ghi {} is negative", s.ghi)));
            }
            if let Some(r) = s.rain_mm {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::InvalidParameter(format!("sample {i}: rain {r} is negative")));
                }
            }
            if i > 0 && s.timestamp <= samples[i - 1].timestamp {
                return Err(Error::NonMonotonicTimestamps {
                    path: "<memory>".into(),
                    line: i as u64 + 1,
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[IrradianceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.samples.iter().map(|s| s.timestamp).collect()
    }

    pub fn ghi(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ghi).collect()
    }

    fn has_column(&self, idx: usize) -> bool {
        self.samples.iter().any(|s| match idx {
            2 => s.tmax_c.is_some(),
            3 => s.tmin_c.is_some(),
            _ => s.rain_mm.is_some(),
        })
    }

    /// Writes the weather CSV. Optional columns are emitted up to the last one
    /// that holds any value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let ncols = (2..5).rev().find(|&i| self.has_column(i)).map_or(2, |i| i + 1);
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&WEATHER_COLUMNS[..ncols])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.samples {
            let row = [
                format_timestamp(&s.timestamp),
                s.ghi.to_string(),
                opt(s.tmax_c),
                opt(s.tmin_c),
                opt(s.rain_mm),
            ];
            wtr.write_record(&row[..ncols])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }
}

fn check_header(path: &str, header: &csv::StringRecord, expected: &[&str], min: usize) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = got.len() >= min && got.len() <= expected.len() && got == expected[..got.len()];
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        })
    }
}

pub fn load_irradiance_series(path: impl AsRef<Path>) -> Result<IrradianceSeries> {
    let path = path.as_ref();
    read_irradiance_series(BufReader::new(File::open(path)?), &path.display().to_string())
}

/// Parses the weather CSV `timestamp,ghi_wm2[,tmax_c,tmin_c,rain_mm]`.
pub fn read_irradiance_series<R: Read>(r: R, name: &str) -> Result<IrradianceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(name, rdr.headers()?, &WEATHER_COLUMNS, 2)?;
    let mut samples: Vec<IrradianceSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: name.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: name.into(),
            line,
            message,
        };
        let timestamp = parse_timestamp(&rec[0]).map_err(|e| parse_err(format!("bad timestamp `{}`: {e}", &rec[0])))?;
        let num = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| parse_err(format!("column {}: `{s}`: {e}", WEATHER_COLUMNS[i]))),
            }
        };
        let ghi = num(1)?.ok_or_else(|| parse_err("missing ghi_wm2".into()))?;
        if !(ghi.is_finite() && ghi >= 0.0) {
            return Err(parse_err(format!("ghi_wm2 {ghi} must be non-negative")));
        }
        let rain = num(4)?;
        if rain.is_some_and(|r| !(r >= 0.0)) {
            return Err(parse_err("rain_mm must be non-negative".into()));
        }
        if samples.last().is_some_and(|p| timestamp <= p.timestamp) {
            return Err(Error::NonMonotonicTimestamps {
                path: name.into(),
                line,
            });
        }
        samples.push(IrradianceSample {
            timestamp,
            ghi,
            tmax_c: num(2)?,
            tmin_c: num(3)?,
            rain_mm: rain,
        });
    }
    IrradianceSeries::new(samples)
}

/// One image matched to its nearest sensor reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub image_index: usize,
    pub series_index: usize,
    /// Absolute time difference, seconds.
    pub gap_s: f64,
}

fn gap_seconds(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    let d = a - b;
    (d.num_seconds() as f64 + f64::from(d.subsec_nanos()) * 1e-9).abs()
}

/// Pairs every image with the sensor reading closest in time (ties go to the
/// earlier reading) and drops pairs further apart than `max_gap_s`. Several
/// images may share one reading.
pub fn align_nearest(images: &[DateTime<Utc>], series: &IrradianceSeries, max_gap_s: f64) -> Vec<Alignment> {
    let samples = series.samples();
    if samples.is_empty() {
        return Vec::new();
    }
    images
        .iter()
        .enumerate()
        .filter_map(|(image_index, &t)| {
            let after = samples.partition_point(|s| s.timestamp < t);
            let candidates = [after.checked_sub(1), (after < samples.len()).then_some(after)];
            let (series_index, gap_s) = candidates
                .into_iter()
                .flatten()
                .map(|i| (i, gap_seconds(t, samples[i].timestamp)))
                // strict < keeps the earlier candidate on ties
                .fold(None, |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 <= c.1 => Some(b),
                    _ => Some(c),
                })?;
            (gap_s <= max_gap_s).then_some(Alignment {
                image_index,
                series_index,
                gap_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub timestamp: DateTime<Utc>,
    /// Cosine-weighted relative luminance.
    pub luminance: f64,
    /// Measured irradiance, W/m².
    pub irradiance: f64,
    pub gap_s: f64,
}

/// Joins per-image luminance values with their nearest sensor readings.
pub fn pair_luminance(
    luminance: &[(DateTime<Utc>, f64)],
    series: &IrradianceSeries,
    max_gap_s: f64,
) -> Vec<PairedSample> {
    let times: Vec<_> = luminance.iter().map(|(t, _)| *t).collect();
    align_nearest(&times, series, max_gap_s)
        .into_iter()
        .map(|a| PairedSample {
            timestamp: luminance[a.image_index].0,
            luminance: luminance[a.image_index].1,
            irradiance: series.samples()[a.series_index].ghi,
            gap_s: a.gap_s,
        })
        .collect()
}

pub fn default_daylight_window() -> (NaiveTime, NaiveTime) {
    (
        NaiveTime::from_hms_opt(7, 0, 0).expect("valid time"),
        NaiveTime::from_hms_opt(19, 0, 0).expect("valid time"),
    )
}

/// Keeps pairs whose local wall-clock time lies in `[start, end]`.
pub fn filter_daylight(
    pairs: &[PairedSample],
    start: NaiveTime,
    end: NaiveTime,
    utc_offset: FixedOffset,
) -> Result<Vec<PairedSample>> {
    if start >= end {
        return Err(Error::InvalidWindow {
            start: start.to_string(),
            end: end.to_string(),
        });
    }
    Ok(pairs
        .iter()
        .filter(|p| {
            let local = p.timestamp.with_timezone(&utc_offset).time();
            start <= local && local <= end
        })
        .copied()
        .collect())
}

pub fn save_pairs(path: impl AsRef<Path>, pairs: &[PairedSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(PAIRS_COLUMNS)?;
    for p in pairs {
        wtr.write_record([
            format_timestamp(&p.timestamp),
            p.luminance.to_string(),
            p.irradiance.to_string(),
            p.gap_s.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PairedSample>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    check_header(&name, rdr.headers()?, &PAIRS_COLUMNS, 3)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            path: name.clone(),
            line,
            message,
        };
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("0")
                .parse::<f64>()
                .map_err(|e| err(format!("column {}: {e}", PAIRS_COLUMNS[i])))
        };
        let irradiance = num(2)?;
        if !(irradiance >= 0.0) {
            return Err(err(format!("irradiance {irradiance} must be non-negative")));
        }
        out.push(PairedSample {
            timestamp: parse_timestamp(&rec[0]).map_err(|e| err(format!("bad timestamp: {e}")))?,
            luminance: num(1)?,
            irradiance,
            gap_s: if rec.get(3).is_some_and(|s| !s.is_empty()) { num(3)? } else { 0.0 },
        });
    }
    Ok(out)
}
