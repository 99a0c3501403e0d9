//! Row-major raster grids and their on-disk formats.
//!
//! Everything downstream (decoding, unwrapping, warping) speaks in terms of
//! [`ScalarField`] / [`LabelField`]: a width×height grid, origin at the top
//! left, `x` growing rightwards and `y` downwards, plus a validity mask.
//! Floating-point grids round-trip through PFM files (32-bit floats), masks
//! through a packed-bit sidecar, and 8/16-bit images through binary PGM.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Grid dimensions. Both sides are at least 2 so that every pixel has a
/// horizontal and a vertical neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
}

impl GridShape {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Parameter(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(GridShape { width, height })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // invariant: at least 2x2
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    /// True when the real-valued point lies inside the sampling rectangle
    /// spanned by the outermost pixel centers.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

/// What the numbers in a [`ScalarField`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Radians,
    Intensity,
    Density,
    Length,
    #[default]
    Dimensionless,
}

/// A real-valued grid with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: GridShape,
    values: Vec<f64>,
    mask: Vec<bool>,
    units: Units,
}

impl ScalarField {
    pub fn new(shape: GridShape, values: Vec<f64>, mask: Vec<bool>, units: Units) -> Result<Self> {
        if values.len() != shape.len() || mask.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "field buffers ({}, {}) do not match shape {}x{}",
                values.len(),
                mask.len(),
                shape.width,
                shape.height
            )));
        }
        for i in 0..values.len() {
            if mask[i] && !values[i].is_finite() {
                return Err(Error::Parameter(format!(
                    "non-finite value {} at valid pixel ({}, {})",
                    values[i],
                    i % shape.width,
                    i / shape.width
                )));
            }
        }
        Ok(ScalarField {
            shape,
            values,
            mask,
            units,
        })
    }

    /// Fully-valid field with every pixel set to `value`.
    pub fn constant(shape: GridShape, value: f64, units: Units) -> Self {
        ScalarField {
            shape,
            values: vec![value; shape.len()],
            mask: vec![true; shape.len()],
            units,
        }
    }

    /// Fully-valid field built pixel-by-pixel from `f(x, y)`.
    pub fn from_fn(shape: GridShape, units: Units, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                values.push(f(x, y));
            }
        }
        ScalarField {
            shape,
            values,
            mask: vec![true; shape.len()],
            units,
        }
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn units(&self) -> Units {
        self.units
    }

    pub fn set_units(&mut self, units: Units) {
        self.units = units;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.shape.idx(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[self.shape.idx(x, y)]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.shape.idx(x, y);
        self.values[i] = value;
    }

    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        let i = self.shape.idx(x, y);
        self.mask[i] = valid;
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Bilinear interpolation at a real-valued point, renormalizing the
    /// weights over valid neighbors. `Ok(None)` means every contributing
    /// neighbor is invalid.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<Option<f64>> {
        let (w, h) = (self.shape.width, self.shape.height);
        if !self.shape.contains_point(x, y) {
            return Err(Error::OutOfDomain {
                x,
                y,
                width: w,
                height: h,
            });
        }
        let x0 = (x.floor() as usize).min(w - 2);
        let y0 = (y.floor() as usize).min(h - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let corners = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ];
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (cx, cy, wgt) in corners {
            if self.mask[self.shape.idx(cx, cy)] {
                acc += wgt * self.values[self.shape.idx(cx, cy)];
                wsum += wgt;
            }
        }
        if wsum <= 1e-12 {
            return Ok(None);
        }
        Ok(Some(acc / wsum))
    }

    /// Value of the nearest pixel, or `None` when that pixel is invalid.
    pub fn sample_nearest(&self, x: f64, y: f64) -> Result<Option<f64>> {
        let (w, h) = (self.shape.width, self.shape.height);
        if !self.shape.contains_point(x, y) {
            return Err(Error::OutOfDomain {
                x,
                y,
                width: w,
                height: h,
            });
        }
        let cx = (x.round() as usize).min(w - 1);
        let cy = (y.round() as usize).min(h - 1);
        let i = self.shape.idx(cx, cy);
        Ok(self.mask[i].then(|| self.values[i]))
    }
}

/// An integer-valued grid (fringe counts) with a validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    shape: GridShape,
    labels: Vec<i32>,
    mask: Vec<bool>,
}

impl LabelField {
    pub fn new(shape: GridShape, labels: Vec<i32>, mask: Vec<bool>) -> Result<Self> {
        if labels.len() != shape.len() || mask.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "label buffers ({}, {}) do not match shape {}x{}",
                labels.len(),
                mask.len(),
                shape.width,
                shape.height
            )));
        }
        Ok(LabelField {
            shape,
            labels,
            mask,
        })
    }

    pub fn zeros(shape: GridShape) -> Self {
        LabelField {
            shape,
            labels: vec![0; shape.len()],
            mask: vec![true; shape.len()],
        }
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.labels[self.shape.idx(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, label: i32) {
        let i = self.shape.idx(x, y);
        self.labels[i] = label;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[self.shape.idx(x, y)]
    }

    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        let i = self.shape.idx(x, y);
        self.mask[i] = valid;
    }

    #[inline]
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    #[inline]
    pub fn labels_mut(&mut self) -> &mut [i32] {
        &mut self.labels
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Nearest-pixel label lookup, `None` when the pixel is invalid.
    pub fn sample_nearest(&self, x: f64, y: f64) -> Result<Option<i32>> {
        let (w, h) = (self.shape.width, self.shape.height);
        if !self.shape.contains_point(x, y) {
            return Err(Error::OutOfDomain {
                x,
                y,
                width: w,
                height: h,
            });
        }
        let cx = (x.round() as usize).min(w - 1);
        let cy = (y.round() as usize).min(h - 1);
        let i = self.shape.idx(cx, cy);
        Ok(self.mask[i].then(|| self.labels[i]))
    }
}

// ---------------------------------------------------------------------------
// PFM (portable float map), grayscale "Pf" and 3-channel "PF" variants.
// Payload is little-endian f32, rows stored top-to-bottom in grid order.
// ---------------------------------------------------------------------------

const PFM_SCALE: f32 = -1.0; // negative scale marks little-endian payload
const MASK_MAGIC: &[u8] = b"MK1\n";

/// Value written at invalid pixels when saving.
pub const MASK_SENTINEL: f64 = 0.0;

fn mask_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".mask");
    PathBuf::from(os)
}

/// Reads whitespace-separated ASCII header tokens, then leaves the cursor at
/// the start of the binary payload (one whitespace byte after the last token).
fn read_header_tokens(bytes: &[u8], count: usize, path: &Path) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if pos >= bytes.len() {
        return Err(Error::format(path, "missing payload"));
    }
    Ok((tokens, pos + 1)) // skip the single whitespace after the last token
}

fn parse_dims(tokens: &[String], path: &Path) -> Result<GridShape> {
    let width: usize = tokens[0]
        .parse()
        .map_err(|_| Error::format(path, format!("bad width token {:?}", tokens[0])))?;
    let height: usize = tokens[1]
        .parse()
        .map_err(|_| Error::format(path, format!("bad height token {:?}", tokens[1])))?;
    GridShape::new(width, height)
}

fn write_pfm_payload(path: &Path, magic: &str, shape: GridShape, channels: &[&[f64]]) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + shape.len() * 4 * channels.len());
    buf.extend_from_slice(magic.as_bytes());
    buf.extend_from_slice(format!("\n{} {}\n{}\n", shape.width, shape.height, PFM_SCALE).as_bytes());
    for i in 0..shape.len() {
        for ch in channels {
            buf.extend_from_slice(&(ch[i] as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_pfm_payload(path: &Path, expect_magic: &str, nch: usize) -> Result<(GridShape, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (tokens, payload_at) = read_header_tokens(&bytes, 4, path)?;
    if tokens[0] != expect_magic {
        return Err(Error::format(
            path,
            format!("expected magic {expect_magic:?}, found {:?}", tokens[0]),
        ));
    }
    let shape = parse_dims(&tokens[1..3], path)?;
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| Error::format(path, format!("bad scale token {:?}", tokens[3])))?;
    if scale >= 0.0 {
        return Err(Error::format(
            path,
            "big-endian payload (non-negative scale) is not supported",
        ));
    }
    let need = shape.len() * 4 * nch;
    let payload = &bytes[payload_at..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            format!("payload holds {} bytes, expected {need}", payload.len()),
        ));
    }
    let mut channels = vec![Vec::with_capacity(shape.len()); nch];
    for i in 0..shape.len() {
        for (c, ch) in channels.iter_mut().enumerate() {
            let at = (i * nch + c) * 4;
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            ch.push(v as f64);
        }
    }
    Ok((shape, channels))
}

/// Saves a field as grayscale PFM; a packed-bit sidecar `<path>.mask` is
/// written only when some pixel is invalid, and invalid pixels are stored as
/// [`MASK_SENTINEL`].
pub fn save_field(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shape = field.shape();
    let sanitized: Vec<f64> = field
        .values
        .iter()
        .zip(&field.mask)
        .map(|(&v, &m)| if m { v } else { MASK_SENTINEL })
        .collect();
    write_pfm_payload(path, "Pf", shape, &[&sanitized])?;
    if field.mask.iter().any(|&m| !m) {
        save_mask(&field.mask, shape, &mask_path(path))?;
    } else {
        // stale sidecars would silently mask pixels on the next load
        let mp = mask_path(path);
        if mp.exists() {
            fs::remove_file(&mp).map_err(|e| Error::io(&mp, e))?;
        }
    }
    Ok(())
}

/// Loads a grayscale PFM, applying the `<path>.mask` sidecar when present.
/// Non-finite payload values are rejected with their pixel position.
pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let (shape, mut channels) = read_pfm_payload(path, "Pf", 1)?;
    let values = channels.pop().unwrap();
    let mp = mask_path(path);
    let mask = if mp.exists() {
        load_mask(&mp, shape)?
    } else {
        vec![true; shape.len()]
    };
    for i in 0..values.len() {
        if mask[i] && !values[i].is_finite() {
            return Err(Error::format(
                path,
                format!(
                    "non-finite value at pixel ({}, {})",
                    i % shape.width,
                    i / shape.width
                ),
            ));
        }
    }
    ScalarField::new(shape, values, mask, Units::Dimensionless)
}

/// Saves interleaved 3-channel float data (used for coordinate maps).
pub fn save_pfm3(
    shape: GridShape,
    channels: [&[f64]; 3],
    mask: &[bool],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if channels.iter().any(|c| c.len() != shape.len()) || mask.len() != shape.len() {
        return Err(Error::ShapeMismatch(
            "channel buffers do not match shape".to_string(),
        ));
    }
    let sanitize = |ch: &[f64]| -> Vec<f64> {
        ch.iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v } else { MASK_SENTINEL })
            .collect()
    };
    let (c0, c1, c2) = (
        sanitize(channels[0]),
        sanitize(channels[1]),
        sanitize(channels[2]),
    );
    write_pfm_payload(path, "PF", shape, &[&c0, &c1, &c2])?;
    if mask.iter().any(|&m| !m) {
        save_mask(mask, shape, &mask_path(path))?;
    }
    Ok(())
}

/// Loads interleaved 3-channel float data plus the sidecar mask.
pub fn load_pfm3(path: impl AsRef<Path>) -> Result<(GridShape, [Vec<f64>; 3], Vec<bool>)> {
    let path = path.as_ref();
    let (shape, mut channels) = read_pfm_payload(path, "PF", 3)?;
    let c2 = channels.pop().unwrap();
    let c1 = channels.pop().unwrap();
    let c0 = channels.pop().unwrap();
    let mp = mask_path(path);
    let mask = if mp.exists() {
        load_mask(&mp, shape)?
    } else {
        vec![true; shape.len()]
    };
    Ok((shape, [c0, c1, c2], mask))
}

fn save_mask(mask: &[bool], shape: GridShape, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + mask.len() / 8 + 1);
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(format!("{} {}\n", shape.width, shape.height).as_bytes());
    let mut byte = 0u8;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            byte |= 1 << (7 - (i % 8));
        }
        if i % 8 == 7 {
            buf.push(byte);
            byte = 0;
        }
    }
    if mask.len() % 8 != 0 {
        buf.push(byte);
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn load_mask(path: &Path, shape: GridShape) -> Result<Vec<bool>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(MASK_MAGIC) {
        return Err(Error::format(path, "bad mask magic"));
    }
    let (tokens, payload_at) = read_header_tokens(&bytes[MASK_MAGIC.len()..], 2, path)?;
    let file_shape = parse_dims(&tokens, path)?;
    if file_shape != shape {
        return Err(Error::ShapeMismatch(format!(
            "mask sidecar is {}x{}, field is {}x{}",
            file_shape.width, file_shape.height, shape.width, shape.height
        )));
    }
    let payload = &bytes[MASK_MAGIC.len() + payload_at..];
    let need = shape.len().div_ceil(8);
    if payload.len() < need {
        return Err(Error::format(path, "mask payload too short"));
    }
    let mut mask = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        mask.push(payload[i / 8] & (1 << (7 - (i % 8))) != 0);
    }
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Binary PGM (P5), 8-bit and 16-bit (big-endian) variants.
// ---------------------------------------------------------------------------

/// Loads a binary PGM (`P5`), normalizing values into `[0, 1]` by maxval.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stripped = strip_pgm_comments(&bytes);
    let (tokens, payload_at) = read_header_tokens(&stripped, 4, path)?;
    if tokens[0] != "P5" {
        return Err(Error::format(
            path,
            format!("expected magic \"P5\", found {:?}", tokens[0]),
        ));
    }
    let shape = parse_dims(&tokens[1..3], path)?;
    let maxval: u32 = tokens[3]
        .parse()
        .map_err(|_| Error::format(path, format!("bad maxval token {:?}", tokens[3])))?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}")));
    }
    let wide = maxval > 255;
    let need = shape.len() * if wide { 2 } else { 1 };
    let payload = &stripped[payload_at..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            format!("payload holds {} bytes, expected {need}", payload.len()),
        ));
    }
    let mut values = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        let raw = if wide {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as f64
        } else {
            payload[i] as f64
        };
        values.push(raw / maxval as f64);
    }
    ScalarField::new(shape, values, vec![true; shape.len()], Units::Intensity)
}

fn strip_pgm_comments(bytes: &[u8]) -> Vec<u8> {
    // Comments run from '#' to end of line and may appear between header
    // tokens. Only the header region can contain them; scanning stops once
    // four tokens have been consumed keeps binary payload intact.
    let mut out = Vec::with_capacity(bytes.len());
    let mut tokens = 0;
    let mut pos = 0;
    let mut in_token = false;
    while pos < bytes.len() && tokens < 4 {
        let b = bytes[pos];
        if b == b'#' && !in_token {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        if b.is_ascii_whitespace() {
            if in_token {
                tokens += 1;
                in_token = false;
            }
        } else {
            in_token = true;
        }
        out.push(b);
        pos += 1;
    }
    out.extend_from_slice(&bytes[pos..]);
    out
}

/// Saves values clamped from `[0, 1]` as an 8-bit binary PGM.
pub fn save_pgm8(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shape = field.shape();
    let mut buf = Vec::with_capacity(32 + shape.len());
    buf.extend_from_slice(format!("P5\n{} {}\n255\n", shape.width, shape.height).as_bytes());
    for i in 0..shape.len() {
        let v = if field.mask[i] { field.values[i] } else { 0.0 };
        buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Saves raw 16-bit samples (big-endian payload, maxval 65535).
pub fn save_pgm16(shape: GridShape, samples: &[u16], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if samples.len() != shape.len() {
        return Err(Error::ShapeMismatch(
            "sample buffer does not match shape".to_string(),
        ));
    }
    let mut buf = Vec::with_capacity(32 + shape.len() * 2);
    buf.extend_from_slice(format!("P5\n{} {}\n65535\n", shape.width, shape.height).as_bytes());
    for &s in samples {
        buf.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
