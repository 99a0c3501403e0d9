//! Absolute phase → depth → point cloud.
//!
//! A linear phase-to-depth model stands in for full projector/camera
//! triangulation: depth is proportional to the deviation of the absolute
//! phase from a reference plane, and points are back-projected through an
//! ideal pinhole. The coefficients are configuration-driven, so a calibrated
//! gain can be dropped in without code changes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::{ScalarField, Units};
use crate::{Error, Result};

/// Reference phase: either a sampled field or the analytic plane
/// `a·x + b` (radians as a function of the pixel column).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferencePhase {
    /// Analytic carrier plane `a·x + b`.
    Plane { a: f64, b: f64 },
    /// Sampled reference field (same grid as the unwrapped input).
    Field { values: Vec<f64>, width: usize },
}

/// Linear depth model plus pinhole intrinsics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDepthModel {
    pub reference: ReferencePhase,
    /// Length units per radian of phase deviation.
    pub gain: f64,
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels.
    pub principal: [f64; 2],
}

impl PhaseDepthModel {
    /// Identity-like model: zero reference plane, unit gain, focal chosen so
    /// back-projected X/Y stay near pixel scale.
    pub fn simple(focal: f64, principal: [f64; 2]) -> PhaseDepthModel {
        PhaseDepthModel {
            reference: ReferencePhase::Plane { a: 0.0, b: 0.0 },
            gain: 1.0,
            focal,
            principal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain != 0.0) {
            return Err(Error::Parameter(format!(
                "depth gain must be finite and non-zero, got {}",
                self.gain
            )));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::Parameter(format!(
                "focal length must be positive, got {}",
                self.focal
            )));
        }
        if self.principal.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("principal point must be finite".into()));
        }
        if let ReferencePhase::Plane { a, b } = self.reference {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Parameter(
                    "reference plane coefficients must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    fn reference_at(&self, x: usize, y: usize, shape_width: usize) -> Result<f64> {
        match &self.reference {
            ReferencePhase::Plane { a, b } => Ok(a * x as f64 + b),
            ReferencePhase::Field { values, width } => {
                if *width != shape_width {
                    return Err(Error::ShapeMismatch(format!(
                        "reference field width {width} vs phase width {shape_width}"
                    )));
                }
                values
                    .get(y * width + x)
                    .copied()
                    .ok_or_else(|| Error::ShapeMismatch("reference field too short".into()))
            }
        }
    }
}

/// Depth from absolute phase: `z(p) = gain · (Φ(p) − Φ_ref(p))`, with the
/// validity mask carried through.
pub fn phase_to_depth(phi_abs: &ScalarField, model: &PhaseDepthModel) -> Result<ScalarField> {
    model.validate()?;
    if phi_abs.units() != Units::Radians {
        return Err(Error::Parameter(format!(
            "phase-to-depth input must be radians, got {:?}",
            phi_abs.units()
        )));
    }
    let shape = phi_abs.shape();
    if let ReferencePhase::Field { values, width } = &model.reference {
        if *width == 0 || values.len() != shape.len() || *width != shape.width {
            return Err(Error::ShapeMismatch(format!(
                "reference field {}x{} vs phase {}x{}",
                width,
                if *width == 0 { 0 } else { values.len() / width },
                shape.width,
                shape.height
            )));
        }
    }
    let mut depth = Vec::with_capacity(shape.len());
    for y in 0..shape.height {
        for x in 0..shape.width {
            let reference = model.reference_at(x, y, shape.width)?;
            depth.push(model.gain * (phi_abs.get(x, y) - reference));
        }
    }
    ScalarField::new(shape, depth, phi_abs.mask().to_vec(), Units::Length)
}

/// Write an ASCII PLY point cloud: back-projected `(X, Y, Z)` per valid
/// depth pixel, with an optional 8-bit `gray` attribute sampled from
/// `texture` (clamped to `[0, 1]` then scaled). Invalid pixels are omitted,
/// so the vertex count equals the valid-mask population.
///
/// Back-projection is the ideal pinhole: `X = (u − cx)·z/f`,
/// `Y = (v − cy)·z/f`, `Z = z`.
pub fn export_ply(
    depth: &ScalarField,
    texture: Option<&ScalarField>,
    model: &PhaseDepthModel,
    path: impl AsRef<Path>,
) -> Result<()> {
    model.validate()?;
    let path = path.as_ref();
    let shape = depth.shape();
    if let Some(tex) = texture {
        if tex.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "texture {}x{} vs depth {}x{}",
                tex.shape().width,
                tex.shape().height,
                shape.width,
                shape.height
            )));
        }
    }
    let count = depth.valid_count();
    let mut body = String::with_capacity(count * 40);
    let [cx, cy] = model.principal;
    for y in 0..shape.height {
        for x in 0..shape.width {
            if !depth.is_valid(x, y) {
                continue;
            }
            let z = depth.get(x, y);
            let px = (x as f64 - cx) * z / model.focal;
            let py = (y as f64 - cy) * z / model.focal;
            write!(body, "{px:.6} {py:.6} {z:.6}").expect("string write");
            if let Some(tex) = texture {
                let g = if tex.is_valid(x, y) {
                    (tex.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8
                } else {
                    0
                };
                write!(body, " {g}").expect("string write");
            }
            body.push('\n');
        }
    }
    let mut header = String::new();
    header.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(header, "element vertex {count}");
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if texture.is_some() {
        header.push_str("property uchar gray\n");
    }
    header.push_str("end_header\n");
    fs::write(path, header + &body).map_err(|e| Error::io(path, e))
}

/// Parse a PLY produced by [`export_ply`] back into vertex rows
/// `(x, y, z, optional gray)`. Intended for tests and round-trip checks; it
/// reads exactly the subset of ASCII PLY this module writes.
pub fn parse_ply(path: impl AsRef<Path>) -> Result<Vec<(f64, f64, f64, Option<u8>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let mut count: Option<usize> = None;
    let mut has_gray = false;
    let mut saw_magic = false;
    for line in lines.by_ref() {
        let line = line.trim();
        match line {
            "ply" => saw_magic = true,
            "end_header" => break,
            _ if line.starts_with("element vertex ") => {
                count = line
                    .rsplit(' ')
                    .next()
                    .and_then(|n| n.parse().ok())
                    .or(count);
            }
            "property uchar gray" => has_gray = true,
            _ => {}
        }
    }
    if !saw_magic {
        return Err(Error::format(path, "missing ply magic"));
    }
    let count = count.ok_or_else(|| Error::format(path, "missing vertex element"))?;
    let mut rows = Vec::with_capacity(count);
    for line in lines.take(count) {
        let mut parts = line.split_whitespace();
        let mut next_f = |name: &str| -> Result<f64> {
            parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad {name} field")))
        };
        let x = next_f("x")?;
        let y = next_f("y")?;
        let z = next_f("z")?;
        let gray = if has_gray {
            Some(
                parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::format(path, "bad gray field"))?,
            )
        } else {
            None
        };
        rows.push((x, y, z, gray));
    }
    if rows.len() != count {
        return Err(Error::format(
            path,
            format!("expected {count} vertices, found {}", rows.len()),
        ));
    }
    Ok(rows)
}
