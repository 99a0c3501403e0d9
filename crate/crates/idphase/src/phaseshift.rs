//! Three-step phase-shifting: synthesis of fringe images and their decoding.
//!
//! With ambient light `A`, fringe contrast `R` and absolute phase `Φ`, the
//! camera sees `I_k = A + R·cos(Φ + 2kπ/3)` for `k = 0, 1, 2`. The three
//! samples invert in closed form:
//!
//! ```text
//! √3 (I1 − I2) = −3R sin Φ          2 I0 − I1 − I2 = 3R cos Φ
//! ```
//!
//! so the wrapped phase is `−atan2(√3(I1−I2), 2I0−I1−I2)`, the ambient term
//! is the mean of the three images, and the contrast follows from the vector
//! norm. The sign flip keeps `decode ∘ synthesize` equal to [`wrap`].

use std::f64::consts::{PI, TAU};

use crate::raster::{GridShape, ScalarField, Units};
use crate::{Error, Result};

/// Reduces an angle to the half-open interval `(−π, π]`; `−π` lands on `π`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let y = x - TAU * (x / TAU).floor();
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Wraps every valid pixel of a phase field into `(−π, π]`.
pub fn wrap(phi: &ScalarField) -> ScalarField {
    let mut out = phi.clone();
    out.set_units(Units::Radians);
    let mask: Vec<bool> = out.mask().to_vec();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        if mask[i] {
            *v = wrap_angle(*v);
        }
    }
    out
}

/// Projector-pattern parameters: fringe wavelength in pixels, ambient level
/// `A` and contrast `R`, both in normalized intensity.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FringeParams {
    pub wavelength: f64,
    pub ambient: f64,
    pub modulation: f64,
}

impl Default for FringeParams {
    fn default() -> Self {
        FringeParams {
            wavelength: 32.0,
            ambient: 0.5,
            modulation: 0.4,
        }
    }
}

impl FringeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::Parameter(format!(
                "fringe wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.modulation.is_finite() && self.modulation > 0.0) {
            return Err(Error::Parameter(format!(
                "fringe modulation must be positive, got {}",
                self.modulation
            )));
        }
        if !self.ambient.is_finite() {
            return Err(Error::Parameter("fringe ambient must be finite".into()));
        }
        Ok(())
    }
}

/// The three phase-shifted intensity images.
#[derive(Debug, Clone)]
pub struct FringeTriple {
    pub images: [ScalarField; 3],
}

impl FringeTriple {
    pub fn shape(&self) -> GridShape {
        self.images[0].shape()
    }

    /// Simulates an 8-bit camera: each intensity clamped to `[0, 1]` and
    /// rounded to the nearest of 256 levels.
    pub fn quantized8(&self) -> FringeTriple {
        let mut images = self.images.clone();
        for img in &mut images {
            let mask: Vec<bool> = img.mask().to_vec();
            for (i, v) in img.values_mut().iter_mut().enumerate() {
                if mask[i] {
                    *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
                }
            }
        }
        FringeTriple { images }
    }
}

/// Renders the three fringe images of an absolute-phase field.
pub fn synthesize_fringes(phi_abs: &ScalarField, params: &FringeParams) -> Result<FringeTriple> {
    params.validate()?;
    let shape = phi_abs.shape();
    let make = |step: usize| -> ScalarField {
        let offset = 2.0 * step as f64 * PI / 3.0;
        let mut values = Vec::with_capacity(shape.len());
        for i in 0..shape.len() {
            let p = phi_abs.values()[i];
            values.push(if phi_abs.mask()[i] {
                params.ambient + params.modulation * (p + offset).cos()
            } else {
                0.0
            });
        }
        ScalarField::new(shape, values, phi_abs.mask().to_vec(), Units::Intensity)
            .expect("same shape as input")
    };
    Ok(FringeTriple {
        images: [make(0), make(1), make(2)],
    })
}

/// Wrapped phase, ambient and contrast recovered from a fringe triple.
#[derive(Debug, Clone)]
pub struct Decoded {
    /// Wrapped phase in `(−π, π]`; pixels with contrast below the decode
    /// threshold are masked out.
    pub wrapped: ScalarField,
    pub ambient: ScalarField,
    pub modulation: ScalarField,
}

/// Default contrast threshold below which a pixel is considered unlit.
pub const MODULATION_THRESHOLD: f64 = 0.02;

/// Inverts [`synthesize_fringes`] pixel-wise.
pub fn decode(fringes: &FringeTriple, mask_threshold: f64) -> Result<Decoded> {
    let shape = fringes.shape();
    for img in &fringes.images[1..] {
        if img.shape() != shape {
            return Err(Error::ShapeMismatch(
                "fringe images differ in shape".to_string(),
            ));
        }
    }
    if !(mask_threshold.is_finite() && mask_threshold >= 0.0) {
        return Err(Error::Parameter(format!(
            "mask threshold must be non-negative, got {mask_threshold}"
        )));
    }
    let mut phase = Vec::with_capacity(shape.len());
    let mut amb = Vec::with_capacity(shape.len());
    let mut contrast = Vec::with_capacity(shape.len());
    let mut lit = Vec::with_capacity(shape.len());
    let mut input_mask = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        let valid = (0..3).all(|k| fringes.images[k].mask()[i]);
        input_mask.push(valid);
        if !valid {
            phase.push(0.0);
            amb.push(0.0);
            contrast.push(0.0);
            lit.push(false);
            continue;
        }
        let (i0, i1, i2) = (
            fringes.images[0].values()[i],
            fringes.images[1].values()[i],
            fringes.images[2].values()[i],
        );
        let num = 3.0_f64.sqrt() * (i1 - i2);
        let den = 2.0 * i0 - i1 - i2;
        phase.push(wrap_angle(-num.atan2(den)));
        amb.push((i0 + i1 + i2) / 3.0);
        let r = num.hypot(den) / 3.0;
        contrast.push(r);
        lit.push(r >= mask_threshold);
    }
    Ok(Decoded {
        wrapped: ScalarField::new(shape, phase, lit, Units::Radians)?,
        ambient: ScalarField::new(shape, amb, input_mask.clone(), Units::Intensity)?,
        modulation: ScalarField::new(shape, contrast, input_mask, Units::Intensity)?,
    })
}
