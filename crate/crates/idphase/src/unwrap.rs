//! Energy-minimizing phase unwrapping.
//!
//! The absolute phase is `Φ = φ + 2πk` with an integer count `k` per pixel.
//! We minimize the quadratic smoothness energy
//!
//! ```text
//! E(k) = Σ_edges (φ(p) − φ(q) + 2π(k(p) − k(q)))²
//! ```
//!
//! over 4-neighbor edges between valid pixels. A move that offers every
//! pixel the binary choice "add δ to k or keep it" has submodular pairwise
//! terms for any δ, so each such *jump move* is solved exactly by a min-cut;
//! alternating δ = +1, −1 until no move improves reaches the global optimum
//! of this convex-interaction energy. The hierarchical driver first solves
//! a phasor-downsampled pyramid level and refines upward, which cuts the
//! number of expensive full-resolution cuts to a handful.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use crate::mincut::{minimize_grid_energy, GridEnergy, PairwiseTable};
use crate::phaseshift::wrap_angle;
use crate::raster::{GridShape, LabelField, ScalarField, Units};
use crate::{Error, Result};

/// Energy of one edge relative to the `k ≡ 0` baseline:
/// `edge_energy + dphi²  ==  (dphi + 2π(kp − kq))²`.
#[inline]
pub fn edge_energy(dphi: f64, kp: i32, kq: i32) -> f64 {
    let dk = (kp - kq) as f64;
    4.0 * PI * dphi * dk + 4.0 * PI * PI * dk * dk
}

#[inline]
fn full_edge_energy(dphi: f64, dk: i32) -> f64 {
    let d = dphi + TAU * dk as f64;
    d * d
}

/// Total smoothness energy `Σ (Φ(p) − Φ(q))²` over valid 4-neighbor edges.
pub fn total_energy(phi: &ScalarField, k: &LabelField) -> Result<f64> {
    let shape = phi.shape();
    if k.shape() != shape {
        return Err(Error::ShapeMismatch(
            "label field does not match phase field".to_string(),
        ));
    }
    let (w, h) = (shape.width, shape.height);
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !phi.is_valid(x, y) {
                continue;
            }
            if x + 1 < w && phi.is_valid(x + 1, y) {
                total += full_edge_energy(
                    phi.get(x, y) - phi.get(x + 1, y),
                    k.get(x, y) - k.get(x + 1, y),
                );
            }
            if y + 1 < h && phi.is_valid(x, y + 1) {
                total += full_edge_energy(
                    phi.get(x, y) - phi.get(x, y + 1),
                    k.get(x, y) - k.get(x, y + 1),
                );
            }
        }
    }
    Ok(total)
}

fn valid_edge_count(phi: &ScalarField) -> usize {
    let (w, h) = (phi.shape().width, phi.shape().height);
    let mut edges = 0;
    for y in 0..h {
        for x in 0..w {
            if !phi.is_valid(x, y) {
                continue;
            }
            if x + 1 < w && phi.is_valid(x + 1, y) {
                edges += 1;
            }
            if y + 1 < h && phi.is_valid(x, y + 1) {
                edges += 1;
            }
        }
    }
    edges
}

/// Knobs for the unwrappers.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnwrapConfig {
    /// Counts are clamped to `|k| ≤ k_max`; size it to the number of fringe
    /// periods expected across the field.
    pub k_max: i32,
    /// Upper bound on (+1, −1) move pairs per pyramid level.
    pub max_sweeps: usize,
    /// Per-edge energy decrease below which a sweep pair counts as
    /// converged.
    pub epsilon: f64,
    /// Pyramid depth for the hierarchical driver (1 = single level).
    pub levels: usize,
}

impl Default for UnwrapConfig {
    fn default() -> Self {
        UnwrapConfig {
            k_max: 32,
            max_sweeps: 200,
            epsilon: 1e-6,
            levels: 3,
        }
    }
}

impl UnwrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::Parameter(format!("k_max must be ≥ 1, got {}", self.k_max)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Parameter("max_sweeps must be ≥ 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Parameter(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.levels == 0 {
            return Err(Error::Parameter("levels must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Output of an unwrapper.
#[derive(Debug, Clone)]
pub struct UnwrapResult {
    pub k: LabelField,
    /// `φ + 2πk`; congruent to the wrapped input at every valid pixel,
    /// except for the least-squares baseline which reports its residual.
    pub phi_abs: ScalarField,
    pub energy: f64,
    /// Number of min-cut solves (or growth steps for the baselines).
    pub iterations: usize,
    pub seconds: f64,
    /// RMS deviation of `phi_abs − φ` from multiples of 2π; `None` for
    /// methods that are congruent by construction.
    pub congruence_residual: Option<f64>,
}

pub(crate) fn compose_result(
    phi: &ScalarField,
    k: LabelField,
    energy: f64,
    iterations: usize,
    seconds: f64,
) -> UnwrapResult {
    let shape = phi.shape();
    let mut abs = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        abs.push(phi.values()[i] + TAU * k.labels()[i] as f64);
    }
    let phi_abs = ScalarField::new(shape, abs, k.mask().to_vec(), Units::Radians)
        .expect("finite phase plus integer multiple of 2π");
    UnwrapResult {
        k,
        phi_abs,
        energy,
        iterations,
        seconds,
        congruence_residual: None,
    }
}

/// One exact binary move: every valid pixel may add `delta` to its count
/// (staying within `±k_max`) or keep it. Returns the new counts and whether
/// the energy strictly decreased; without an improvement the input counts
/// are returned unchanged.
pub fn jump_move(
    phi: &ScalarField,
    k: &LabelField,
    delta: i32,
    config: &UnwrapConfig,
) -> Result<(LabelField, bool)> {
    config.validate()?;
    if delta != 1 && delta != -1 {
        return Err(Error::Parameter(format!("jump delta must be ±1, got {delta}")));
    }
    let shape = phi.shape();
    if k.shape() != shape {
        return Err(Error::ShapeMismatch(
            "label field does not match phase field".to_string(),
        ));
    }
    let (w, h) = (shape.width, shape.height);
    let movable: Vec<bool> = (0..shape.len())
        .map(|i| {
            let (x, y) = (i % w, i / w);
            phi.is_valid(x, y) && (k.get(x, y) + delta).abs() <= config.k_max
        })
        .collect();

    let mut energy = GridEnergy::new(shape);
    for y in 0..h {
        for x in 0..w {
            let p = shape.idx(x, y);
            if !phi.is_valid(x, y) {
                continue;
            }
            for (qx, qy) in [(x + 1, y), (x, y + 1)] {
                if qx >= w || qy >= h || !phi.is_valid(qx, qy) {
                    continue;
                }
                let q = shape.idx(qx, qy);
                let dphi = phi.get(x, y) - phi.get(qx, qy);
                let dk = k.get(x, y) - k.get(qx, qy);
                match (movable[p], movable[q]) {
                    (true, true) => {
                        let table = PairwiseTable {
                            e00: full_edge_energy(dphi, dk),
                            e01: full_edge_energy(dphi, dk - delta),
                            e10: full_edge_energy(dphi, dk + delta),
                            e11: full_edge_energy(dphi, dk),
                        };
                        if qx == x + 1 {
                            energy.horizontal[p] = Some(table);
                        } else {
                            energy.vertical[p] = Some(table);
                        }
                    }
                    (true, false) => {
                        energy.unary[p][0] += full_edge_energy(dphi, dk);
                        energy.unary[p][1] += full_edge_energy(dphi, dk + delta);
                    }
                    (false, true) => {
                        energy.unary[q][0] += full_edge_energy(dphi, dk);
                        energy.unary[q][1] += full_edge_energy(dphi, dk - delta);
                    }
                    (false, false) => {} // constant under this move
                }
            }
        }
    }

    let (move_bits, _) = minimize_grid_energy(&energy)?;
    let mut next = k.clone();
    for i in 0..shape.len() {
        if movable[i] && move_bits[i] {
            next.labels_mut()[i] += delta;
        }
    }
    let before = total_energy(phi, k)?;
    let after = total_energy(phi, &next)?;
    if after < before {
        Ok((next, true))
    } else {
        Ok((k.clone(), false))
    }
}

/// Runs (+1, −1) move pairs until the energy decrease of a pair drops to
/// `epsilon` per valid edge, accumulating the min-cut count.
fn sweep_to_convergence(
    phi: &ScalarField,
    mut k: LabelField,
    config: &UnwrapConfig,
    iterations: &mut usize,
) -> Result<(LabelField, f64)> {
    let threshold = config.epsilon * valid_edge_count(phi) as f64;
    let mut energy = total_energy(phi, &k)?;
    for _ in 0..config.max_sweeps {
        let before = energy;
        let (k1, _) = jump_move(phi, &k, 1, config)?;
        *iterations += 1;
        let (k2, _) = jump_move(phi, &k1, -1, config)?;
        *iterations += 1;
        k = k2;
        energy = total_energy(phi, &k)?;
        if before - energy <= threshold {
            break;
        }
    }
    Ok((k, energy))
}

/// Single-level graph-cut unwrapping from a zero count field.
pub fn unwrap_graphcut(phi: &ScalarField, config: &UnwrapConfig) -> Result<UnwrapResult> {
    config.validate()?;
    let start = Instant::now();
    let mut k = LabelField::new(phi.shape(), vec![0; phi.shape().len()], phi.mask().to_vec())?;
    let mut iterations = 0;
    (k, _) = {
        let (k2, e) = sweep_to_convergence(phi, k, config, &mut iterations)?;
        (k2, e)
    };
    let energy = total_energy(phi, &k)?;
    Ok(compose_result(phi, k, energy, iterations, start.elapsed().as_secs_f64()))
}

/// Coarse-to-fine pyramid of wrapped-phase fields. Each level halves both
/// dimensions (rounding up); a coarse pixel is the argument of the mean
/// phasor `e^{iφ}` over its valid 2×2 children, and is masked only when no
/// child is valid. The coarsest level must stay at least 8×8.
pub fn build_pyramid(phi: &ScalarField, levels: usize) -> Result<Vec<ScalarField>> {
    if levels == 0 {
        return Err(Error::Parameter("pyramid needs at least one level".into()));
    }
    let mut out = vec![phi.clone()];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (pw, ph) = (prev.shape().width, prev.shape().height);
        let (nw, nh) = (pw.div_ceil(2), ph.div_ceil(2));
        if nw < 8 || nh < 8 {
            return Err(Error::Parameter(format!(
                "too many pyramid levels: level {} would be {}x{}, minimum is 8x8",
                out.len(),
                nw,
                nh
            )));
        }
        let shape = GridShape::new(nw, nh)?;
        let mut values = Vec::with_capacity(shape.len());
        let mut mask = Vec::with_capacity(shape.len());
        for cy in 0..nh {
            for cx in 0..nw {
                let (mut sx, mut sy, mut any) = (0.0, 0.0, false);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (fx, fy) = (2 * cx + dx, 2 * cy + dy);
                        if fx < pw && fy < ph && prev.is_valid(fx, fy) {
                            let v = prev.get(fx, fy);
                            sx += v.cos();
                            sy += v.sin();
                            any = true;
                        }
                    }
                }
                values.push(if any { wrap_angle(sy.atan2(sx)) } else { 0.0 });
                mask.push(any);
            }
        }
        out.push(ScalarField::new(shape, values, mask, Units::Radians)?);
    }
    Ok(out)
}

/// Nearest-neighbor label upsampling: each fine pixel takes its parent's
/// count, masked by the fine level's own validity.
fn upsample_labels(coarse: &LabelField, fine_phi: &ScalarField) -> LabelField {
    let shape = fine_phi.shape();
    let mut labels = Vec::with_capacity(shape.len());
    let mut mask = Vec::with_capacity(shape.len());
    for y in 0..shape.height {
        for x in 0..shape.width {
            let (cx, cy) = (
                (x / 2).min(coarse.shape().width - 1),
                (y / 2).min(coarse.shape().height - 1),
            );
            let parent_ok = coarse.is_valid(cx, cy);
            labels.push(if parent_ok { coarse.get(cx, cy) } else { 0 });
            mask.push(fine_phi.is_valid(x, y) && parent_ok);
        }
    }
    LabelField::new(shape, labels, mask).expect("matching buffers")
}

/// Coarse-to-fine unwrapping: solve the coarsest pyramid level with jump
/// moves, then upsample the counts and re-converge at each finer level.
/// The requested depth shrinks automatically so the coarsest level keeps
/// the 8×8 minimum.
pub fn unwrap_hierarchical(phi: &ScalarField, config: &UnwrapConfig) -> Result<UnwrapResult> {
    config.validate()?;
    let start = Instant::now();
    let (w, h) = (phi.shape().width, phi.shape().height);
    let mut levels = 1;
    let (mut lw, mut lh) = (w, h);
    while levels < config.levels && lw.div_ceil(2) >= 8 && lh.div_ceil(2) >= 8 {
        lw = lw.div_ceil(2);
        lh = lh.div_ceil(2);
        levels += 1;
    }
    let pyramid = build_pyramid(phi, levels)?;
    let coarsest = pyramid.last().unwrap();
    let mut iterations = 0;
    let zero = LabelField::new(
        coarsest.shape(),
        vec![0; coarsest.shape().len()],
        coarsest.mask().to_vec(),
    )?;
    let (mut k, _) = sweep_to_convergence(coarsest, zero, config, &mut iterations)?;
    for level in (0..pyramid.len() - 1).rev() {
        let fine = &pyramid[level];
        let seeded = upsample_labels(&k, fine);
        let (refined, _) = sweep_to_convergence(fine, seeded, config, &mut iterations)?;
        k = refined;
    }
    let energy = total_energy(phi, &k)?;
    Ok(compose_result(phi, k, energy, iterations, start.elapsed().as_secs_f64()))
}
