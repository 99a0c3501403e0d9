//! Classical unwrappers used as comparison points: Itoh scanline
//! integration, Goldstein branch cuts, quality-guided region growing, and an
//! unweighted least-squares Poisson solve.

use std::collections::BinaryHeap;
use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::time::Instant;

use crate::error::Result;
use crate::phaseshift::wrap_angle;
use crate::raster::{GridShape, LabelField, ScalarField, Units};
use crate::spectral::PoissonSolver;
use crate::unwrap::{compose_result, total_energy, UnwrapResult};

/// Integer count step implied by crossing one edge: unwrapping adds the
/// wrapped difference, so the count changes by `(wrap(d) − d)/2π`, which is an
/// exact integer.
#[inline]
fn edge_count_step(d: f64) -> i32 {
    ((wrap_angle(d) - d) / TAU).round() as i32
}

/// Total energy restricted to pixels the method actually labeled.
fn masked_energy(phi: &ScalarField, k: &LabelField) -> Result<f64> {
    let shape = phi.shape();
    let mut restricted = phi.clone();
    for y in 0..shape.height {
        for x in 0..shape.width {
            if !k.is_valid(x, y) {
                restricted.set_valid(x, y, false);
            }
        }
    }
    total_energy(&restricted, k)
}

/// Scanline integrator: unwraps along row 0, then down every column. Exact
/// when every neighbor difference of the true phase is below π, and the
/// fastest possible baseline; a single bad pixel in row 0 corrupts every
/// column to its right.
///
/// Invalid pixels stay invalid; the chain continues from the most recent
/// valid pixel on the scan path, and a column with no valid anchor above
/// restarts at count zero.
pub fn unwrap_itoh(phi: &ScalarField) -> Result<UnwrapResult> {
    let start = Instant::now();
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let mut k = LabelField::zeros(shape);
    let mut mask = vec![false; shape.len()];

    // Row 0, left to right.
    let mut prev: Option<usize> = None;
    for x in 0..w {
        if !phi.is_valid(x, 0) {
            continue;
        }
        let idx = shape.idx(x, 0);
        if let Some(p) = prev {
            let step = edge_count_step(phi.values()[idx] - phi.values()[p]);
            k.labels_mut()[idx] = k.labels()[p] + step;
        }
        mask[idx] = true;
        prev = Some(idx);
    }

    // Each column, top to bottom, anchored at its row-0 value.
    for x in 0..w {
        let mut prev: Option<usize> = if phi.is_valid(x, 0) {
            Some(shape.idx(x, 0))
        } else {
            None
        };
        for y in 1..h {
            if !phi.is_valid(x, y) {
                continue;
            }
            let idx = shape.idx(x, y);
            if let Some(p) = prev {
                let step = edge_count_step(phi.values()[idx] - phi.values()[p]);
                k.labels_mut()[idx] = k.labels()[p] + step;
            }
            mask[idx] = true;
            prev = Some(idx);
        }
    }

    let k = LabelField::new(shape, k.labels().to_vec(), mask)?;
    let energy = masked_energy(phi, &k)?;
    Ok(compose_result(phi, k, energy, 0, start.elapsed().as_secs_f64()))
}

/// Winding charges of the wrapped gradient around every elementary 2×2 loop.
/// The loop grid is one smaller than the pixel grid in each direction.
#[derive(Debug, Clone)]
pub struct ResidueField {
    loop_width: usize,
    loop_height: usize,
    charges: Vec<i32>,
    mask: Vec<bool>,
}

impl ResidueField {
    pub fn loop_width(&self) -> usize {
        self.loop_width
    }

    pub fn loop_height(&self) -> usize {
        self.loop_height
    }

    pub fn charge(&self, x: usize, y: usize) -> i32 {
        self.charges[y * self.loop_width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.loop_width + x]
    }

    pub fn charges(&self) -> &[i32] {
        &self.charges
    }

    /// Net charge over valid loops.
    pub fn total_charge(&self) -> i64 {
        self.charges
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(c, _)| *c as i64)
            .sum()
    }

    /// Positions (loop coordinates) and signs of the nonzero charges.
    pub fn nonzero(&self) -> Vec<(usize, usize, i32)> {
        let mut out = Vec::new();
        for y in 0..self.loop_height {
            for x in 0..self.loop_width {
                let c = self.charge(x, y);
                if self.is_valid(x, y) && c != 0 {
                    out.push((x, y, c));
                }
            }
        }
        out
    }
}

/// Sums the wrapped differences around each elementary loop
/// (x,y)→(x+1,y)→(x+1,y+1)→(x,y+1)→(x,y) and divides by 2π. The sum
/// telescopes to an exact multiple of 2π, so rounding is exact. A loop is
/// valid only when all four corner pixels are.
pub fn compute_residues(phi: &ScalarField) -> Result<ResidueField> {
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let (lw, lh) = (w - 1, h - 1);
    let mut charges = vec![0i32; lw * lh];
    let mut mask = vec![false; lw * lh];
    let at = |x: usize, y: usize| phi.values()[shape.idx(x, y)];
    for y in 0..lh {
        for x in 0..lw {
            if !(phi.is_valid(x, y)
                && phi.is_valid(x + 1, y)
                && phi.is_valid(x + 1, y + 1)
                && phi.is_valid(x, y + 1))
            {
                continue;
            }
            let circulation = wrap_angle(at(x + 1, y) - at(x, y))
                + wrap_angle(at(x + 1, y + 1) - at(x + 1, y))
                + wrap_angle(at(x, y + 1) - at(x + 1, y + 1))
                + wrap_angle(at(x, y) - at(x, y + 1));
            charges[y * lw + x] = (circulation / TAU).round() as i32;
            mask[y * lw + x] = true;
        }
    }
    Ok(ResidueField {
        loop_width: lw,
        loop_height: lh,
        charges,
        mask,
    })
}

/// One cut endpoint: either a residue loop or the image border.
#[derive(Debug, Clone, Copy)]
struct Cut {
    from: (i64, i64),
    to: (i64, i64),
}

/// Edge-blocking rasters for the pixel graph; `horizontal[y·(w−1)+x]` blocks
/// the edge (x,y)−(x+1,y) and `vertical[y·w+x]` blocks (x,y)−(x,y+1).
struct CutRaster {
    w: usize,
    h: usize,
    horizontal: Vec<bool>,
    vertical: Vec<bool>,
}

impl CutRaster {
    fn new(shape: GridShape) -> Self {
        CutRaster {
            w: shape.width,
            h: shape.height,
            horizontal: vec![false; (shape.width - 1) * shape.height],
            vertical: vec![false; shape.width * (shape.height - 1)],
        }
    }

    fn block_h(&mut self, x: i64, y: i64) {
        if x >= 0 && (x as usize) < self.w - 1 && y >= 0 && (y as usize) < self.h {
            self.horizontal[y as usize * (self.w - 1) + x as usize] = true;
        }
    }

    fn block_v(&mut self, x: i64, y: i64) {
        if x >= 0 && (x as usize) < self.w && y >= 0 && (y as usize) < self.h - 1 {
            self.vertical[y as usize * self.w + x as usize] = true;
        }
    }

    fn h_blocked(&self, x: usize, y: usize) -> bool {
        self.horizontal[y * (self.w - 1) + x]
    }

    fn v_blocked(&self, x: usize, y: usize) -> bool {
        self.vertical[y * self.w + x]
    }

    /// Walks the dual (loop-center) grid from `cut.from` to `cut.to` in unit
    /// axis steps and blocks every pixel edge the walk crosses. A dual step
    /// right crosses the vertical pixel edge at column x+1; a step down
    /// crosses the horizontal edge at row y+1.
    fn rasterize(&mut self, cut: Cut) {
        let (mut x, mut y) = cut.from;
        let (tx, ty) = cut.to;
        let dx = (tx - x).abs();
        let dy = (ty - y).abs();
        let sx = (tx - x).signum();
        let sy = (ty - y).signum();
        let mut err = dx - dy;
        while x != tx || y != ty {
            let e2 = 2 * err;
            if e2 > -dy && x != tx {
                self.block_step_x(x, y, sx);
                x += sx;
                err -= dy;
            } else {
                self.block_step_y(x, y, sy);
                y += sy;
                err += dx;
            }
        }
    }

    fn block_step_x(&mut self, x: i64, y: i64, sx: i64) {
        if sx > 0 {
            self.block_v(x + 1, y);
        } else {
            self.block_v(x, y);
        }
    }

    fn block_step_y(&mut self, x: i64, y: i64, sy: i64) {
        if sy > 0 {
            self.block_h(x, y + 1);
        } else {
            self.block_h(x, y);
        }
    }
}

/// Pairs opposite residues nearest-first inside a doubling search radius and
/// grounds leftovers to the image border once the radius reaches it.
fn place_cuts(residues: &[(usize, usize, i32)], shape: GridShape) -> Vec<Cut> {
    let (lw, lh) = ((shape.width - 1) as i64, (shape.height - 1) as i64);
    let mut cuts = Vec::new();
    let mut open: Vec<(i64, i64, i32)> = residues
        .iter()
        .map(|&(x, y, c)| (x as i64, y as i64, c))
        .collect();
    let mut paired = vec![false; open.len()];
    let mut remaining = open.len();
    let mut radius: i64 = 1;
    while remaining > 0 {
        // Nearest-first greedy matching of opposite charges within the radius.
        let mut candidates = Vec::new();
        for i in 0..open.len() {
            if paired[i] {
                continue;
            }
            for j in (i + 1)..open.len() {
                if paired[j] || open[i].2.signum() == open[j].2.signum() {
                    continue;
                }
                let d2 = (open[i].0 - open[j].0).pow(2) + (open[i].1 - open[j].1).pow(2);
                if d2 <= radius * radius {
                    candidates.push((d2, i, j));
                }
            }
        }
        candidates.sort_unstable();
        for (_, i, j) in candidates {
            if paired[i] || paired[j] {
                continue;
            }
            cuts.push(Cut {
                from: (open[i].0, open[i].1),
                to: (open[j].0, open[j].1),
            });
            paired[i] = true;
            paired[j] = true;
            remaining -= 2;
        }
        // Ground whatever the radius already connects to the border.
        for i in 0..open.len() {
            if paired[i] {
                continue;
            }
            let (x, y, _) = open[i];
            let to_border = [x + 1, lw - x, y + 1, lh - y];
            let nearest = *to_border.iter().min().unwrap();
            if nearest <= radius {
                let target = if nearest == x + 1 {
                    (-1, y)
                } else if nearest == lw - x {
                    (lw, y)
                } else if nearest == y + 1 {
                    (x, -1)
                } else {
                    (x, lh)
                };
                cuts.push(Cut {
                    from: (x, y),
                    to: target,
                });
                paired[i] = true;
                remaining -= 1;
            }
        }
        radius *= 2;
    }
    let _ = &mut open;
    cuts
}

/// Branch-cut unwrapper: balances residues with cuts, then integrates wrapped
/// differences by flood fill without crossing any cut. Pixels the flood never
/// reaches are masked out.
pub fn unwrap_goldstein(phi: &ScalarField) -> Result<UnwrapResult> {
    let start = Instant::now();
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let residues = compute_residues(phi)?;
    let mut raster = CutRaster::new(shape);
    for cut in place_cuts(&residues.nonzero(), shape) {
        raster.rasterize(cut);
    }

    let mut k = vec![0i32; shape.len()];
    let mut reached = vec![false; shape.len()];
    let seed = (0..shape.len()).find(|&i| phi.mask()[i]);
    if let Some(seed) = seed {
        let mut queue = VecDeque::new();
        reached[seed] = true;
        queue.push_back(seed);
        while let Some(idx) = queue.pop_front() {
            let (x, y) = (idx % w, idx / w);
            let visit = |nx: usize, ny: usize, blocked: bool| {
                let nidx = ny * w + nx;
                if blocked || reached[nidx] || !phi.mask()[nidx] {
                    return None;
                }
                Some(nidx)
            };
            let mut neighbors = Vec::with_capacity(4);
            if x + 1 < w {
                if let Some(n) = visit(x + 1, y, raster.h_blocked(x, y)) {
                    neighbors.push(n);
                }
            }
            if x > 0 {
                if let Some(n) = visit(x - 1, y, raster.h_blocked(x - 1, y)) {
                    neighbors.push(n);
                }
            }
            if y + 1 < h {
                if let Some(n) = visit(x, y + 1, raster.v_blocked(x, y)) {
                    neighbors.push(n);
                }
            }
            if y > 0 {
                if let Some(n) = visit(x, y - 1, raster.v_blocked(x, y - 1)) {
                    neighbors.push(n);
                }
            }
            for nidx in neighbors {
                let step = edge_count_step(phi.values()[nidx] - phi.values()[idx]);
                k[nidx] = k[idx] + step;
                reached[nidx] = true;
                queue.push_back(nidx);
            }
        }
    }

    let k = LabelField::new(shape, k, reached)?;
    let energy = masked_energy(phi, &k)?;
    Ok(compose_result(phi, k, energy, 0, start.elapsed().as_secs_f64()))
}

/// Per-pixel quality: negative variance of the wrapped gradient samples whose
/// edges lie inside the 3×3 window. High quality = locally smooth phase.
pub fn quality_map(phi: &ScalarField) -> ScalarField {
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let idx = |x: usize, y: usize| y * w + x;
    let mut gx = vec![None::<f64>; shape.len()];
    let mut gy = vec![None::<f64>; shape.len()];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && phi.is_valid(x, y) && phi.is_valid(x + 1, y) {
                gx[idx(x, y)] = Some(wrap_angle(phi.get(x + 1, y) - phi.get(x, y)));
            }
            if y + 1 < h && phi.is_valid(x, y) && phi.is_valid(x, y + 1) {
                gy[idx(x, y)] = Some(wrap_angle(phi.get(x, y + 1) - phi.get(x, y)));
            }
        }
    }
    let mut quality = Vec::with_capacity(shape.len());
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut n = 0usize;
            let x0 = x.saturating_sub(1);
            let y0 = y.saturating_sub(1);
            for yy in y0..=(y + 1).min(h - 1) {
                for xx in x0..=(x + 1).min(w - 1) {
                    if xx < x + 1 {
                        if let Some(g) = gx[idx(xx, yy)] {
                            sum += g;
                            sq += g * g;
                            n += 1;
                        }
                    }
                    if yy < y + 1 {
                        if let Some(g) = gy[idx(xx, yy)] {
                            sum += g;
                            sq += g * g;
                            n += 1;
                        }
                    }
                }
            }
            let variance = if n == 0 {
                f64::INFINITY
            } else {
                let mean = sum / n as f64;
                (sq / n as f64 - mean * mean).max(0.0)
            };
            quality.push(-variance);
        }
    }
    ScalarField::new(shape, quality, phi.mask().to_vec(), Units::Dimensionless)
        .expect("variance is finite wherever the mask is set")
}

#[derive(Debug)]
struct Frontier {
    priority: f64,
    order: u64,
    pixel: usize,
    from: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(other.order.cmp(&self.order))
    }
}

pub(crate) fn quality_guided_with_trace(
    phi: &ScalarField,
) -> Result<(UnwrapResult, Vec<f64>)> {
    let start = Instant::now();
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let quality = quality_map(phi);

    let seed = (0..shape.len())
        .filter(|&i| phi.mask()[i])
        .max_by(|&a, &b| quality.values()[a].total_cmp(&quality.values()[b]));
    let mut k = vec![0i32; shape.len()];
    let mut settled = vec![false; shape.len()];
    let mut queued = vec![false; shape.len()];
    let mut pops = Vec::new();
    if let Some(seed) = seed {
        let mut heap = BinaryHeap::new();
        let mut order = 0u64;
        heap.push(Frontier {
            priority: quality.values()[seed],
            order,
            pixel: seed,
            from: seed,
        });
        queued[seed] = true;
        while let Some(f) = heap.pop() {
            if settled[f.pixel] {
                continue;
            }
            settled[f.pixel] = true;
            pops.push(f.priority);
            if f.pixel != f.from {
                let step = edge_count_step(phi.values()[f.pixel] - phi.values()[f.from]);
                k[f.pixel] = k[f.from] + step;
            }
            let (x, y) = (f.pixel % w, f.pixel / w);
            let mut push = |nx: usize, ny: usize, heap: &mut BinaryHeap<Frontier>| {
                let nidx = ny * w + nx;
                if settled[nidx] || !phi.mask()[nidx] {
                    return;
                }
                queued[nidx] = true;
                order += 1;
                // Bottleneck propagation: a pixel is only as reliable as the
                // worst pixel on the path that reached it, which keeps the
                // popped priorities monotone.
                heap.push(Frontier {
                    priority: f.priority.min(quality.values()[nidx]),
                    order,
                    pixel: nidx,
                    from: f.pixel,
                });
            };
            if x + 1 < w {
                push(x + 1, y, &mut heap);
            }
            if x > 0 {
                push(x - 1, y, &mut heap);
            }
            if y + 1 < h {
                push(x, y + 1, &mut heap);
            }
            if y > 0 {
                push(x, y - 1, &mut heap);
            }
        }
    }

    let k = LabelField::new(shape, k, settled)?;
    let energy = masked_energy(phi, &k)?;
    Ok((
        compose_result(phi, k, energy, 0, start.elapsed().as_secs_f64()),
        pops,
    ))
}

/// Region growing ordered by a quality map: the frontier always expands at
/// its most reliable pixel, so smooth regions unwrap before noisy ones and
/// errors stay confined to low-quality areas.
pub fn unwrap_quality_guided(phi: &ScalarField) -> Result<UnwrapResult> {
    Ok(quality_guided_with_trace(phi)?.0)
}

/// Unweighted least-squares unwrapper: solves ΔΦ = div(wrapped gradients)
/// with zero-flux boundaries in the cosine basis. The output is the global
/// L² minimizer but is generally *not* congruent to the input modulo 2π;
/// the deviation is reported as `congruence_residual`.
pub fn unwrap_least_squares(phi: &ScalarField) -> Result<UnwrapResult> {
    let start = Instant::now();
    let shape = phi.shape();
    let (w, h) = (shape.width, shape.height);
    let idx = |x: usize, y: usize| y * w + x;
    let mut gx = vec![0.0; shape.len()];
    let mut gy = vec![0.0; shape.len()];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && phi.is_valid(x, y) && phi.is_valid(x + 1, y) {
                gx[idx(x, y)] = wrap_angle(phi.get(x + 1, y) - phi.get(x, y));
            }
            if y + 1 < h && phi.is_valid(x, y) && phi.is_valid(x, y + 1) {
                gy[idx(x, y)] = wrap_angle(phi.get(x, y + 1) - phi.get(x, y));
            }
        }
    }
    let mut rho = vec![0.0; shape.len()];
    for y in 0..h {
        for x in 0..w {
            let mut div = gx[idx(x, y)] + gy[idx(x, y)];
            if x > 0 {
                div -= gx[idx(x - 1, y)];
            }
            if y > 0 {
                div -= gy[idx(x, y - 1)];
            }
            rho[idx(x, y)] = div;
        }
    }
    let mut solution = PoissonSolver::new(shape).solve_neumann(&rho)?;

    // The solve pins the solution to zero mean — an arbitrary real constant
    // that a 2π gauge shift cannot remove. Recenter by the median wrapped
    // deviation from the input (a data point, so the ±π seam cannot split
    // it); on residue-free input this makes the output congruent to φ up to
    // solver precision, and in general it centers the congruence deviations
    // at zero. Adding a constant leaves the minimized gradient misfit
    // unchanged.
    let mut wrapped_dev: Vec<f64> = (0..shape.len())
        .filter(|&i| phi.mask()[i])
        .map(|i| wrap_angle(solution[i] - phi.values()[i]))
        .collect();
    if !wrapped_dev.is_empty() {
        wrapped_dev.sort_by(f64::total_cmp);
        let median = wrapped_dev[(wrapped_dev.len() - 1) / 2];
        for v in solution.iter_mut() {
            *v -= median;
        }
    }
    let mut labels = vec![0i32; shape.len()];
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..shape.len() {
        if !phi.mask()[i] {
            continue;
        }
        let dev = solution[i] - phi.values()[i];
        labels[i] = (dev / TAU).round() as i32;
        sq += wrap_angle(dev).powi(2);
        n += 1;
    }
    let residual = if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };
    let k = LabelField::new(shape, labels, phi.mask().to_vec())?;
    let energy = total_energy(phi, &k)?;
    let phi_abs = ScalarField::new(shape, solution, phi.mask().to_vec(), Units::Radians)?;
    Ok(UnwrapResult {
        k,
        phi_abs,
        energy,
        iterations: 0,
        seconds: start.elapsed().as_secs_f64(),
        congruence_residual: Some(residual),
    })
}
