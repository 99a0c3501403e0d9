//! Cosine-basis spectral transforms and a Neumann Poisson solver.
//!
//! The least-squares unwrapper and the optimal-transport solver both reduce to
//! Poisson problems with zero-flux (Neumann) boundaries. On a regular grid the
//! eigenvectors of the reflected five-point Laplacian are exactly the DCT-II
//! basis, so each solve is a forward cosine transform, a diagonal division by
//! `2(cos(πi/H) + cos(πj/W) − 2)`, and an inverse transform.
//!
//! The transforms are built on complex FFTs of length `2N` via the even
//! extension `v = [x₀ … x_{N−1}, x_{N−1} … x₀]`, which keeps arbitrary grid
//! sizes (odd, prime) exact.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::raster::GridShape;

/// Cached FFT plans for one transform length.
///
/// `dct2` computes `y[k] = Σₙ x[n]·cos(πk(2n+1)/(2N))` and `dct3` computes
/// `z[n] = y[0]/2 + Σ_{k≥1} y[k]·cos(πk(2n+1)/(2N))`, so `dct3(dct2(x)) =
/// (N/2)·x`. Normalization is folded in by the callers.
pub struct CosinePlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CosinePlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "transform length must be positive");
        let mut planner = FftPlanner::new();
        CosinePlan {
            len,
            forward: planner.plan_fft_forward(2 * len),
            inverse: planner.plan_fft_inverse(2 * len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place DCT-II of `data` (length must equal `self.len()`).
    pub fn dct2(&self, data: &mut [f64]) {
        let n = self.len;
        assert_eq!(data.len(), n);
        let mut buf = vec![Complex64::default(); 2 * n];
        for i in 0..n {
            buf[i] = Complex64::new(data[i], 0.0);
            buf[2 * n - 1 - i] = Complex64::new(data[i], 0.0);
        }
        self.forward.process(&mut buf);
        // V[k] = 2·e^{iπk/(2N)}·y[k], so y[k] = Re(e^{−iπk/(2N)}·V[k])/2.
        for (k, out) in data.iter_mut().enumerate() {
            let phase = Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64));
            *out = 0.5 * (phase * buf[k]).re;
        }
    }

    /// In-place DCT-III of `data` (length must equal `self.len()`).
    pub fn dct3(&self, data: &mut [f64]) {
        let n = self.len;
        assert_eq!(data.len(), n);
        let mut buf = vec![Complex64::default(); 2 * n];
        buf[0] = Complex64::new(2.0 * data[0], 0.0);
        for k in 1..n {
            let v = Complex64::from_polar(2.0 * data[k], PI * k as f64 / (2.0 * n as f64));
            buf[k] = v;
            buf[2 * n - k] = v.conj();
        }
        // buf[n] stays 0: the even extension has no Nyquist component.
        self.inverse.process(&mut buf);
        for (i, out) in data.iter_mut().enumerate() {
            *out = 0.25 * buf[i].re;
        }
    }
}

/// Applies the five-point Laplacian with reflecting (zero-flux) boundaries:
/// missing neighbors contribute nothing.
pub fn apply_neumann_laplacian(values: &[f64], shape: GridShape) -> Vec<f64> {
    let (w, h) = (shape.width, shape.height);
    assert_eq!(values.len(), w * h);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = values[y * w + x];
            let mut acc = 0.0;
            if x > 0 {
                acc += values[y * w + x - 1] - c;
            }
            if x + 1 < w {
                acc += values[y * w + x + 1] - c;
            }
            if y > 0 {
                acc += values[(y - 1) * w + x] - c;
            }
            if y + 1 < h {
                acc += values[(y + 1) * w + x] - c;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Neumann Poisson solver for a fixed grid shape; plans and eigenvalues are
/// precomputed so repeated solves (the transport iteration) stay cheap.
pub struct PoissonSolver {
    shape: GridShape,
    plan_x: CosinePlan,
    plan_y: CosinePlan,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(shape: GridShape) -> Self {
        let eig = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|k| 2.0 * ((PI * k as f64 / n as f64).cos() - 1.0))
                .collect()
        };
        PoissonSolver {
            shape,
            plan_x: CosinePlan::new(shape.width),
            plan_y: CosinePlan::new(shape.height),
            eig_x: eig(shape.width),
            eig_y: eig(shape.height),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Separable 2-D DCT-II over rows then columns, in place.
    pub fn dct2_2d(&self, data: &mut [f64]) {
        self.transform_2d(data, true);
    }

    /// Separable 2-D DCT-III over rows then columns, in place.
    pub fn dct3_2d(&self, data: &mut [f64]) {
        self.transform_2d(data, false);
    }

    fn transform_2d(&self, data: &mut [f64], forward: bool) {
        let (w, h) = (self.shape.width, self.shape.height);
        assert_eq!(data.len(), w * h);
        for row in data.chunks_exact_mut(w) {
            if forward {
                self.plan_x.dct2(row);
            } else {
                self.plan_x.dct3(row);
            }
        }
        let mut column = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            if forward {
                self.plan_y.dct2(&mut column);
            } else {
                self.plan_y.dct3(&mut column);
            }
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
    }

    /// Solves `Δu = rhs` with zero-flux boundaries and returns the zero-mean
    /// solution. The constant mode of `rhs` is unconstrained (a compatibility
    /// condition) and is projected out before the solve.
    pub fn solve_neumann(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (w, h) = (self.shape.width, self.shape.height);
        if rhs.len() != w * h {
            return Err(Error::ShapeMismatch(format!(
                "poisson rhs has {} samples, grid needs {}",
                rhs.len(),
                w * h
            )));
        }
        let mut hat = rhs.to_vec();
        self.dct2_2d(&mut hat);
        for y in 0..h {
            for x in 0..w {
                let lambda = self.eig_x[x] + self.eig_y[y];
                let v = &mut hat[y * w + x];
                if x == 0 && y == 0 {
                    *v = 0.0;
                } else {
                    *v /= lambda;
                }
            }
        }
        self.dct3_2d(&mut hat);
        let scale = 4.0 / (w as f64 * h as f64);
        for v in &mut hat {
            *v *= scale;
        }
        Ok(hat)
    }
}
