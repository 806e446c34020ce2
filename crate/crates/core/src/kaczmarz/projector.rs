//! The discrete forward operator as a sparse matrix, with its exact transpose
//! under the quadrature inner products.
//!
//! With `A` the circle-quadrature matrix, `D = diag(W·ε)` the cutoff-weighted
//! `Σ` quadrature weights and `h²` the cell area, the adjoint is
//! `Mᵀu = h⁻² Aᵀ D u`, so that `⟨Mf, ε u⟩_Σ = ⟨f, Mᵀu⟩_X` for every `f`
//! supported in the domain (unit ball, intersected with an optional mask).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cg::{conjugate_gradient, CgOutcome};
use crate::error::{FunkError, Result};
use crate::fields::{region_mask, GridDensity, Region, SinoKind, Sinogram};
use crate::geometry::ScanGeometry;
use crate::transform::CircleQuadrature;

/// Row blocks for the transposed product. Fixed so that results do not
/// depend on the thread count.
const ADJOINT_BLOCKS: usize = 16;

pub struct Projector {
    geom: ScanGeometry,
    nx: usize,
    ny: usize,
    mask: Option<Region>,
    in_domain: Vec<bool>,
    domain_cells: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    sigma_weights: Vec<f64>,
    data_weights: Vec<f64>,
    cell_area: f64,
}

impl Projector {
    pub fn new(geom: &ScanGeometry, nx: usize, ny: usize, mask: Option<Region>) -> Result<Self> {
        let quad = CircleQuadrature::new(geom, nx, ny)?;
        let mut in_domain = region_mask(nx, ny, Region::UnitBall);
        if let Some(region) = mask {
            for (keep, m) in in_domain.iter_mut().zip(region_mask(nx, ny, region)) {
                *keep &= m;
            }
        }
        let domain_cells: Vec<usize> = (0..nx * ny).filter(|&c| in_domain[c]).collect();
        let nr = geom.n_radii;
        let rows: Vec<Vec<(u32, f64)>> = (0..geom.n_samples())
            .into_par_iter()
            .map(|s| {
                let mut entries: Vec<(u32, f64)> = Vec::new();
                quad.visit(s / nr, s % nr, |cell, w| {
                    if in_domain[cell] {
                        entries.push((cell as u32, w));
                    }
                });
                entries.sort_by_key(|e| e.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len() / 2);
                for (c, w) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += w,
                        _ => merged.push((c, w)),
                    }
                }
                merged
            })
            .collect();
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, w) in row {
                cols.push(c);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        let sigma_weights = geom.sigma_weights();
        let cutoff = geom.cutoff_values();
        let data_weights = sigma_weights
            .iter()
            .enumerate()
            .map(|(s, w)| w * cutoff[s / nr])
            .collect();
        let (hx, hy) = crate::fields::grid_spacing(nx, ny);
        Ok(Self {
            geom: *geom,
            nx,
            ny,
            mask,
            in_domain,
            domain_cells,
            row_ptr,
            cols,
            vals,
            sigma_weights,
            data_weights,
            cell_area: hx * hy,
        })
    }

    pub fn geom(&self) -> &ScanGeometry {
        &self.geom
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn mask(&self) -> Option<Region> {
        self.mask
    }

    pub fn domain_cells(&self) -> &[usize] {
        &self.domain_cells
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Zeroes every cell outside the domain.
    pub fn restrict(&self, f: &mut [f64]) {
        for (v, keep) in f.iter_mut().zip(&self.in_domain) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    pub fn forward_values(&self, f: &[f64]) -> Vec<f64> {
        (0..self.row_ptr.len() - 1)
            .into_par_iter()
            .map(|s| {
                let (a, b) = (self.row_ptr[s], self.row_ptr[s + 1]);
                self.cols[a..b]
                    .iter()
                    .zip(&self.vals[a..b])
                    .map(|(&c, w)| w * f[c as usize])
                    .sum()
            })
            .collect()
    }

    /// `h⁻² Aᵀ D u`.
    pub fn adjoint_values(&self, u: &[f64]) -> Vec<f64> {
        let n_rows = self.row_ptr.len() - 1;
        let block = n_rows.div_ceil(ADJOINT_BLOCKS);
        let n_cells = self.nx * self.ny;
        let partials: Vec<Vec<f64>> = (0..ADJOINT_BLOCKS)
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; n_cells];
                for s in (b * block)..((b + 1) * block).min(n_rows) {
                    let coef = self.data_weights[s] * u[s];
                    if coef == 0.0 {
                        continue;
                    }
                    for k in self.row_ptr[s]..self.row_ptr[s + 1] {
                        acc[self.cols[k] as usize] += coef * self.vals[k];
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; n_cells];
        for part in &partials {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        let scale = 1.0 / self.cell_area;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    fn check_grid(&self, f: &GridDensity) -> Result<()> {
        if f.dims() != (self.nx, self.ny) {
            return Err(FunkError::ShapeMismatch(format!(
                "grid {}x{} vs projector {}x{}",
                f.nx(),
                f.ny(),
                self.nx,
                self.ny
            )));
        }
        Ok(())
    }

    fn check_sino(&self, u: &Sinogram) -> Result<()> {
        if *u.geom() != self.geom {
            return Err(FunkError::GeometryMismatch("sinogram geometry differs from projector".into()));
        }
        Ok(())
    }

    /// Forward transform of `f` restricted to the domain.
    pub fn forward(&self, f: &GridDensity) -> Result<Sinogram> {
        self.check_grid(f)?;
        Sinogram::from_values(self.geom, self.forward_values(f.values()), SinoKind::Function)
    }

    /// Exact transpose of [`Projector::forward`].
    pub fn adjoint(&self, u: &Sinogram) -> Result<GridDensity> {
        self.check_sino(u)?;
        if u.kind() != SinoKind::Function {
            return Err(FunkError::KindMismatch { expected: "function", got: u.kind().as_str() });
        }
        GridDensity::from_values(self.nx, self.ny, self.adjoint_values(u.values()))
    }

    /// Inner product on `Σ` weighted by the cutoff.
    pub fn data_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.data_weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// Plain `⟨·,·⟩_Σ` norm.
    pub fn sigma_norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.sigma_weights).map(|(a, w)| a * a * w).sum::<f64>().sqrt()
    }

    pub fn grid_dot(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.cell_area
    }

    /// `R u = M Mᵀ u + θ u`.
    pub fn apply_r_values(&self, u: &[f64], theta: f64) -> Vec<f64> {
        let mut out = self.forward_values(&self.adjoint_values(u));
        for (o, v) in out.iter_mut().zip(u) {
            *o += theta * v;
        }
        out
    }

    pub fn apply_r(&self, u: &Sinogram, theta: f64) -> Result<Sinogram> {
        self.check_sino(u)?;
        Sinogram::from_values(self.geom, self.apply_r_values(u.values(), theta), SinoKind::Function)
    }

    /// Solves `R z = b` by conjugate gradients in the cutoff-weighted inner
    /// product, where `R` is self-adjoint and positive definite. Samples with
    /// zero cutoff weight are filled in afterwards from `θ z = b - M Mᵀ z`.
    pub fn solve_r_values(
        &self,
        b: &[f64],
        theta: f64,
        tol: f64,
        max_iters: usize,
        observe: impl FnMut(&[f64]),
    ) -> CgOutcome {
        let mut out = conjugate_gradient(
            |v| self.apply_r_values(v, theta),
            |a, c| self.data_dot(a, c),
            b,
            tol,
            max_iters,
            observe,
        );
        if self.data_weights.contains(&0.0) {
            let rz = self.apply_r_values(&out.solution, theta);
            for (s, w) in self.data_weights.iter().enumerate() {
                if *w == 0.0 {
                    out.solution[s] += (b[s] - rz[s]) / theta;
                }
            }
        }
        out
    }

    /// [`Projector::solve_r_values`] on sinograms, failing when the
    /// iteration budget runs out.
    pub fn solve_r(&self, b: &Sinogram, theta: f64, tol: f64, max_iters: usize) -> Result<Sinogram> {
        self.check_sino(b)?;
        if !(theta > 0.0) {
            return Err(FunkError::InvalidConfig(format!("theta must be positive, got {theta}")));
        }
        let out = self.solve_r_values(b.values(), theta, tol, max_iters, |_| {});
        if !out.converged {
            return Err(FunkError::NoConvergence {
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        Sinogram::from_values(self.geom, out.solution, SinoKind::Function)
    }

    /// Power-iteration estimate of the largest eigenvalue of `Mᵀ M`, which
    /// equals that of `M Mᵀ`.
    pub fn lambda_max(&self, steps: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; self.nx * self.ny];
        for &c in &self.domain_cells {
            v[c] = rng.gen_range(-1.0..1.0);
        }
        let mut lambda = 0.0;
        for _ in 0..steps.max(1) {
            let norm = self.grid_dot(&v, &v).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = self.adjoint_values(&self.forward_values(&v));
            lambda = self.grid_dot(&v, &w);
            v = w;
        }
        lambda
    }

    /// Dense `Mᵀ M` on the domain cells, in the order of
    /// [`Projector::domain_cells`]. Symmetric positive semidefinite.
    pub fn assemble_normal(&self) -> DMatrix<f64> {
        let n = self.domain_cells.len();
        let mut index = vec![usize::MAX; self.nx * self.ny];
        for (k, &c) in self.domain_cells.iter().enumerate() {
            index[c] = k;
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        let scale = 1.0 / self.cell_area;
        for s in 0..self.row_ptr.len() - 1 {
            let d = self.data_weights[s] * scale;
            if d == 0.0 {
                continue;
            }
            let (a, b) = (self.row_ptr[s], self.row_ptr[s + 1]);
            for p in a..b {
                let ip = index[self.cols[p] as usize];
                let wp = d * self.vals[p];
                for q in a..b {
                    m[(ip, index[self.cols[q] as usize])] += wp * self.vals[q];
                }
            }
        }
        // Symmetrize away round-off asymmetry.
        let mt = m.transpose();
        (m + mt) * 0.5
    }
}

/// Exact transpose of the discrete forward map over unit-ball cells, built by
/// redistributing every quadrature weight to its source cells without
/// storing a matrix.
pub fn discrete_adjoint_apply(u: &Sinogram, geom: &ScanGeometry, nx: usize, ny: usize) -> Result<GridDensity> {
    if u.geom() != geom {
        return Err(FunkError::GeometryMismatch("sinogram geometry differs".into()));
    }
    if u.kind() != SinoKind::Function {
        return Err(FunkError::KindMismatch { expected: "function", got: u.kind().as_str() });
    }
    let quad = CircleQuadrature::new(geom, nx, ny)?;
    let in_ball = region_mask(nx, ny, Region::UnitBall);
    let weights = geom.sigma_weights();
    let cutoff = geom.cutoff_values();
    let nr = geom.n_radii;
    let (hx, hy) = crate::fields::grid_spacing(nx, ny);
    let mut out = vec![0.0; nx * ny];
    for (s, &value) in u.values().iter().enumerate() {
        let coef = weights[s] * cutoff[s / nr] * value / (hx * hy);
        if coef == 0.0 {
            continue;
        }
        quad.visit(s / nr, s % nr, |cell, w| {
            if in_ball[cell] {
                out[cell] += coef * w;
            }
        });
    }
    GridDensity::from_values(nx, ny, out)
}
