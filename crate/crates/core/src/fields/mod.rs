//! Discrete densities on `X` and functions on `Σ`.
//!
//! Grids are cell-centred over `[-1, 1]^2`, stored row-major with `y` rows:
//! value `(i, j)` sits at index `j * nx + i`. Sinograms are stored
//! detector-major: sample `(t_i, r_j)` at index `i * n_radii + j`.

mod io;
mod phantom;

pub use io::{format_grid, format_sinogram, parse_grid, parse_sinogram, read_grid, read_sinogram, write_grid, write_sinogram};
pub use phantom::{make_phantom, PhantomSpec, Primitive};

use serde::{Deserialize, Serialize};

use crate::error::{FunkError, Result};
use crate::geometry::{Point, ScanGeometry};

/// Compact support sets `K` used for masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// Open unit ball.
    UnitBall,
    /// `{|x| < 1, x₁ ≥ 0}`.
    HalfBall,
}

impl Region {
    pub fn contains(self, p: Point) -> bool {
        let inside = p[0] * p[0] + p[1] * p[1] < 1.0;
        match self {
            Region::UnitBall => inside,
            Region::HalfBall => inside && p[0] >= 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::UnitBall => "disk",
            Region::HalfBall => "half",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = FunkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" | "ball" | "unit-ball" => Ok(Region::UnitBall),
            "half" | "half-ball" => Ok(Region::HalfBall),
            other => Err(FunkError::InvalidConfig(format!("unknown region `{other}`"))),
        }
    }
}

/// A density `f = f₀ dX` sampled at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    support_mask: Option<Vec<bool>>,
}

impl GridDensity {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0, "grid dimensions must be positive");
        Self { nx, ny, values: vec![0.0; nx * ny], support_mask: None }
    }

    /// Wraps raw cell values without enforcing support.
    pub fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(FunkError::ShapeMismatch(format!("empty grid {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(FunkError::ShapeMismatch(format!(
                "{} values for a {nx}x{ny} grid",
                values.len()
            )));
        }
        Ok(Self { nx, ny, values, support_mask: None })
    }

    /// Evaluates `f` at every cell centre inside the open unit ball.
    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(Point) -> f64) -> Self {
        let mut g = Self::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let p = g.cell_center(i, j);
                if Region::UnitBall.contains(p) {
                    g.values[j * nx + i] = f(p);
                }
            }
        }
        g
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support_mask(&self) -> Option<&[bool]> {
        self.support_mask.as_deref()
    }

    pub fn spacing(&self) -> (f64, f64) {
        grid_spacing(self.nx, self.ny)
    }

    pub fn cell_area(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx * hy
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        cell_center(self.nx, self.ny, i, j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Zeroes cells whose centres lie outside the open unit ball.
    pub fn restrict_to_ball(mut self) -> Self {
        let mask = region_mask(self.nx, self.ny, Region::UnitBall);
        for (v, keep) in self.values.iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
        self
    }

    /// Attaches the mask of `region` and zeroes every cell off it.
    pub fn with_support(mut self, region: Region) -> Self {
        let mask = region_mask(self.nx, self.ny, region);
        for (v, keep) in self.values.iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
        self.support_mask = Some(mask);
        self
    }

    pub fn norm(&self) -> f64 {
        inner_product_x(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &GridDensity) -> Result<Self> {
        check_grid_shapes(self, other)?;
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
        Ok(out)
    }

    /// Transposes the grid by a quarter turn counter-clockwise about the
    /// origin. Exact for square grids.
    pub fn rotate_quarter_turn(&self) -> Self {
        assert_eq!(self.nx, self.ny, "quarter-turn rotation needs a square grid");
        let n = self.nx;
        let mut out = GridDensity::zeros(n, n);
        // (x, y) -> (-y, x): cell (i, j) moves to (n-1-j, i).
        for j in 0..n {
            for i in 0..n {
                out.values[i * n + (n - 1 - j)] = self.values[j * n + i];
            }
        }
        out
    }
}

pub(crate) fn grid_spacing(nx: usize, ny: usize) -> (f64, f64) {
    (2.0 / nx as f64, 2.0 / ny as f64)
}

pub(crate) fn cell_center(nx: usize, ny: usize, i: usize, j: usize) -> Point {
    let (hx, hy) = grid_spacing(nx, ny);
    [-1.0 + (i as f64 + 0.5) * hx, -1.0 + (j as f64 + 0.5) * hy]
}

/// Cells whose centres lie in `region`.
pub fn region_mask(nx: usize, ny: usize, region: Region) -> Vec<bool> {
    let mut mask = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            mask.push(region.contains(cell_center(nx, ny, i, j)));
        }
    }
    mask
}

/// Bilinear interpolation of cell-centre values with zero padding; zero at
/// and outside the unit circle.
pub fn sample(f: &GridDensity, x: Point) -> f64 {
    let mut acc = 0.0;
    bilinear_stencil(f.nx, f.ny, x, |idx, w| acc += w * f.values[idx]);
    acc
}

/// Visits the up-to-four cells contributing to the bilinear interpolant at
/// `x` with their nonzero weights. Nothing is visited for `|x| ≥ 1`.
#[inline]
pub(crate) fn bilinear_stencil(nx: usize, ny: usize, x: Point, mut visit: impl FnMut(usize, f64)) {
    if x[0] * x[0] + x[1] * x[1] >= 1.0 {
        return;
    }
    let u = (x[0] + 1.0) * nx as f64 * 0.5 - 0.5;
    let v = (x[1] + 1.0) * ny as f64 * 0.5 - 0.5;
    let i0 = u.floor();
    let j0 = v.floor();
    let fx = u - i0;
    let fy = v - j0;
    let i0 = i0 as isize;
    let j0 = j0 as isize;
    let wx = [1.0 - fx, fx];
    let wy = [1.0 - fy, fy];
    for (dj, wyv) in wy.iter().enumerate() {
        let j = j0 + dj as isize;
        if j < 0 || j >= ny as isize || *wyv == 0.0 {
            continue;
        }
        for (di, wxv) in wx.iter().enumerate() {
            let i = i0 + di as isize;
            if i < 0 || i >= nx as isize || *wxv == 0.0 {
                continue;
            }
            visit(j as usize * nx + i as usize, wxv * wyv);
        }
    }
}

fn check_grid_shapes(f: &GridDensity, g: &GridDensity) -> Result<()> {
    if f.dims() != g.dims() {
        return Err(FunkError::ShapeMismatch(format!(
            "grids {}x{} and {}x{}",
            f.nx, f.ny, g.nx, g.ny
        )));
    }
    Ok(())
}

/// `⟨f, g⟩_X`: cell-area weighted sum of the pointwise product.
pub fn inner_product_x(f: &GridDensity, g: &GridDensity) -> Result<f64> {
    check_grid_shapes(f, g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.cell_area())
}

/// Whether a sinogram is a function on `Σ` or a density `u·dS dr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinoKind {
    Function,
    Density,
}

impl SinoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SinoKind::Function => "function",
            SinoKind::Density => "density",
        }
    }
}

/// Samples of `g(t_i, r_j)` on the product grid of a [`ScanGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geom: ScanGeometry,
    values: Vec<f64>,
    kind: SinoKind,
}

impl Sinogram {
    pub fn zeros(geom: ScanGeometry, kind: SinoKind) -> Self {
        Self { values: vec![0.0; geom.n_samples()], geom, kind }
    }

    pub fn from_values(geom: ScanGeometry, values: Vec<f64>, kind: SinoKind) -> Result<Self> {
        if values.len() != geom.n_samples() {
            return Err(FunkError::ShapeMismatch(format!(
                "{} values for {}x{} sinogram",
                values.len(),
                geom.n_detectors,
                geom.n_radii
            )));
        }
        Ok(Self { geom, values, kind })
    }

    /// Samples `f(t, r)` on the geometry's grid.
    pub fn from_fn(geom: ScanGeometry, kind: SinoKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let radii = geom.radii();
        let mut values = Vec::with_capacity(geom.n_samples());
        for i in 0..geom.n_detectors {
            let t = geom.detector_angle(i);
            values.extend(radii.iter().map(|&r| f(t, r)));
        }
        Self { geom, values, kind }
    }

    pub fn geom(&self) -> &ScanGeometry {
        &self.geom
    }

    pub fn kind(&self) -> SinoKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.geom.n_radii + j]
    }

    /// Reinterprets the samples as the other kind without changing values.
    pub fn with_kind(mut self, kind: SinoKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn norm(&self) -> f64 {
        inner_product_sigma(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Sinogram) -> Result<Self> {
        check_sino_geoms(self, other)?;
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
        Ok(out)
    }
}

fn check_sino_geoms(u: &Sinogram, v: &Sinogram) -> Result<()> {
    if u.geom != v.geom {
        return Err(FunkError::ShapeMismatch("sinograms on different geometries".into()));
    }
    Ok(())
}

/// `⟨u, v⟩_Σ` with weights `R·Δt·Δr`, trapezoidal at the ends of the radius
/// window and of a partial arc.
pub fn inner_product_sigma(u: &Sinogram, v: &Sinogram) -> Result<f64> {
    check_sino_geoms(u, v)?;
    let w = u.geom.sigma_weights();
    Ok(u.values.iter().zip(&v.values).zip(&w).map(|((a, b), c)| a * b * c).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_cell_centre_and_outside() {
        let f = GridDensity::from_fn(16, 16, |_| 1.0).with_support(Region::UnitBall);
        let c = f.cell_center(8, 8);
        assert_eq!(sample(&f, c), 1.0);
        assert_eq!(sample(&f, [0.8, 0.8]), 0.0);
        assert_eq!(sample(&f, [1.0, 0.0]), 0.0);
    }

    #[test]
    fn sample_midpoint_between_cells() {
        let mut f = GridDensity::zeros(8, 8);
        f.values_mut()[3 * 8 + 4] = 1.0;
        let a = f.cell_center(3, 3);
        let b = f.cell_center(4, 3);
        let mid = [0.5 * (a[0] + b[0]), a[1]];
        assert!((sample(&f, mid) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_grid_inner_product_is_area() {
        for n in [3, 16, 33] {
            let f = GridDensity::from_values(n, n, vec![1.0; n * n]).unwrap();
            let ip = inner_product_x(&f, &f).unwrap();
            assert!((ip - 4.0).abs() < 1e-12, "n = {n}: {ip}");
        }
    }

    #[test]
    fn constant_sinogram_inner_product_is_measure() {
        let geom = ScanGeometry::full(1.5, 180, 160).unwrap();
        let u = Sinogram::from_fn(geom, SinoKind::Function, |_, _| 1.0);
        let ip = inner_product_sigma(&u, &u).unwrap();
        assert!((ip - 6.0 * std::f64::consts::PI).abs() < 1e-10, "{ip}");
    }

    #[test]
    fn mismatched_shapes_error() {
        let f = GridDensity::zeros(4, 4);
        let g = GridDensity::zeros(4, 5);
        assert!(matches!(inner_product_x(&f, &g), Err(FunkError::ShapeMismatch(_))));
        let a = Sinogram::zeros(ScanGeometry::full(1.5, 8, 4).unwrap(), SinoKind::Function);
        let b = Sinogram::zeros(ScanGeometry::full(1.5, 8, 5).unwrap(), SinoKind::Function);
        assert!(inner_product_sigma(&a, &b).is_err());
    }

    #[test]
    fn half_ball_mask_zeroes_left_half() {
        let f = GridDensity::from_fn(10, 10, |_| 2.0).with_support(Region::HalfBall);
        for j in 0..10 {
            for i in 0..5 {
                assert_eq!(f.get(i, j), 0.0);
            }
        }
        assert_eq!(f.get(6, 5), 2.0);
    }

    #[test]
    fn quarter_turn_moves_points_correctly() {
        let f = GridDensity::from_fn(12, 12, |p| p[0] + 3.0 * p[1]);
        let g = f.rotate_quarter_turn();
        for j in 0..12 {
            for i in 0..12 {
                let p = g.cell_center(i, j);
                // g(p) = f(R⁻¹ p) with R⁻¹(x, y) = (y, -x).
                let expect = if Region::UnitBall.contains(p) { p[1] - 3.0 * p[0] } else { 0.0 };
                assert!((g.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }
}
