//! Forward spherical-mean transform, its dual, backprojection, and probes of
//! the normal operator.
//!
//! Circle integrals use `N_q(r) = max(64, ceil(4·2πr/h))` equispaced points
//! measured from the inward normal at the detector, so that rotating the
//! detector rotates the quadrature nodes with it. Nodes outside the unit ball
//! contribute nothing and are not visited.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FunkError, Result};
use crate::fields::{bilinear_stencil, cell_center, grid_spacing, inner_product_sigma, inner_product_x, GridDensity, Region, SinoKind, Sinogram};
use crate::geometry::{bisector_crossings, dist, wedge_coefficient, Point, ScanGeometry};
use crate::kaczmarz::Projector;

/// Largest masked cell count `spectrum_probe` will assemble densely.
pub const SPECTRUM_ASSEMBLY_LIMIT: usize = 1200;

/// Wedge magnitudes below this are treated as conjugate points.
const CONJUGATE_THRESHOLD: f64 = 1e-12;

const MIN_CIRCLE_NODES: usize = 64;
const NODES_PER_CELL: f64 = 4.0;

struct RadiusNodes {
    arc_weight: f64,
    /// `(cos ψ, sin ψ)` for the nodes that may fall inside the unit ball,
    /// in ascending angle index.
    directions: Vec<(f64, f64)>,
}

/// Quadrature nodes of every circle `|x - y(t_i)| = r_j` for one grid.
pub(crate) struct CircleQuadrature {
    nx: usize,
    ny: usize,
    geom: ScanGeometry,
    per_radius: Vec<RadiusNodes>,
    detectors: Vec<(f64, f64)>,
}

impl CircleQuadrature {
    pub(crate) fn new(geom: &ScanGeometry, nx: usize, ny: usize) -> Result<Self> {
        geom.validate()?;
        let (hx, hy) = grid_spacing(nx, ny);
        let h = hx.min(hy);
        let big_r = geom.detector_radius;
        let per_radius = geom
            .radii()
            .into_iter()
            .map(|r| {
                let n_q = ((NODES_PER_CELL * 2.0 * PI * r / h).ceil() as usize).max(MIN_CIRCLE_NODES);
                let step = 2.0 * PI / n_q as f64;
                // Nodes inside the ball satisfy cos ψ > c0.
                let c0 = (big_r * big_r + r * r - 1.0) / (2.0 * r * big_r);
                let ks: Vec<i64> = if c0 >= 1.0 {
                    Vec::new()
                } else {
                    let alpha = c0.max(-1.0).acos();
                    let half = (alpha / step).floor() as i64 + 1;
                    let n = n_q as i64;
                    if 2 * half + 1 >= n {
                        let mut all: Vec<i64> = (0..n).map(|k| if 2 * k > n { k - n } else { k }).collect();
                        all.sort_unstable();
                        all
                    } else {
                        (-half..=half).collect()
                    }
                };
                let directions = ks
                    .into_iter()
                    .map(|k| {
                        let psi = k as f64 * step;
                        (psi.cos(), psi.sin())
                    })
                    .collect();
                RadiusNodes { arc_weight: 2.0 * PI * r / n_q as f64, directions }
            })
            .collect();
        let detectors = geom
            .detector_angles()
            .into_iter()
            .map(|t| (t.cos(), t.sin()))
            .collect();
        Ok(Self { nx, ny, geom: *geom, per_radius, detectors })
    }

    /// Visits `(cell, weight)` for every bilinear contribution to the circle
    /// integral at sample `(i, j)`, in ascending node order.
    #[inline]
    pub(crate) fn visit(&self, i: usize, j: usize, mut visit: impl FnMut(usize, f64)) {
        let (c, s) = self.detectors[i];
        let big_r = self.geom.detector_radius;
        let r = self.geom.radius(j);
        let nodes = &self.per_radius[j];
        let center = [big_r * c, big_r * s];
        let inward = [-c, -s];
        let perp = [-s, c];
        for &(cp, sp) in &nodes.directions {
            let p = [
                center[0] + r * (cp * inward[0] + sp * perp[0]),
                center[1] + r * (cp * inward[1] + sp * perp[1]),
            ];
            bilinear_stencil(self.nx, self.ny, p, |cell, w| visit(cell, nodes.arc_weight * w));
        }
    }
}

/// `Mf(t_i, r_j) = ∫_{|x - y(t_i)| = r_j} f₀ dS`.
pub fn forward(f: &GridDensity, geom: &ScanGeometry) -> Result<Sinogram> {
    let quad = CircleQuadrature::new(geom, f.nx(), f.ny())?;
    let nr = geom.n_radii;
    let values = f.values();
    let rows: Vec<Vec<f64>> = (0..geom.n_detectors)
        .into_par_iter()
        .map(|i| {
            (0..nr)
                .map(|j| {
                    let mut acc = 0.0;
                    quad.visit(i, j, |cell, w| acc += w * values[cell]);
                    acc
                })
                .collect()
        })
        .collect();
    Sinogram::from_values(*geom, rows.concat(), SinoKind::Function)
}

fn check_geom(u: &Sinogram, geom: &ScanGeometry) -> Result<()> {
    geom.validate()?;
    if u.geom() != geom {
        return Err(FunkError::GeometryMismatch("sinogram sampled on a different geometry".into()));
    }
    Ok(())
}

fn check_kind(u: &Sinogram, expected: SinoKind) -> Result<()> {
    if u.kind() != expected {
        return Err(FunkError::KindMismatch { expected: expected.as_str(), got: u.kind().as_str() });
    }
    Ok(())
}

/// `-Σ_i w_i u(t_i, |x - y(t_i)|)` at every cell centre inside the unit
/// ball, with `u` linearly interpolated in `r` and zero off the window.
fn detector_sum(u: &Sinogram, weights: &[f64], nx: usize, ny: usize) -> Result<GridDensity> {
    let geom = u.geom();
    let positions: Vec<Point> = (0..geom.n_detectors).map(|i| geom.detector_position(i)).collect();
    let nr = geom.n_radii;
    let dr = geom.radius_spacing();
    let vals = u.values();
    let rows: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .map(|i| {
                    let x = cell_center(nx, ny, i, j);
                    if !Region::UnitBall.contains(x) {
                        return 0.0;
                    }
                    let mut acc = 0.0;
                    for (k, (y, w)) in positions.iter().zip(weights).enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        let d = dist(*y, x);
                        if d < geom.r_min || d > geom.r_max {
                            continue;
                        }
                        let pos = (d - geom.r_min) / dr;
                        let j0 = (pos.floor() as usize).min(nr - 2);
                        let frac = pos - j0 as f64;
                        let row = &vals[k * nr..(k + 1) * nr];
                        acc += w * ((1.0 - frac) * row[j0] + frac * row[j0 + 1]);
                    }
                    -acc
                })
                .collect()
        })
        .collect();
    GridDensity::from_values(nx, ny, rows.concat())
}

/// Dual transform of the density `u·dS dr`:
/// `M°u(x) = -∫_{S_R} u(t, |x - y(t)|) dS(y)`.
pub fn dual(u: &Sinogram, geom: &ScanGeometry, nx: usize, ny: usize) -> Result<GridDensity> {
    check_geom(u, geom)?;
    check_kind(u, SinoKind::Density)?;
    detector_sum(u, &geom.detector_weights(), nx, ny)
}

/// Backprojection `M*u = M°(u·ε·dΣ) dX` of a function on `Σ`.
pub fn backproject(u: &Sinogram, geom: &ScanGeometry, nx: usize, ny: usize) -> Result<GridDensity> {
    check_geom(u, geom)?;
    check_kind(u, SinoKind::Function)?;
    let weights: Vec<f64> = geom
        .detector_weights()
        .iter()
        .zip(geom.cutoff_values())
        .map(|(w, e)| w * e)
        .collect();
    detector_sum(u, &weights, nx, ny)
}

/// Discrete defect of `⟨Mf, u⟩ = -⟨f, M°u⟩`, normalized by `‖f‖·‖u‖`.
pub fn adjoint_residual(f: &GridDensity, u: &Sinogram, geom: &ScanGeometry) -> Result<f64> {
    check_geom(u, geom)?;
    check_kind(u, SinoKind::Density)?;
    let mf = forward(f, geom)?.with_kind(SinoKind::Density);
    let dual_u = dual(u, geom, f.nx(), f.ny())?;
    let lhs = inner_product_sigma(&mf, u)?;
    let rhs = inner_product_x(f, &dual_u)?;
    Ok((lhs + rhs).abs() / (f.norm() * u.norm() + f64::MIN_POSITIVE))
}

/// Kernel `A(y, x)` of the normal operator `M*εM`: the sum over
/// `σ ∈ F(x) ∩ F(y)` of `ε(t) / |w(σ)|`, `w` being the wedge coefficient of
/// `d_σI(y,σ) ∧ d_σI(x,σ)` against `dΣ`. Orientation is chosen so that the
/// kernel is positive.
pub fn normal_kernel(x: Point, y: Point, geom: &ScanGeometry) -> Result<f64> {
    let model = geom.incidence();
    let mut total = 0.0;
    for c in bisector_crossings(x, y, geom)? {
        let w = wedge_coefficient(&model, x, y, [c.t, c.r], geom.detector_radius);
        if w.abs() < CONJUGATE_THRESHOLD {
            return Err(FunkError::ConjugateFailure(w));
        }
        total += geom.cutoff.eval_first_coordinate(geom.detector_radius * c.t.cos()) / w.abs();
    }
    Ok(total)
}

/// Least-squares line through `(xs, ys)`: `(slope, intercept, rms residual)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalProbeReport {
    pub base: Point,
    pub direction: Point,
    /// `(|x - y|, A(y, x))` along the probe ray.
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub slope_residual: f64,
    /// `exp(intercept)` of the log-log fit, the estimate of `a(y)`.
    pub constant: f64,
}

impl NormalProbeReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("distance kernel\n");
        for (d, a) in &self.samples {
            writeln!(out, "{d:.16e} {a:.16e}").unwrap();
        }
        writeln!(
            out,
            "# slope {:.16e} residual {:.16e} constant {:.16e}",
            self.slope, self.slope_residual, self.constant
        )
        .unwrap();
        out
    }
}

/// Samples `A(y₀, y₀ + ρ·u)` for each distance `ρ` and fits `log A` against
/// `log ρ`.
pub fn kernel_probe(
    base: Point,
    direction: Point,
    distances: &[f64],
    geom: &ScanGeometry,
) -> Result<NormalProbeReport> {
    if distances.len() < 2 {
        return Err(FunkError::InvalidConfig("kernel probe needs at least two distances".into()));
    }
    let norm = direction[0].hypot(direction[1]);
    if norm == 0.0 {
        return Err(FunkError::DegenerateInput("zero probe direction".into()));
    }
    let u = [direction[0] / norm, direction[1] / norm];
    let samples: Vec<(f64, f64)> = distances
        .iter()
        .map(|&rho| {
            let x = [base[0] + rho * u[0], base[1] + rho * u[1]];
            normal_kernel(x, base, geom).map(|a| (rho, a))
        })
        .collect::<Result<_>>()?;
    if samples.iter().any(|&(_, a)| a <= 0.0) {
        return Err(FunkError::DegenerateInput("kernel vanishes on the probe ray".into()));
    }
    let lx: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let (slope, intercept, residual) = fit_line(&lx, &ly);
    Ok(NormalProbeReport {
        base,
        direction: u,
        samples,
        slope,
        slope_residual: residual,
        constant: intercept.exp(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues of the discrete normal operator, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Inclusive 1-based index window of the fit.
    pub k_window: (usize, usize),
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl SpectrumReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("k lambda\n");
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{} {l:.16e}", k + 1).unwrap();
        }
        writeln!(
            out,
            "# slope {:.16e} over k in [{}, {}] residual {:.16e}",
            self.slope, self.k_window.0, self.k_window.1, self.residual
        )
        .unwrap();
        out
    }
}

/// Eigenvalues of the assembled normal operator `Mᵀ M` restricted to the
/// cells of `mask`, with a log-log fit over `k_window`.
pub fn spectrum_probe(
    geom: &ScanGeometry,
    nx: usize,
    ny: usize,
    mask: Region,
    k_window: (usize, usize),
) -> Result<SpectrumReport> {
    let projector = Projector::new(geom, nx, ny, Some(mask))?;
    let cells = projector.domain_cells().len();
    if cells > SPECTRUM_ASSEMBLY_LIMIT {
        return Err(FunkError::TooLarge { cells, limit: SPECTRUM_ASSEMBLY_LIMIT });
    }
    let (lo, hi) = k_window;
    if lo < 1 || hi <= lo || hi > cells {
        return Err(FunkError::InvalidConfig(format!(
            "k window [{lo}, {hi}] invalid for {cells} cells"
        )));
    }
    let normal: DMatrix<f64> = projector.assemble_normal();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(normal).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let ks: Vec<f64> = (lo..=hi).map(|k| (k as f64).ln()).collect();
    let ls: Vec<f64> = (lo..=hi).map(|k| eigenvalues[k - 1].max(f64::MIN_POSITIVE).ln()).collect();
    let (slope, intercept, residual) = fit_line(&ks, &ls);
    Ok(SpectrumReport { eigenvalues, k_window, slope, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_phantom, PhantomSpec, Primitive};

    fn disk_phantom(n: usize) -> GridDensity {
        make_phantom(&PhantomSpec::new(vec![Primitive::Disk { center: [0.0, 0.0], radius: 0.5, amplitude: 1.0 }]), n, n).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let geom = ScanGeometry::full(1.5, 16, 12).unwrap();
        let g = forward(&GridDensity::zeros(16, 16), &geom).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        let u = Sinogram::zeros(geom, SinoKind::Density);
        let d = dual(&u, &geom, 16, 16).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_sinogram_at_centre_radius() {
        // Arc of |x - (1.5, 0)| = 1.5 inside the disk of radius 0.5:
        // 2r·arccos((d² + r² - a²)/(2dr)) = 3·arccos(4.25/4.5).
        let expected = 3.0 * (4.25f64 / 4.5).acos();
        assert!((expected - 1.004_688_475).abs() < 1e-8);
        let geom = ScanGeometry::full(1.5, 8, 3).unwrap();
        let g = forward(&disk_phantom(256), &geom).unwrap();
        for i in 0..8 {
            assert!((g.get(i, 1) - expected).abs() / expected < 5e-3, "{}", g.get(i, 1));
        }
    }

    #[test]
    fn dual_of_constants() {
        let geom = ScanGeometry::full(1.5, 180, 160).unwrap();
        let one = Sinogram::from_fn(geom, SinoKind::Density, |_, _| 1.0);
        let d = dual(&one, &geom, 32, 32).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                let p = d.cell_center(i, j);
                if Region::UnitBall.contains(p) {
                    assert!((d.get(i, j) + 3.0 * PI).abs() < 1e-12);
                }
            }
        }
        let radial = Sinogram::from_fn(geom, SinoKind::Density, |_, r| r);
        // The centre of an even grid is a cell corner; use an odd grid.
        let d = dual(&radial, &geom, 33, 33).unwrap();
        assert!((d.get(16, 16) + 4.5 * PI).abs() < 1e-12, "{}", d.get(16, 16));
    }

    #[test]
    fn kind_and_geometry_checks() {
        let geom = ScanGeometry::full(1.5, 8, 4).unwrap();
        let other = ScanGeometry::full(1.5, 8, 5).unwrap();
        let u = Sinogram::zeros(geom, SinoKind::Function);
        assert!(matches!(dual(&u, &geom, 4, 4), Err(FunkError::KindMismatch { .. })));
        assert!(matches!(backproject(&u, &other, 4, 4), Err(FunkError::GeometryMismatch(_))));
    }

    #[test]
    fn backproject_equals_dual_for_constant_cutoff() {
        let geom = ScanGeometry::full(1.5, 36, 20).unwrap();
        let u = Sinogram::from_fn(geom, SinoKind::Function, |t, r| (2.0 * t).cos() + r * r);
        let a = backproject(&u, &geom, 24, 24).unwrap();
        let b = dual(&u.clone().with_kind(SinoKind::Density), &geom, 24, 24).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partial_backprojection_of_one_is_bounded() {
        let geom = ScanGeometry::partial(1.5, 0.3, 120, 40).unwrap();
        let one = Sinogram::from_fn(geom, SinoKind::Function, |_, _| 1.0);
        let b = backproject(&one, &geom, 24, 24).unwrap();
        let bound = 2.0 * PI * 1.5;
        assert!(b.values().iter().all(|v| v.abs() < bound));
        assert!(b.values().iter().any(|v| v.abs() > 0.5 * bound));
    }

    #[test]
    fn kernel_example_pair() {
        let geom = ScanGeometry::full(1.5, 180, 160).unwrap();
        let x = [0.3, 0.1];
        let y = [0.3, -0.1];
        assert_eq!(bisector_crossings(x, y, &geom).unwrap().len(), 2);
        // Bisector is the x-axis: detectors at t = 0 and t = π. There
        // w = ((x-y)₁ sin t - (x-y)₂ cos t)/d = ∓0.2/d with d = |y(t) - x|.
        let d0 = (1.2f64 * 1.2 + 0.01).sqrt();
        let d1 = (1.8f64 * 1.8 + 0.01).sqrt();
        let expected = d0 / 0.2 + d1 / 0.2;
        let a = normal_kernel(x, y, &geom).unwrap();
        assert!((a - expected).abs() < 1e-12 * expected, "{a} vs {expected}");
        assert_eq!(normal_kernel(y, x, &geom).unwrap(), a);
        assert!(normal_kernel(x, x, &geom).is_err());
    }

    #[test]
    fn kernel_outside_window_is_zero() {
        let geom = ScanGeometry::full(1.5, 180, 160).unwrap().with_radius_window(0.5, 0.6).unwrap();
        assert_eq!(normal_kernel([0.3, 0.1], [0.3, -0.1], &geom).unwrap(), 0.0);
    }

    #[test]
    fn fit_line_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (s, c, r) = fit_line(&xs, &ys);
        assert!((s + 0.5).abs() < 1e-14 && (c - 2.0).abs() < 1e-14 && r < 1e-14);
    }
}
