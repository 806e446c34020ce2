//! Preconditioned Kaczmarz inversion.
//!
//! The recurrence is `f ← f + ω Mᵀ R⁻¹ (φ - M f)` with `R = M Mᵀ + θ I`, where
//! `Mᵀ` is the exact transpose of the discrete forward map (see
//! [`Projector`]). The error then evolves by `Q = I - ω Mᵀ R⁻¹ M`, which is a
//! strict contraction off the kernel of `M` for `0 < ω < 2`.
//!
//! The literal sign convention of [`crate::transform::dual`] pairs with `M`
//! through a minus sign; using it here would make `R` indefinite, so this
//! module works with the positive transpose throughout.

mod cg;
mod projector;

pub use cg::{conjugate_gradient, CgOutcome};
pub use projector::{discrete_adjoint_apply, Projector};

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{FunkError, Result};
use crate::fields::{GridDensity, Region, SinoKind, Sinogram};
use crate::geometry::ScanGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KaczmarzConfig {
    pub omega: f64,
    /// `θ = theta_rel · λ_max(M Mᵀ)`.
    pub theta_rel: f64,
    pub max_iters: usize,
    /// Stop once `‖f^{k+1} - f^k‖ < stop_tol · ‖f^{k+1}‖`. Zero disables.
    pub stop_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
    pub power_iters: usize,
    /// Cells outside this region are held at zero.
    pub support: Option<Region>,
    /// Treat an unconverged inner solve as an error instead of a warning.
    pub fatal_cg: bool,
}

impl Default for KaczmarzConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            theta_rel: 1e-3,
            max_iters: 50,
            stop_tol: 0.0,
            cg_tol: 1e-6,
            cg_max_iters: 500,
            seed: 0,
            power_iters: 30,
            support: None,
            fatal_cg: false,
        }
    }
}

impl KaczmarzConfig {
    /// Defaults for a geometry: partial scans restrict to the half ball.
    pub fn for_geometry(geom: &ScanGeometry) -> Self {
        Self {
            support: if geom.is_full() { None } else { Some(Region::HalfBall) },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(FunkError::InvalidConfig(format!("omega = {} not in (0, 2)", self.omega)));
        }
        if !(self.theta_rel > 0.0 && self.theta_rel.is_finite()) {
            return Err(FunkError::InvalidConfig(format!("theta_rel = {} must be positive", self.theta_rel)));
        }
        if !(self.cg_tol > 0.0) {
            return Err(FunkError::InvalidConfig(format!("cg_tol = {} must be positive", self.cg_tol)));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(FunkError::InvalidConfig(format!("stop_tol = {} is negative", self.stop_tol)));
        }
        if self.cg_max_iters == 0 {
            return Err(FunkError::InvalidConfig("cg_max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖φ - M f^k‖_Σ`.
    pub residual: f64,
    /// `‖f^k - f_true‖_X`, when a truth was supplied.
    pub error: Option<f64>,
    /// Inner iterations spent producing `f^k` (zero for the start vector).
    pub cg_iters: usize,
    pub cg_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: KaczmarzConfig,
    pub lambda_max: f64,
    pub theta: f64,
    /// Row 0 describes the start vector.
    pub iterations: Vec<IterationRecord>,
    pub truth_norm: Option<f64>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn final_record(&self) -> &IterationRecord {
        self.iterations.last().expect("report always holds the start row")
    }

    /// `‖f - f_true‖ / ‖f_true‖` for the last iterate.
    pub fn relative_error(&self) -> Option<f64> {
        let err = self.final_record().error?;
        let norm = self.truth_norm?;
        Some(if norm > 0.0 { err / norm } else { err })
    }

    /// Whether the error column never increases.
    /// Nonincreasing up to round-off: once consistent data has been fitted to
    /// machine precision the error only jitters by a few ulps of the start.
    pub fn error_is_monotone(&self) -> Option<bool> {
        let errs: Option<Vec<f64>> = self.iterations.iter().map(|r| r.error).collect();
        let errs = errs?;
        let slack = 64.0 * f64::EPSILON * errs.first().copied().unwrap_or(0.0);
        Some(errs.windows(2).all(|w| w[1] <= w[0] + slack))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("iter  residual                error                   cg_iters\n");
        for r in &self.iterations {
            let err = r.error.map_or_else(|| "-".to_string(), |e| format!("{e:.16e}"));
            let mark = if r.cg_converged { "" } else { "*" };
            writeln!(out, "{:>4}  {:.16e}  {:<22}  {}{}", r.iter, r.residual, err, r.cg_iters, mark).unwrap();
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let last = self.final_record();
        serde_json::json!({
            "config": self.config,
            "lambda_max": self.lambda_max,
            "theta": self.theta,
            "iterations": last.iter,
            "final_residual": last.residual,
            "final_error": last.error,
            "relative_error": self.relative_error(),
            "error_monotone": self.error_is_monotone(),
            "stopped_early": self.stopped_early,
            "warnings": self.warnings,
        })
    }
}

/// A projector together with the regularization it implies.
pub struct Kaczmarz {
    projector: Projector,
    config: KaczmarzConfig,
    lambda_max: f64,
    theta: f64,
}

impl Kaczmarz {
    pub fn new(geom: &ScanGeometry, nx: usize, ny: usize, config: KaczmarzConfig) -> Result<Self> {
        config.validate()?;
        let projector = Projector::new(geom, nx, ny, config.support)?;
        let lambda_max = projector.lambda_max(config.power_iters, config.seed);
        // With M = 0 there is no scale to be relative to.
        let theta = if lambda_max > 0.0 { config.theta_rel * lambda_max } else { config.theta_rel };
        Ok(Self { projector, config, lambda_max, theta })
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn config(&self) -> &KaczmarzConfig {
        &self.config
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn solve(&self, b: &[f64]) -> CgOutcome {
        self.projector
            .solve_r_values(b, self.theta, self.config.cg_tol, self.config.cg_max_iters, |_| {})
    }

    /// `Mᵀ R⁻¹ M g`, with the inner solve outcome.
    fn normal_step(&self, g: &[f64]) -> (Vec<f64>, CgOutcome) {
        let out = self.solve(&self.projector.forward_values(g));
        (self.projector.adjoint_values(&out.solution), out)
    }

    /// `(‖Q g‖, ‖g‖)` for each `ω`, sharing one inner solve.
    pub fn q_norms(&self, g: &GridDensity, omegas: &[f64]) -> Result<Vec<(f64, f64)>> {
        if g.dims() != self.projector.dims() {
            return Err(FunkError::ShapeMismatch("grid does not match projector".into()));
        }
        let (step, out) = self.normal_step(g.values());
        if !out.converged && self.config.fatal_cg {
            return Err(FunkError::NoConvergence { iterations: out.iterations, residual: out.relative_residual });
        }
        let g_norm = g.norm();
        omegas
            .iter()
            .map(|&omega| {
                if !(omega > 0.0 && omega < 2.0) {
                    return Err(FunkError::InvalidConfig(format!("omega = {omega} not in (0, 2)")));
                }
                let q: Vec<f64> = g.values().iter().zip(&step).map(|(a, b)| a - omega * b).collect();
                Ok((self.projector.grid_dot(&q, &q).sqrt(), g_norm))
            })
            .collect()
    }

    /// Runs the recurrence from `initial` (zero if absent).
    pub fn run(
        &self,
        data: &Sinogram,
        initial: Option<&GridDensity>,
        truth: Option<&GridDensity>,
    ) -> Result<(GridDensity, ConvergenceReport)> {
        if data.kind() != SinoKind::Function {
            return Err(FunkError::KindMismatch { expected: "function", got: data.kind().as_str() });
        }
        if data.geom() != self.projector.geom() {
            return Err(FunkError::GeometryMismatch("data geometry differs from the solver's".into()));
        }
        let (nx, ny) = self.projector.dims();
        for g in initial.iter().chain(truth.iter()) {
            if g.dims() != (nx, ny) {
                return Err(FunkError::ShapeMismatch("grid does not match solver".into()));
            }
        }
        let p = &self.projector;
        let phi = data.values();
        let mut f = initial.map_or_else(|| vec![0.0; nx * ny], |g| g.values().to_vec());
        p.restrict(&mut f);
        let error_of = |f: &[f64]| {
            truth.map(|t| {
                let d: Vec<f64> = f.iter().zip(t.values()).map(|(a, b)| a - b).collect();
                p.grid_dot(&d, &d).sqrt()
            })
        };
        let residual_of = |mf: &[f64]| -> Vec<f64> { phi.iter().zip(mf).map(|(a, b)| a - b).collect() };

        let mut resid = residual_of(&p.forward_values(&f));
        let mut records = vec![IterationRecord {
            iter: 0,
            residual: p.sigma_norm(&resid),
            error: error_of(&f),
            cg_iters: 0,
            cg_converged: true,
        }];
        let mut warnings = Vec::new();
        let mut stopped_early = false;
        for k in 1..=self.config.max_iters {
            let out = self.solve(&resid);
            if !out.converged {
                if self.config.fatal_cg {
                    return Err(FunkError::NoConvergence {
                        iterations: out.iterations,
                        residual: out.relative_residual,
                    });
                }
                warnings.push(format!(
                    "iteration {k}: inner solve stopped at relative residual {:.3e} after {} steps",
                    out.relative_residual, out.iterations
                ));
            }
            let update = p.adjoint_values(&out.solution);
            for (v, u) in f.iter_mut().zip(&update) {
                *v += self.config.omega * u;
            }
            p.restrict(&mut f);
            resid = residual_of(&p.forward_values(&f));
            records.push(IterationRecord {
                iter: k,
                residual: p.sigma_norm(&resid),
                error: error_of(&f),
                cg_iters: out.iterations,
                cg_converged: out.converged,
            });
            let f_norm = p.grid_dot(&f, &f).sqrt();
            let change = self.config.omega * p.grid_dot(&update, &update).sqrt();
            if self.config.stop_tol > 0.0 && (change <= self.config.stop_tol * f_norm || f_norm == 0.0) {
                stopped_early = k < self.config.max_iters;
                break;
            }
        }
        let report = ConvergenceReport {
            config: self.config,
            lambda_max: self.lambda_max,
            theta: self.theta,
            iterations: records,
            truth_norm: truth.map(GridDensity::norm),
            stopped_early,
            warnings,
        };
        Ok((GridDensity::from_values(nx, ny, f)?, report))
    }
}

/// Reconstructs a density from function-valued data starting at zero.
pub fn reconstruct(
    data: &Sinogram,
    config: &KaczmarzConfig,
    nx: usize,
    ny: usize,
    truth: Option<&GridDensity>,
) -> Result<(GridDensity, ConvergenceReport)> {
    Kaczmarz::new(data.geom(), nx, ny, *config)?.run(data, None, truth)
}

/// `(‖Q g‖, ‖g‖)` with `Q = I - ω Mᵀ R⁻¹ M`.
pub fn q_contraction_check(g: &GridDensity, config: &KaczmarzConfig, geom: &ScanGeometry) -> Result<(f64, f64)> {
    let solver = Kaczmarz::new(geom, g.nx(), g.ny(), *config)?;
    Ok(solver.q_norms(g, &[config.omega])?[0])
}

/// `R u = M Mᵀ u + θ u` on a fresh projector over the unit ball.
pub fn apply_r(u: &Sinogram, theta: f64, nx: usize, ny: usize) -> Result<Sinogram> {
    if !(theta > 0.0) {
        return Err(FunkError::InvalidConfig(format!("theta must be positive, got {theta}")));
    }
    Projector::new(u.geom(), nx, ny, None)?.apply_r(u, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_phantom, PhantomSpec};
    use crate::transform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_geom() -> ScanGeometry {
        ScanGeometry::full(1.5, 48, 32).unwrap()
    }

    fn random_ball_grid(n: usize, rng: &mut ChaCha8Rng) -> GridDensity {
        let values: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridDensity::from_values(n, n, values).unwrap().restrict_to_ball()
    }

    fn random_sino(geom: ScanGeometry, rng: &mut ChaCha8Rng) -> Sinogram {
        let values = (0..geom.n_samples()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Sinogram::from_values(geom, values, SinoKind::Function).unwrap()
    }

    #[test]
    fn transpose_identity_holds_to_round_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for geom in [small_geom(), ScanGeometry::partial(1.5, 0.3, 40, 30).unwrap()] {
            let p = Projector::new(&geom, 24, 24, None).unwrap();
            for _ in 0..5 {
                let f = random_ball_grid(24, &mut rng);
                let u = random_sino(geom, &mut rng);
                let lhs = p.data_dot(&p.forward_values(f.values()), u.values());
                let rhs = p.grid_dot(f.values(), &p.adjoint_values(u.values()));
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
                let free = discrete_adjoint_apply(&u, &geom, 24, 24).unwrap();
                let cached = p.adjoint_values(u.values());
                for (a, b) in free.values().iter().zip(&cached) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn projector_forward_matches_transform() {
        let geom = small_geom();
        let f = make_phantom(&PhantomSpec::random_gaussians(2, 3, None), 32, 32).unwrap();
        let a = transform::forward(&f, &geom).unwrap();
        let b = Projector::new(&geom, 32, 32, None).unwrap().forward(&f).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn r_is_self_adjoint_and_shifted() {
        let geom = small_geom();
        let p = Projector::new(&geom, 20, 20, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = 0.05;
        let u = random_sino(geom, &mut rng);
        let v = random_sino(geom, &mut rng);
        let ru = p.apply_r_values(u.values(), theta);
        let rv = p.apply_r_values(v.values(), theta);
        let (a, b) = (p.data_dot(&ru, v.values()), p.data_dot(u.values(), &rv));
        let scale = p.data_dot(u.values(), u.values()).sqrt() * p.data_dot(v.values(), v.values()).sqrt();
        assert!((a - b).abs() <= 1e-10 * scale);
        assert!(p.data_dot(&ru, u.values()) >= theta * p.data_dot(u.values(), u.values()));
    }

    #[test]
    fn r_is_identity_when_no_circle_meets_the_ball() {
        let geom = ScanGeometry::full(1.5, 16, 8).unwrap().with_radius_window(0.05, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_sino(geom, &mut rng);
        let ru = apply_r(&u, 1.0, 16, 16).unwrap();
        assert_eq!(ru.values(), u.values());
    }

    #[test]
    fn power_iteration_gives_an_eigenpair() {
        let geom = small_geom();
        let p = Projector::new(&geom, 16, 16, None).unwrap();
        let lambda = p.lambda_max(200, 1);
        let dense = p.assemble_normal();
        let top = nalgebra::SymmetricEigen::new(dense).eigenvalues.max();
        assert!((lambda - top).abs() <= 1e-6 * top, "{lambda} vs {top}");
    }

    #[test]
    fn solve_r_round_trip_and_zero() {
        let geom = small_geom();
        let p = Projector::new(&geom, 20, 20, None).unwrap();
        let theta = 1e-2 * p.lambda_max(30, 0);
        let zero = Sinogram::zeros(geom, SinoKind::Function);
        assert!(p.solve_r(&zero, theta, 1e-10, 100).unwrap().values().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_sino(geom, &mut rng);
        let b = p.apply_r(&w, theta).unwrap();
        let z = p.solve_r(&b, theta, 1e-12, 2000).unwrap();
        let err = z.axpy(-1.0, &w).unwrap().norm() / w.norm();
        assert!(err < 1e-8, "{err}");
        assert!(matches!(p.solve_r(&b, theta, 1e-14, 2), Err(FunkError::NoConvergence { .. })));
    }

    #[test]
    fn zero_data_gives_zero() {
        let geom = small_geom();
        let data = Sinogram::zeros(geom, SinoKind::Function);
        let cfg = KaczmarzConfig { max_iters: 1, ..KaczmarzConfig::default() };
        let (f, report) = reconstruct(&data, &cfg, 16, 16, None).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
        assert_eq!(report.iterations.len(), 2);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let geom = small_geom();
        let truth = make_phantom(&PhantomSpec::random_gaussians(2, 9, None), 20, 20).unwrap();
        let solver = Kaczmarz::new(&geom, 20, 20, KaczmarzConfig { max_iters: 1, ..Default::default() }).unwrap();
        let data = solver.projector().forward(&truth).unwrap();
        let (f, _) = solver.run(&data, Some(&truth), None).unwrap();
        let diff = f.axpy(-1.0, &truth).unwrap().norm();
        assert!(diff <= 1e-12 * truth.norm(), "{diff}");
    }

    #[test]
    fn contraction_on_small_problem() {
        let geom = small_geom();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = KaczmarzConfig { cg_tol: 1e-10, cg_max_iters: 2000, ..Default::default() };
        let solver = Kaczmarz::new(&geom, 16, 16, cfg).unwrap();
        let g = random_ball_grid(16, &mut rng);
        for (q, g) in solver.q_norms(&g, &[0.001, 0.5, 1.0, 1.5, 1.999]).unwrap() {
            assert!(q < g, "{q} vs {g}");
        }
        let empty = Kaczmarz::new(&geom.with_radius_window(0.05, 0.4).unwrap(), 16, 16, cfg).unwrap();
        let (q, n) = empty.q_norms(&g, &[1.0]).unwrap()[0];
        assert_eq!(q, n);
    }

    #[test]
    fn config_validation() {
        assert!(KaczmarzConfig { omega: 2.0, ..Default::default() }.validate().is_err());
        assert!(KaczmarzConfig { omega: 0.0, ..Default::default() }.validate().is_err());
        assert!(KaczmarzConfig { theta_rel: 0.0, ..Default::default() }.validate().is_err());
        assert!(KaczmarzConfig { cg_tol: 0.0, ..Default::default() }.validate().is_err());
        let partial = ScanGeometry::partial(1.5, 0.3, 10, 10).unwrap();
        assert_eq!(KaczmarzConfig::for_geometry(&partial).support, Some(Region::HalfBall));
    }
}
