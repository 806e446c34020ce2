//! Range conditions for the circular-mean transform.
//!
//! A function `φ(y, s) = Σ_j φ_j(y) (s - R²)^j` on `Σ`, with `s = r²`, is
//! orthogonal to every `M f` exactly when `∫_{F(x)} φ dS = 0` for all `x` in
//! the ball. On `F(x)` one has `s - R² = |x|² - 2⟨x, y⟩`; putting `x = τ z`
//! with `|z| = 1` and collecting powers of `τ` gives one moment equation per
//! order `m`:
//!
//! ```text
//! E_m(z) = Σ_{k'} C(k', 2k'-m) (-2)^{2k'-m} ∫ φ_{k'}(y) ⟨z, y⟩^{2k'-m} dS(y) = 0
//! ```
//!
//! with `⌈m/2⌉ ≤ k' ≤ min(m, k)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{FunkError, Result};
use crate::fields::Sinogram;
use crate::geometry::{Point, ScanGeometry};

/// Moment residuals of certified annihilators stay below this.
pub const CERTIFY_TOL: f64 = 1e-10;

/// One harmonic `cos_amp·cos(n t) + sin_amp·sin(n t)` of `φ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub j: usize,
    pub frequency: usize,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annihilator {
    pub degree: usize,
    pub detector_radius: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Harmonic {
    Cos,
    Sin,
}

impl Annihilator {
    pub fn validate(&self) -> Result<()> {
        if !(self.detector_radius > 0.0 && self.detector_radius.is_finite()) {
            return Err(FunkError::InvalidConfig(format!("detector radius {}", self.detector_radius)));
        }
        if let Some(t) = self.terms.iter().find(|t| t.j > self.degree) {
            return Err(FunkError::InvalidConfig(format!("term j = {} exceeds degree {}", t.j, self.degree)));
        }
        if self.terms.iter().any(|t| !t.cos_amp.is_finite() || !t.sin_amp.is_finite()) {
            return Err(FunkError::NonFiniteValue("annihilator amplitude".into()));
        }
        Ok(())
    }

    /// `φ_j(t)`.
    pub fn coefficient(&self, j: usize, t: f64) -> f64 {
        self.terms
            .iter()
            .filter(|term| term.j == j)
            .map(|term| {
                let a = term.frequency as f64 * t;
                term.cos_amp * a.cos() + term.sin_amp * a.sin()
            })
            .sum()
    }

    /// `φ(y(t), s)`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let shift = s - self.detector_radius * self.detector_radius;
        (0..=self.degree)
            .rev()
            .fold(0.0, |acc, j| acc * shift + self.coefficient(j, t))
    }

    /// `φ` sampled on the grid of `geom` at `(t_i, r_j²)`.
    pub fn sample(&self, geom: &ScanGeometry) -> Result<Sinogram> {
        self.check_geometry(geom)?;
        Ok(Sinogram::from_fn(*geom, crate::fields::SinoKind::Function, |t, r| self.eval(t, r * r)))
    }

    fn check_geometry(&self, geom: &ScanGeometry) -> Result<()> {
        if (geom.detector_radius - self.detector_radius).abs() > 1e-12 * self.detector_radius {
            return Err(FunkError::GeometryMismatch(format!(
                "annihilator built for R = {}, geometry has R = {}",
                self.detector_radius, geom.detector_radius
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(text)?;
        a.validate()?;
        Ok(a)
    }
}

/// `C(n, k)` as a float.
fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficient of `∫ φ_{k'} ⟨z, y⟩^{2k'-m} dS` in the order-`m` equation.
pub fn moment_coefficient(m: usize, k_prime: usize) -> f64 {
    if 2 * k_prime < m || k_prime > m {
        return 0.0;
    }
    let p = 2 * k_prime - m;
    binomial(k_prime, p) * (-2.0f64).powi(p as i32)
}

/// `∫₀^{2π} (a cos nt + b sin nt) (R cos(t - α))^p R dt`, by orthogonality.
fn harmonic_moment(term: &Term, p: usize, alpha: f64, radius: f64) -> f64 {
    // cos^p u = 2^{-p} Σ_l C(p, l) cos((p - 2l) u)
    let n = term.frequency as i64;
    let mut total = 0.0;
    for l in 0..=p {
        let q = (p as i64 - 2 * l as i64).abs();
        if q != n {
            continue;
        }
        let c = binomial(p, l);
        let integral = if n == 0 {
            2.0 * PI * term.cos_amp
        } else {
            let qa = q as f64 * alpha;
            PI * (term.cos_amp * qa.cos() + term.sin_amp * qa.sin())
        };
        total += c * integral;
    }
    total * radius.powi(p as i32 + 1) / 2f64.powi(p as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub order: usize,
    /// Angles of the probe directions `z`.
    pub angles: Vec<f64>,
    /// `E_m(z)` at each angle.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentResidualReport {
    pub rows: Vec<MomentRow>,
}

impl MomentResidualReport {
    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.values.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_certified(&self) -> bool {
        self.max_abs() <= CERTIFY_TOL
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("order  max|E_m(z)|\n");
        for row in &self.rows {
            let m = row.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            writeln!(out, "{:>5}  {:.6e}", row.order, m).unwrap();
        }
        out
    }
}

/// `E_m(z)` for `m = 0..=2k` at `2m + 1` equispaced directions per order,
/// which pins down each trigonometric polynomial of degree `m` in `z`.
pub fn moment_residuals(a: &Annihilator) -> MomentResidualReport {
    let k = a.degree;
    let rows = (0..=2 * k)
        .map(|m| {
            let n_dirs = 2 * m + 1;
            let angles: Vec<f64> = (0..n_dirs).map(|i| 2.0 * PI * i as f64 / n_dirs as f64).collect();
            let values = angles
                .iter()
                .map(|&alpha| {
                    (m.div_ceil(2)..=m.min(k))
                        .map(|kp| {
                            let c = moment_coefficient(m, kp);
                            let p = 2 * kp - m;
                            let integral: f64 = a
                                .terms
                                .iter()
                                .filter(|t| t.j == kp)
                                .map(|t| harmonic_moment(t, p, alpha, a.detector_radius))
                                .sum();
                            c * integral
                        })
                        .sum()
                })
                .collect();
            MomentRow { order: m, angles, values }
        })
        .collect();
    MomentResidualReport { rows }
}

/// `φ_j(t) = amplitudes[j] · cos(q t)`.
pub fn build_annihilator(k: usize, q: usize, amplitudes: &[f64], detector_radius: f64) -> Result<Annihilator> {
    build_annihilator_with(k, q, amplitudes, detector_radius, Harmonic::Cos)
}

/// As [`build_annihilator`], with a choice of harmonic. The result is
/// certified against [`moment_residuals`] before it is returned.
pub fn build_annihilator_with(
    k: usize,
    q: usize,
    amplitudes: &[f64],
    detector_radius: f64,
    harmonic: Harmonic,
) -> Result<Annihilator> {
    if q <= k {
        return Err(FunkError::FrequencyTooLow { degree: k, frequency: q });
    }
    if amplitudes.len() != k + 1 {
        return Err(FunkError::InvalidConfig(format!(
            "degree {k} needs {} amplitudes, got {}",
            k + 1,
            amplitudes.len()
        )));
    }
    let terms = amplitudes
        .iter()
        .enumerate()
        .filter(|(_, &amp)| amp != 0.0)
        .map(|(j, &amp)| match harmonic {
            Harmonic::Cos => Term { j, frequency: q, cos_amp: amp, sin_amp: 0.0 },
            Harmonic::Sin => Term { j, frequency: q, cos_amp: 0.0, sin_amp: amp },
        })
        .collect();
    let a = Annihilator { degree: k, detector_radius, terms };
    a.validate()?;
    let report = moment_residuals(&a);
    if !report.is_certified() {
        return Err(FunkError::InvalidConfig(format!(
            "moment residual {:.3e} exceeds {CERTIFY_TOL:e}",
            report.max_abs()
        )));
    }
    Ok(a)
}

/// `|2⟨x, y(t)⟩ + s - |x|² - R²|` with `s = |x - y(t)|²`.
pub fn hyperplane_check(x: Point, t: f64, geom: &ScanGeometry) -> f64 {
    let y = geom.incidence().detector(t);
    let s = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    let r2 = geom.detector_radius * geom.detector_radius;
    (2.0 * (x[0] * y[0] + x[1] * y[1]) + s - (x[0] * x[0] + x[1] * x[1]) - r2).abs()
}

/// `|∫_{F(x)} φ dS|` by the periodic trapezoid rule on the detectors of
/// `geom`.
pub fn annihilation_check(a: &Annihilator, x: Point, geom: &ScanGeometry) -> Result<f64> {
    if !geom.is_full() {
        return Err(FunkError::PartialScanUnsupported);
    }
    a.check_geometry(geom)?;
    let w = geom.detector_spacing() * geom.detector_radius;
    let sum: f64 = (0..geom.n_detectors)
        .map(|i| {
            let t = geom.detector_angle(i);
            let y = geom.detector_position(i);
            let s = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            a.eval(t, s)
        })
        .sum();
    Ok((sum * w).abs())
}

/// `|⟨g, φ⟩_Σ| / (‖g‖ ‖φ‖)` with `φ` sampled on the geometry of `g`.
pub fn range_residual(g: &Sinogram, a: &Annihilator) -> Result<f64> {
    if !g.geom().is_full() {
        return Err(FunkError::PartialScanUnsupported);
    }
    let phi = a.sample(g.geom())?;
    let num = crate::fields::inner_product_sigma(g, &phi)?;
    Ok(num.abs() / (g.norm() * phi.norm() + f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SinoKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coefficients_match_listed_rows() {
        assert_eq!(moment_coefficient(0, 0), 1.0);
        assert_eq!(moment_coefficient(1, 1), -2.0);
        assert_eq!(moment_coefficient(2, 2), 4.0);
        assert_eq!(moment_coefficient(2, 1), 1.0);
        assert_eq!(moment_coefficient(3, 3), -8.0);
        assert_eq!(moment_coefficient(3, 2), -4.0);
        assert_eq!(moment_coefficient(4, 4), 16.0);
        assert_eq!(moment_coefficient(4, 3), 12.0);
        assert_eq!(moment_coefficient(4, 2), 1.0);
        assert_eq!(moment_coefficient(4, 1), 0.0);
    }

    /// Brute-force the moment integral with a fine periodic trapezoid rule.
    fn quadrature_moment(term: &Term, p: usize, alpha: f64, radius: f64) -> f64 {
        let n = 512;
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                let a = term.frequency as f64 * t;
                let phi = term.cos_amp * a.cos() + term.sin_amp * a.sin();
                phi * (radius * (t - alpha).cos()).powi(p as i32) * radius
            })
            .sum::<f64>()
            * 2.0
            * PI
            / n as f64
    }

    #[test]
    fn analytic_moments_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let term = Term {
                j: 0,
                frequency: rng.gen_range(0..6),
                cos_amp: rng.gen_range(-1.0..1.0),
                sin_amp: rng.gen_range(-1.0..1.0),
            };
            let p = rng.gen_range(0..7);
            let alpha = rng.gen_range(0.0..2.0 * PI);
            let exact = harmonic_moment(&term, p, alpha, 1.3);
            let quad = quadrature_moment(&term, p, alpha, 1.3);
            assert!((exact - quad).abs() < 1e-10, "{exact} vs {quad}");
        }
    }

    #[test]
    fn zero_average_function_is_degree_zero_annihilator() {
        let a = build_annihilator(0, 1, &[1.0], 1.5).unwrap();
        let report = moment_residuals(&a);
        assert_eq!(report.rows.len(), 1);
        assert!(report.max_abs() < 1e-14);
    }

    #[test]
    fn constant_is_not_an_annihilator() {
        let a = Annihilator {
            degree: 0,
            detector_radius: 1.5,
            terms: vec![Term { j: 0, frequency: 0, cos_amp: 1.0, sin_amp: 0.0 }],
        };
        assert!((moment_residuals(&a).max_abs() - 3.0 * PI).abs() < 1e-12);
        let geom = ScanGeometry::full(1.5, 64, 8).unwrap();
        let v = annihilation_check(&a, [0.2, -0.4], &geom).unwrap();
        assert!((v - 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn listed_examples_certify() {
        build_annihilator(3, 5, &[1.0, 0.5, -0.25, 2.0], 1.5).unwrap();
        build_annihilator_with(2, 3, &[0.0, 1.0, 1.0], 2.0, Harmonic::Sin).unwrap();
        assert!(matches!(
            build_annihilator(2, 2, &[1.0, 1.0, 1.0], 1.5),
            Err(FunkError::FrequencyTooLow { .. })
        ));
        assert!(build_annihilator(1, 2, &[1.0], 1.5).is_err());
    }

    #[test]
    fn low_frequency_coefficient_fails_certification() {
        // cos t in φ₁ has a nonzero linear moment.
        let a = Annihilator {
            degree: 1,
            detector_radius: 1.5,
            terms: vec![Term { j: 1, frequency: 1, cos_amp: 1.0, sin_amp: 0.0 }],
        };
        assert!(!moment_residuals(&a).is_certified());
    }

    #[test]
    fn pointwise_annihilation() {
        let geom = ScanGeometry::full(1.5, 64, 8).unwrap();
        let a = build_annihilator(1, 2, &[0.0, 1.0], 1.5).unwrap();
        assert!(annihilation_check(&a, [0.5, 0.3], &geom).unwrap() <= 1e-12);
        let partial = ScanGeometry::partial(1.5, 0.3, 16, 8).unwrap();
        assert!(matches!(annihilation_check(&a, [0.0, 0.0], &partial), Err(FunkError::PartialScanUnsupported)));
    }

    #[test]
    fn centre_reduces_to_zeroth_coefficient() {
        let geom = ScanGeometry::full(1.5, 64, 8).unwrap();
        let a = Annihilator {
            degree: 1,
            detector_radius: 1.5,
            terms: vec![
                Term { j: 0, frequency: 0, cos_amp: 0.7, sin_amp: 0.0 },
                Term { j: 1, frequency: 0, cos_amp: 5.0, sin_amp: 0.0 },
            ],
        };
        let v = annihilation_check(&a, [0.0, 0.0], &geom).unwrap();
        assert!((v - 0.7 * 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn hyperplane_identity() {
        let geom = ScanGeometry::full(1.5, 8, 8).unwrap();
        assert!(hyperplane_check([0.5, 0.0], 0.0, &geom) < 1e-15);
        assert!(hyperplane_check([0.0, 0.0], 1.0, &geom) < 1e-15);
    }

    #[test]
    fn sampled_annihilator_has_unit_self_residual() {
        let geom = ScanGeometry::full(1.5, 40, 30).unwrap();
        let a = build_annihilator(1, 2, &[0.0, 1.0], 1.5).unwrap();
        let phi = a.sample(&geom).unwrap();
        assert!((range_residual(&phi, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_frequencies_are_orthogonal() {
        let geom = ScanGeometry::full(1.5, 40, 30).unwrap();
        let a = build_annihilator(1, 2, &[1.0, 1.0], 1.5).unwrap().sample(&geom).unwrap();
        let b = build_annihilator(1, 3, &[1.0, -0.5], 1.5).unwrap().sample(&geom).unwrap();
        let ab = crate::fields::inner_product_sigma(&a, &b).unwrap();
        assert!(ab.abs() < 1e-10 * a.norm() * b.norm());
    }

    #[test]
    fn geometry_radius_must_match() {
        let geom = ScanGeometry::full(2.0, 16, 8).unwrap();
        let a = build_annihilator(0, 1, &[1.0], 1.5).unwrap();
        let g = Sinogram::zeros(geom, SinoKind::Function);
        assert!(matches!(range_residual(&g, &a), Err(FunkError::GeometryMismatch(_))));
    }

    #[test]
    fn json_round_trip() {
        let a = build_annihilator(2, 4, &[1.0, -1.0, 0.5], 1.5).unwrap();
        let back = Annihilator::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back);
        let v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(v["terms"][0]["frequency"], 4);
        assert!(Annihilator::from_json(r#"{"degree":0,"detector_radius":1.5,"terms":[{"j":2,"frequency":1,"cos_amp":1,"sin_amp":0}]}"#).is_err());
    }
}
