//! Incidence model, scan geometry and well-posedness diagnostics.
//!
//! The measurement space is parameterized by `σ = (t, r)`: `t` is the
//! detector angle, `y(t) = R·(cos t, sin t)`, and `r` the radius of the
//! integration circle. Wedge products of one-forms on this space are
//! reported relative to the area form `dΣ = R dt ∧ dr`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FunkError, Result};

pub type Point = [f64; 2];

/// Closest approach of `x` to a detector below which the spherical
/// incidence function is treated as non-differentiable.
const DEGENERATE_DISTANCE: f64 = 1e-12;

/// A smooth defining function `I(x, σ)` of the incidence manifold.
///
/// `mixed_hessian(x, σ)[i][j]` is `∂²I / ∂x_i ∂σ_j`.
pub trait IncidenceModel {
    fn evaluate(&self, x: Point, sigma: [f64; 2]) -> f64;
    fn grad_x(&self, x: Point, sigma: [f64; 2]) -> [f64; 2];
    fn grad_sigma(&self, x: Point, sigma: [f64; 2]) -> [f64; 2];
    fn mixed_hessian(&self, x: Point, sigma: [f64; 2]) -> [[f64; 2]; 2];

    /// Whether the derivatives above are undefined at `(x, σ)`.
    fn is_degenerate(&self, _x: Point, _sigma: [f64; 2]) -> bool {
        false
    }
}

/// `I(x; t, r) = |y(t) - x| - r` with detectors on a circle of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalIncidence {
    pub detector_radius: f64,
}

impl SphericalIncidence {
    pub fn new(detector_radius: f64) -> Self {
        Self { detector_radius }
    }

    pub fn detector(&self, t: f64) -> Point {
        [self.detector_radius * t.cos(), self.detector_radius * t.sin()]
    }

    fn detector_velocity(&self, t: f64) -> Point {
        [-self.detector_radius * t.sin(), self.detector_radius * t.cos()]
    }
}

impl IncidenceModel for SphericalIncidence {
    fn evaluate(&self, x: Point, sigma: [f64; 2]) -> f64 {
        dist(self.detector(sigma[0]), x) - sigma[1]
    }

    fn grad_x(&self, x: Point, sigma: [f64; 2]) -> [f64; 2] {
        let y = self.detector(sigma[0]);
        let d = dist(y, x);
        [(x[0] - y[0]) / d, (x[1] - y[1]) / d]
    }

    fn grad_sigma(&self, x: Point, sigma: [f64; 2]) -> [f64; 2] {
        let y = self.detector(sigma[0]);
        let dy = self.detector_velocity(sigma[0]);
        let d = dist(y, x);
        [((y[0] - x[0]) * dy[0] + (y[1] - x[1]) * dy[1]) / d, -1.0]
    }

    fn mixed_hessian(&self, x: Point, sigma: [f64; 2]) -> [[f64; 2]; 2] {
        let y = self.detector(sigma[0]);
        let dy = self.detector_velocity(sigma[0]);
        let d = dist(y, x);
        let dd_dt = ((y[0] - x[0]) * dy[0] + (y[1] - x[1]) * dy[1]) / d;
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            // ∂/∂t of (x_i - y_i)/d; nothing depends on r.
            h[i][0] = -dy[i] / d - (x[i] - y[i]) * dd_dt / (d * d);
        }
        h
    }

    fn is_degenerate(&self, x: Point, sigma: [f64; 2]) -> bool {
        dist(self.detector(sigma[0]), x) < DEGENERATE_DISTANCE
    }
}

/// Determinant of the bordered matrix
///
/// ```text
/// | ∂²I/∂x1∂σ1  ∂²I/∂x1∂σ2  ∂I/∂x1 |
/// | ∂²I/∂x2∂σ1  ∂²I/∂x2∂σ2  ∂I/∂x2 |
/// | ∂I/∂σ1      ∂I/∂σ2      I      |
/// ```
///
/// whose non-vanishing on the incidence set is equivalent to the incidence
/// projections having full rank and the tangent-hyperplane map being a local
/// diffeomorphism.
pub fn phi_determinant<M: IncidenceModel + ?Sized>(
    model: &M,
    x: Point,
    sigma: [f64; 2],
) -> Result<f64> {
    if model.is_degenerate(x, sigma) {
        return Err(FunkError::DegenerateInput(format!(
            "x = {x:?} coincides with the detector at σ = {sigma:?}"
        )));
    }
    let h = model.mixed_hessian(x, sigma);
    let gx = model.grad_x(x, sigma);
    let gs = model.grad_sigma(x, sigma);
    let i = model.evaluate(x, sigma);
    let phi = [
        [h[0][0], h[0][1], gx[0]],
        [h[1][0], h[1][1], gx[1]],
        [gs[0], gs[1], i],
    ];
    Ok(det3(&phi))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    ConstantOne,
    SmoothPartial,
}

impl CutoffKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CutoffKind::ConstantOne => "constant-one",
            CutoffKind::SmoothPartial => "smooth-partial",
        }
    }
}

impl std::str::FromStr for CutoffKind {
    type Err = FunkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant-one" | "one" => Ok(CutoffKind::ConstantOne),
            "smooth-partial" | "smooth" => Ok(CutoffKind::SmoothPartial),
            other => Err(FunkError::InvalidConfig(format!("unknown cutoff kind `{other}`"))),
        }
    }
}

/// Detector weight `ε(y) = ε₀(y₁)`.
///
/// The smooth-partial profile is 1 on `[0, ∞)`, 0 on `(-∞, -δ]`, and the
/// quintic smoothstep `s(v) = v³(10 - 15v + 6v²)` of `v = 1 + u/δ` in
/// between, which makes it twice continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub kind: CutoffKind,
    pub delta: f64,
}

impl CutoffProfile {
    pub fn constant_one() -> Self {
        Self { kind: CutoffKind::ConstantOne, delta: f64::INFINITY }
    }

    pub fn smooth_partial(delta: f64) -> Self {
        Self { kind: CutoffKind::SmoothPartial, delta }
    }

    /// `ε₀(u)` for the first detector coordinate `u = y₁`.
    pub fn eval_first_coordinate(&self, u: f64) -> f64 {
        match self.kind {
            CutoffKind::ConstantOne => 1.0,
            CutoffKind::SmoothPartial => {
                if u >= 0.0 {
                    1.0
                } else if u <= -self.delta {
                    0.0
                } else {
                    smoothstep(1.0 + u / self.delta)
                }
            }
        }
    }
}

fn smoothstep(v: f64) -> f64 {
    v * v * v * (10.0 - 15.0 * v + 6.0 * v * v)
}

/// `ε` at detector angle `t`.
pub fn cutoff_eval(profile: &CutoffProfile, t: f64, geom: &ScanGeometry) -> f64 {
    profile.eval_first_coordinate(geom.detector_radius * t.cos())
}

/// Sampling of the measurement space: detector arc × radius window.
///
/// With `delta = None` detectors sit at `t_i = 2πi/n` around the full circle.
/// With `delta = Some(δ)` they are spread uniformly, endpoints included, over
/// the closure of the arc `{t : R cos t > -δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScanGeometryJson", into = "ScanGeometryJson")]
pub struct ScanGeometry {
    pub detector_radius: f64,
    pub delta: Option<f64>,
    pub n_detectors: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub cutoff: CutoffProfile,
}

impl ScanGeometry {
    /// Full detector circle with the default radius window `[max(1e-6, R-1), R+1]`.
    pub fn full(detector_radius: f64, n_detectors: usize, n_radii: usize) -> Result<Self> {
        let geom = Self {
            detector_radius,
            delta: None,
            n_detectors,
            r_min: default_r_min(detector_radius),
            r_max: detector_radius + 1.0,
            n_radii,
            cutoff: CutoffProfile::constant_one(),
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Partial arc `S_δ` with the smooth-partial cutoff.
    pub fn partial(
        detector_radius: f64,
        delta: f64,
        n_detectors: usize,
        n_radii: usize,
    ) -> Result<Self> {
        let geom = Self {
            detector_radius,
            delta: Some(delta),
            n_detectors,
            r_min: default_r_min(detector_radius),
            r_max: detector_radius + 1.0,
            n_radii,
            cutoff: CutoffProfile::smooth_partial(delta),
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn with_radius_window(mut self, r_min: f64, r_max: f64) -> Result<Self> {
        self.r_min = r_min;
        self.r_max = r_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cutoff(mut self, kind: CutoffKind) -> Result<Self> {
        self.cutoff = match kind {
            CutoffKind::ConstantOne => CutoffProfile::constant_one(),
            CutoffKind::SmoothPartial => match self.delta {
                Some(d) => CutoffProfile::smooth_partial(d),
                None => {
                    return Err(FunkError::InvalidConfig(
                        "smooth-partial cutoff requires a partial scan (delta)".into(),
                    ))
                }
            },
        };
        Ok(self)
    }

    /// Same geometry with detector and radius counts multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let mut g = *self;
        g.n_detectors *= factor;
        g.n_radii *= factor;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FunkError::InvalidConfig(msg));
        if !(self.detector_radius.is_finite() && self.detector_radius > 1.0) {
            return bad(format!("detector radius must exceed 1, got {}", self.detector_radius));
        }
        if !(self.r_min.is_finite() && self.r_max.is_finite()) {
            return bad("radius window must be finite".into());
        }
        if self.r_max <= 0.0 {
            return Err(FunkError::GeometryMismatch(format!(
                "r_max = {} is not positive",
                self.r_max
            )));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return bad(format!("need 0 < r_min < r_max, got [{}, {}]", self.r_min, self.r_max));
        }
        if self.n_radii < 2 {
            return bad("n_radii must be at least 2".into());
        }
        match self.delta {
            None => {
                if self.n_detectors < 1 {
                    return bad("n_detectors must be positive".into());
                }
                if self.cutoff.kind != CutoffKind::ConstantOne {
                    return bad("full scan requires the constant-one cutoff".into());
                }
            }
            Some(d) => {
                if !(d.is_finite() && d >= 0.0 && d < self.detector_radius) {
                    return bad(format!(
                        "delta must lie in [0, R) for a partial arc, got {d}"
                    ));
                }
                if self.n_detectors < 2 {
                    return bad("partial arc needs at least 2 detectors".into());
                }
                if self.cutoff.kind == CutoffKind::SmoothPartial && self.cutoff.delta != d {
                    return bad("cutoff delta disagrees with geometry delta".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.delta.is_none()
    }

    pub fn incidence(&self) -> SphericalIncidence {
        SphericalIncidence::new(self.detector_radius)
    }

    /// Half-width of the admissible detector arc, `π` for the full circle.
    pub fn arc_half_width(&self) -> f64 {
        match self.delta {
            None => PI,
            Some(d) => (-d / self.detector_radius).acos(),
        }
    }

    pub fn detector_spacing(&self) -> f64 {
        match self.delta {
            None => 2.0 * PI / self.n_detectors as f64,
            Some(_) => 2.0 * self.arc_half_width() / (self.n_detectors - 1) as f64,
        }
    }

    pub fn detector_angle(&self, i: usize) -> f64 {
        match self.delta {
            None => i as f64 * self.detector_spacing(),
            Some(_) => -self.arc_half_width() + i as f64 * self.detector_spacing(),
        }
    }

    pub fn detector_angles(&self) -> Vec<f64> {
        (0..self.n_detectors).map(|i| self.detector_angle(i)).collect()
    }

    pub fn detector_position(&self, i: usize) -> Point {
        self.incidence().detector(self.detector_angle(i))
    }

    /// Whether angle `t` lies on the closed admissible arc.
    pub fn contains_angle(&self, t: f64) -> bool {
        match self.delta {
            None => true,
            Some(_) => {
                let w = wrap_angle(t);
                w.abs() <= self.arc_half_width() * (1.0 + 1e-14)
            }
        }
    }

    /// Arc-length quadrature weights `R·Δt`, periodic on the full circle and
    /// trapezoidal on a partial arc.
    pub fn detector_weights(&self) -> Vec<f64> {
        let w = self.detector_radius * self.detector_spacing();
        let n = self.n_detectors;
        (0..n)
            .map(|i| if !self.is_full() && (i == 0 || i + 1 == n) { 0.5 * w } else { w })
            .collect()
    }

    pub fn radius_spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_radii - 1) as f64
    }

    pub fn radius(&self, j: usize) -> f64 {
        if j + 1 == self.n_radii {
            self.r_max
        } else {
            self.r_min + j as f64 * self.radius_spacing()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_radii).map(|j| self.radius(j)).collect()
    }

    /// Trapezoidal weights in `r`.
    pub fn radius_weights(&self) -> Vec<f64> {
        let dr = self.radius_spacing();
        (0..self.n_radii)
            .map(|j| if j == 0 || j + 1 == self.n_radii { 0.5 * dr } else { dr })
            .collect()
    }

    /// Product weights of the `dΣ = R dt dr` quadrature, detector-major.
    pub fn sigma_weights(&self) -> Vec<f64> {
        let wt = self.detector_weights();
        let wr = self.radius_weights();
        let mut out = Vec::with_capacity(wt.len() * wr.len());
        for a in &wt {
            for b in &wr {
                out.push(a * b);
            }
        }
        out
    }

    pub fn cutoff_values(&self) -> Vec<f64> {
        (0..self.n_detectors)
            .map(|i| cutoff_eval(&self.cutoff, self.detector_angle(i), self))
            .collect()
    }

    pub fn n_samples(&self) -> usize {
        self.n_detectors * self.n_radii
    }
}

fn default_r_min(detector_radius: f64) -> f64 {
    (detector_radius - 1.0).max(1e-6)
}

fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Serialize, Deserialize)]
struct ScanGeometryJson {
    detector_radius: f64,
    delta: Option<f64>,
    n_detectors: usize,
    #[serde(default)]
    r_min: Option<f64>,
    #[serde(default)]
    r_max: Option<f64>,
    n_radii: usize,
    #[serde(default)]
    cutoff_kind: Option<CutoffKind>,
}

impl TryFrom<ScanGeometryJson> for ScanGeometry {
    type Error = FunkError;

    fn try_from(j: ScanGeometryJson) -> Result<Self> {
        let base = match j.delta {
            None => ScanGeometry::full(j.detector_radius, j.n_detectors, j.n_radii)?,
            Some(d) => ScanGeometry::partial(j.detector_radius, d, j.n_detectors, j.n_radii)?,
        };
        let r_min = j.r_min.unwrap_or(base.r_min);
        let r_max = j.r_max.unwrap_or(base.r_max);
        let geom = base.with_radius_window(r_min, r_max)?;
        match j.cutoff_kind {
            Some(kind) => geom.with_cutoff(kind),
            None => Ok(geom),
        }
    }
}

impl From<ScanGeometry> for ScanGeometryJson {
    fn from(g: ScanGeometry) -> Self {
        Self {
            detector_radius: g.detector_radius,
            delta: g.delta,
            n_detectors: g.n_detectors,
            r_min: Some(g.r_min),
            r_max: Some(g.r_max),
            n_radii: g.n_radii,
            cutoff_kind: Some(g.cutoff.kind),
        }
    }
}

/// A point of `F(x) ∩ F(y)`: detector angle and common radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub r: f64,
}

/// Detectors equidistant from `x` and `y`, restricted to the admissible arc
/// and the radius window. Closed-form intersection of the perpendicular
/// bisector of `[x, y]` with the detector circle.
pub fn bisector_crossings(x: Point, y: Point, geom: &ScanGeometry) -> Result<Vec<Crossing>> {
    let dx = [x[0] - y[0], x[1] - y[1]];
    let len = dx[0].hypot(dx[1]);
    if len == 0.0 {
        return Err(FunkError::DegenerateInput("x and y coincide".into()));
    }
    let n = [dx[0] / len, dx[1] / len];
    let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
    // Bisector: {p : p·n = c}.
    let c = mid[0] * n[0] + mid[1] * n[1];
    let rr = geom.detector_radius;
    if c.abs() > rr {
        return Ok(Vec::new());
    }
    let h = (rr * rr - c * c).max(0.0).sqrt();
    let perp = [-n[1], n[0]];
    let mut candidates = vec![[c * n[0] + h * perp[0], c * n[1] + h * perp[1]]];
    if h > 0.0 {
        candidates.push([c * n[0] - h * perp[0], c * n[1] - h * perp[1]]);
    }
    let out = candidates
        .into_iter()
        .filter_map(|p| {
            let t = p[1].atan2(p[0]);
            let r = dist(geom.incidence().detector(t), x);
            (geom.contains_angle(t) && r >= geom.r_min && r <= geom.r_max)
                .then_some(Crossing { t, r })
        })
        .collect();
    Ok(out)
}

/// Coefficient of `d_σI(y, σ) ∧ d_σI(x, σ)` relative to `dΣ = R dt ∧ dr`.
pub fn wedge_coefficient<M: IncidenceModel + ?Sized>(
    model: &M,
    x: Point,
    y: Point,
    sigma: [f64; 2],
    detector_radius: f64,
) -> f64 {
    let a = model.grad_sigma(y, sigma);
    let b = model.grad_sigma(x, sigma);
    (a[0] * b[1] - a[1] * b[0]) / detector_radius
}

/// Smallest wedge magnitude over `F(x) ∩ F(y)` inside the scan window, or
/// `+∞` when the intersection is empty there. A positive gap certifies that
/// `x` and `y` are not conjugate with respect to the sampled window only.
pub fn conjugate_gap(x: Point, y: Point, geom: &ScanGeometry) -> Result<f64> {
    let model = geom.incidence();
    let crossings = bisector_crossings(x, y, geom)?;
    Ok(crossings
        .iter()
        .map(|c| wedge_coefficient(&model, x, y, [c.t, c.r], geom.detector_radius).abs())
        .fold(f64::INFINITY, f64::min))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
