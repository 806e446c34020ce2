use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridDensity, Region};
use crate::error::{FunkError, Result};
use crate::geometry::Point;

/// Gaussians are cut off at this many widths.
pub const GAUSSIAN_SUPPORT_WIDTHS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Disk { center: Point, radius: f64, amplitude: f64 },
    Gaussian { center: Point, width: f64, amplitude: f64 },
}

impl Primitive {
    pub fn center(&self) -> Point {
        match *self {
            Primitive::Disk { center, .. } | Primitive::Gaussian { center, .. } => center,
        }
    }

    /// Radius of the closed disk outside which the primitive vanishes.
    pub fn support_radius(&self) -> f64 {
        match *self {
            Primitive::Disk { radius, .. } => radius,
            Primitive::Gaussian { width, .. } => GAUSSIAN_SUPPORT_WIDTHS * width,
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let c = self.center();
        let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        match *self {
            Primitive::Disk { radius, amplitude, .. } => {
                if d2 <= radius * radius {
                    amplitude
                } else {
                    0.0
                }
            }
            Primitive::Gaussian { width, amplitude, .. } => {
                let cut = GAUSSIAN_SUPPORT_WIDTHS * width;
                if d2 <= cut * cut {
                    amplitude * (-d2 / (2.0 * width * width)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn check_support(&self) -> Result<()> {
        let c = self.center();
        let reach = c[0].hypot(c[1]) + self.support_radius();
        if !(reach < 1.0) || !self.support_radius().is_finite() || self.support_radius() <= 0.0 {
            return Err(FunkError::SupportViolation(format!("{self:?} reaches {reach}")));
        }
        Ok(())
    }
}

/// `disk:cx,cy,radius,amplitude` or `gauss:cx,cy,width,amplitude`.
impl std::str::FromStr for Primitive {
    type Err = FunkError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| FunkError::InvalidConfig(format!("primitive `{s}` lacks `kind:`")))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| FunkError::InvalidConfig(format!("primitive `{s}`: {e}")))?;
        if nums.len() != 4 {
            return Err(FunkError::InvalidConfig(format!("primitive `{s}` needs 4 numbers")));
        }
        let center = [nums[0], nums[1]];
        match kind.trim() {
            "disk" => Ok(Primitive::Disk { center, radius: nums[2], amplitude: nums[3] }),
            "gauss" | "gaussian" => Ok(Primitive::Gaussian { center, width: nums[2], amplitude: nums[3] }),
            other => Err(FunkError::InvalidConfig(format!("unknown primitive `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub primitives: Vec<Primitive>,
    /// Seed the primitives were drawn with, if random.
    pub seed: Option<u64>,
    pub mask: Option<Region>,
}

impl PhantomSpec {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives, seed: None, mask: None }
    }

    pub fn with_mask(mut self, mask: Region) -> Self {
        self.mask = Some(mask);
        self
    }

    /// `count` Gaussians with widths in `[0.06, 0.15]` and amplitudes in
    /// `[0.5, 1.5]`, each supported inside `mask` (the unit ball by default).
    pub fn random_gaussians(count: usize, seed: u64, mask: Option<Region>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let region = mask.unwrap_or(Region::UnitBall);
        let mut primitives = Vec::with_capacity(count);
        while primitives.len() < count {
            let width = rng.gen_range(0.06..0.15);
            let reach = GAUSSIAN_SUPPORT_WIDTHS * width;
            let center: Point = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let amplitude = rng.gen_range(0.5..1.5);
            let fits = center[0].hypot(center[1]) + reach < 0.95
                && (region != Region::HalfBall || center[0] - reach >= 0.0);
            if fits {
                primitives.push(Primitive::Gaussian { center, width, amplitude });
            }
        }
        Self { primitives, seed: Some(seed), mask }
    }

    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::check_support)
    }
}

/// Sum of the primitives at cell centres inside the unit ball (and the mask).
pub fn make_phantom(spec: &PhantomSpec, nx: usize, ny: usize) -> Result<GridDensity> {
    spec.validate()?;
    let f = GridDensity::from_fn(nx, ny, |p| spec.primitives.iter().map(|q| q.eval(p)).sum());
    Ok(match spec.mask {
        Some(region) => f.with_support(region),
        None => f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_indicator() {
        let spec = PhantomSpec::new(vec!["disk:0,0,0.5,1".parse().unwrap()]);
        let f = make_phantom(&spec, 32, 32).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                let p = f.cell_center(i, j);
                let inside = p[0].hypot(p[1]) <= 0.5;
                assert_eq!(f.get(i, j), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn empty_spec_is_zero() {
        let f = make_phantom(&PhantomSpec::default(), 8, 8).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_random_phantom_is_reproducible() {
        let a = make_phantom(&PhantomSpec::random_gaussians(3, 42, None), 64, 64).unwrap();
        let b = make_phantom(&PhantomSpec::random_gaussians(3, 42, None), 64, 64).unwrap();
        let bits = |g: &GridDensity| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = make_phantom(&PhantomSpec::random_gaussians(3, 43, None), 64, 64).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn leaking_primitive_is_rejected() {
        let spec = PhantomSpec::new(vec![Primitive::Gaussian { center: [0.8, 0.0], width: 0.1, amplitude: 1.0 }]);
        assert!(matches!(make_phantom(&spec, 8, 8), Err(FunkError::SupportViolation(_))));
        assert!("disk:0,0,1".parse::<Primitive>().is_err());
        assert!("blob:0,0,1,1".parse::<Primitive>().is_err());
    }

    #[test]
    fn half_ball_random_phantom_stays_in_k() {
        let spec = PhantomSpec::random_gaussians(4, 7, Some(Region::HalfBall));
        for p in &spec.primitives {
            assert!(p.center()[0] - p.support_radius() >= 0.0);
        }
    }
}
