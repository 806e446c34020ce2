//! Per-command options. Every field is optional on the command line so that a
//! `--config` file can supply it; [`Resolve::resolve`] fills defaults and
//! checks required inputs. The resolved form is what gets echoed, and it is
//! accepted back through `--config` unchanged.

use std::path::PathBuf;

use clap::Args;
use funkrad::{FunkError, Result};
use serde::{Deserialize, Serialize};

use crate::geom::{format_geometry, parse_geometry};

pub const DEFAULT_GEOMETRY: &str = "full:R=1.5,nd=180,nr=160";

pub trait Resolve: Sized {
    fn resolve(self) -> Result<Self>;
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| FunkError::InvalidConfig(format!("missing --{flag}")))
}

fn canonical_geometry(geom: Option<String>, fallback: &str) -> Result<Option<String>> {
    let text = geom.unwrap_or_else(|| fallback.to_string());
    Ok(Some(format_geometry(&parse_geometry(&text)?)))
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomArgs {
    /// Primitive `disk:cx,cy,radius,amplitude` or `gauss:cx,cy,width,amplitude` (repeatable).
    #[arg(long)]
    pub spec: Vec<String>,
    /// Number of random Gaussians added to the listed primitives.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `none`, `disk` or `half`.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Resolve for PhantomArgs {
    fn resolve(self) -> Result<Self> {
        Ok(Self {
            random: Some(self.random.unwrap_or(0)),
            seed: Some(self.seed.unwrap_or(0)),
            mask: Some(self.mask.unwrap_or_else(|| "none".into())),
            nx: Some(self.nx.unwrap_or(64)),
            ny: Some(self.ny.unwrap_or(64)),
            out: Some(required(self.out, "out")?),
            spec: self.spec,
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardArgs {
    /// Grid file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Geometry, e.g. `full:R=1.5,nd=180,nr=160` or a JSON file.
    #[arg(long)]
    pub geom: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Resolve for ForwardArgs {
    fn resolve(self) -> Result<Self> {
        Ok(Self {
            input: Some(required(self.input, "in")?),
            geom: canonical_geometry(self.geom, DEFAULT_GEOMETRY)?,
            out: Some(required(self.out, "out")?),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackprojectArgs {
    /// Sinogram file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// `literal` (signed detector-circle sum) or `transpose` (exact discrete transpose).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Resolve for BackprojectArgs {
    fn resolve(self) -> Result<Self> {
        let mode = self.mode.unwrap_or_else(|| "literal".into());
        if mode != "literal" && mode != "transpose" {
            return Err(FunkError::InvalidConfig(format!("unknown backprojection mode `{mode}`")));
        }
        Ok(Self {
            input: Some(required(self.input, "in")?),
            nx: Some(self.nx.unwrap_or(64)),
            ny: Some(self.ny.unwrap_or(64)),
            mode: Some(mode),
            out: Some(required(self.out, "out")?),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjointCheckArgs {
    /// Primitives as for `phantom`; random Gaussians are used when empty.
    #[arg(long)]
    pub spec: Vec<String>,
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coarsest geometry; each level doubles detectors and radii.
    #[arg(long)]
    pub geom: Option<String>,
    /// Coarsest grid size; each level doubles it.
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
}

impl Resolve for AdjointCheckArgs {
    fn resolve(self) -> Result<Self> {
        let levels = self.levels.unwrap_or(3);
        if levels == 0 {
            return Err(FunkError::InvalidConfig("--levels must be positive".into()));
        }
        Ok(Self {
            random: Some(self.random.unwrap_or(if self.spec.is_empty() { 3 } else { 0 })),
            seed: Some(self.seed.unwrap_or(0)),
            geom: canonical_geometry(self.geom, "full:R=1.5,nd=90,nr=80")?,
            nx: Some(self.nx.unwrap_or(64)),
            levels: Some(levels),
            spec: self.spec,
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructArgs {
    /// Sinogram file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Ground truth grid; enables the error column.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub theta_rel: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub power_iters: Option<usize>,
    /// `auto`, `none`, `disk` or `half`; `auto` picks `half` for partial scans.
    #[arg(long)]
    pub support: Option<String>,
    /// Exit with status 3 when an inner solve does not converge.
    #[arg(long)]
    pub fatal_cg: bool,
}

impl Resolve for ReconstructArgs {
    fn resolve(self) -> Result<Self> {
        let d = funkrad::KaczmarzConfig::default();
        Ok(Self {
            input: Some(required(self.input, "in")?),
            truth: self.truth,
            out: self.out,
            nx: Some(self.nx.unwrap_or(64)),
            ny: Some(self.ny.unwrap_or(64)),
            omega: Some(self.omega.unwrap_or(d.omega)),
            theta_rel: Some(self.theta_rel.unwrap_or(d.theta_rel)),
            iters: Some(self.iters.unwrap_or(d.max_iters)),
            stop_tol: Some(self.stop_tol.unwrap_or(d.stop_tol)),
            cg_tol: Some(self.cg_tol.unwrap_or(d.cg_tol)),
            cg_max_iters: Some(self.cg_max_iters.unwrap_or(d.cg_max_iters)),
            seed: Some(self.seed.unwrap_or(d.seed)),
            power_iters: Some(self.power_iters.unwrap_or(d.power_iters)),
            support: Some(self.support.unwrap_or_else(|| "auto".into())),
            fatal_cg: self.fatal_cg,
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeBuildArgs {
    #[arg(long)]
    pub deg: Option<usize>,
    /// Harmonic frequency; must exceed the degree.
    #[arg(long)]
    pub freq: Option<usize>,
    /// Comma-separated amplitudes of `φ_0 .. φ_deg`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub amps: Vec<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Use `sin(q t)` instead of `cos(q t)`.
    #[arg(long)]
    pub sine: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_amplitudes(deg: usize, amps: Vec<f64>) -> Vec<f64> {
    if amps.is_empty() {
        let mut a = vec![0.0; deg + 1];
        a[deg] = 1.0;
        a
    } else {
        amps
    }
}

impl Resolve for RangeBuildArgs {
    fn resolve(self) -> Result<Self> {
        let deg = self.deg.unwrap_or(1);
        Ok(Self {
            deg: Some(deg),
            freq: Some(self.freq.unwrap_or(deg + 1)),
            amps: default_amplitudes(deg, self.amps),
            radius: Some(self.radius.unwrap_or(1.5)),
            sine: self.sine,
            out: self.out,
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeCheckArgs {
    /// Sinogram file (full scan).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Annihilator JSON files (repeatable).
    #[arg(long)]
    pub annihilator: Vec<PathBuf>,
    /// Build one annihilator inline instead.
    #[arg(long)]
    pub deg: Option<usize>,
    #[arg(long)]
    pub freq: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub amps: Vec<f64>,
    #[arg(long)]
    pub sine: bool,
}

impl Resolve for RangeCheckArgs {
    fn resolve(self) -> Result<Self> {
        let input = Some(required(self.input, "in")?);
        if !self.annihilator.is_empty() && self.deg.is_none() {
            return Ok(Self { input, ..self });
        }
        let deg = self.deg.unwrap_or(1);
        Ok(Self {
            input,
            annihilator: self.annihilator,
            deg: Some(deg),
            freq: Some(self.freq.unwrap_or(deg + 1)),
            amps: default_amplitudes(deg, self.amps),
            sine: self.sine,
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelProbeArgs {
    #[arg(long)]
    pub geom: Option<String>,
    /// Base point `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub base: Option<String>,
    /// Probe direction `dx,dy`.
    #[arg(long, allow_hyphen_values = true)]
    pub dir: Option<String>,
    #[arg(long)]
    pub dmin: Option<f64>,
    #[arg(long)]
    pub dmax: Option<f64>,
    /// Number of log-spaced distances.
    #[arg(long)]
    pub samples: Option<usize>,
}

impl Resolve for KernelProbeArgs {
    fn resolve(self) -> Result<Self> {
        Ok(Self {
            geom: canonical_geometry(self.geom, DEFAULT_GEOMETRY)?,
            base: Some(self.base.unwrap_or_else(|| "0.3,0.1".into())),
            dir: Some(self.dir.unwrap_or_else(|| "1,0".into())),
            dmin: Some(self.dmin.unwrap_or(1e-3)),
            dmax: Some(self.dmax.unwrap_or(1e-2)),
            samples: Some(self.samples.unwrap_or(11)),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub geom: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// `disk` or `half`.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub kmin: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
}

impl Resolve for SpectrumArgs {
    fn resolve(self) -> Result<Self> {
        Ok(Self {
            geom: canonical_geometry(self.geom, DEFAULT_GEOMETRY)?,
            nx: Some(self.nx.unwrap_or(24)),
            ny: Some(self.ny.unwrap_or(24)),
            mask: Some(self.mask.unwrap_or_else(|| "disk".into())),
            kmin: Some(self.kmin.unwrap_or(10)),
            kmax: Some(self.kmax.unwrap_or(100)),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeomCheckArgs {
    #[arg(long)]
    pub geom: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Resolve for GeomCheckArgs {
    fn resolve(self) -> Result<Self> {
        Ok(Self {
            geom: canonical_geometry(self.geom, DEFAULT_GEOMETRY)?,
            samples: Some(self.samples.unwrap_or(1000)),
            seed: Some(self.seed.unwrap_or(0)),
        })
    }
}
