//! Generalized Funk (spherical-mean) transform for thermoacoustic tomography.
//!
//! The crate works in two dimensions. Densities live on a cell-centred grid
//! over `[-1, 1]^2` and are supported in the unit disk; measurements live on
//! the product of a detector circle of radius `R > 1` (or an arc of it) and a
//! window of radii.
//!
//! * [`geometry`]: incidence model `I(x; t, r) = |y(t) - x| - r`, scan
//!   geometries, cutoff profiles, and the `det Φ` / conjugate-point
//!   diagnostics.
//! * [`fields`]: grid densities, sinograms, quadrature inner products,
//!   phantoms and the text file formats.
//! * [`transform`]: forward circle integrals, the dual transform,
//!   backprojection, the normal-operator kernel and spectrum probes.
//! * [`kaczmarz`]: exact discrete transpose, the regularized operator
//!   `R = M Mᵀ + θ I`, and the preconditioned Kaczmarz recurrence.
//! * [`range`]: moment systems and annihilators of the range of `M`.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod kaczmarz;
pub mod range;
pub mod transform;

pub use error::{FunkError, Result};
pub use fields::{GridDensity, PhantomSpec, Primitive, Region, SinoKind, Sinogram};
pub use geometry::{CutoffKind, CutoffProfile, Point, ScanGeometry, SphericalIncidence};
pub use kaczmarz::{ConvergenceReport, KaczmarzConfig, Projector};
pub use range::Annihilator;
