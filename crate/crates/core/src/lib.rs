//! Arithmetic lattices from quaternion orders over real quadratic fields,
//! lattice-point enumeration in products of hyperbolic balls, Diophantine
//! approximation experiments, spherical transforms and trace-sum estimators.

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod diophantine;
pub mod hypgeom;
pub mod latenum;
pub mod numberfield;
pub mod quad;
pub mod quaternion;
pub mod registry;
pub mod spectral;
pub mod tracesim;
