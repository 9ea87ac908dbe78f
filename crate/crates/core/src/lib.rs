//! Buckling bifurcation diagrams for hyperelastic beams and tubes.
//!
//! The crate computes post-buckling equilibrium branches of compressed
//! hyperelastic structures in two stages. A high-fidelity stage discretizes
//! the nonlinear elasticity equations with linear simplex finite elements
//! and traces solution branches with Newton-based parameter continuation. An
//! offline/online reduction stage compresses high-fidelity sweeps into a POD
//! basis, replays the continuation in the reduced space (Galerkin
//! projection), and optionally hyper-reduces the nonlinear term with
//! discrete empirical interpolation so the online cost no longer scales with
//! the mesh.
//!
//! Module map:
//! - [`mesh`]: structured beam/tube simplicial meshes with tagged boundaries
//! - [`constitutive`]: Saint Venant-Kirchhoff and neo-Hookean laws
//! - [`bc`], [`assembly`], [`sparse`]: boundary data, FE operators, linear solves
//! - [`geomap`]: piecewise-affine geometry parametrization (pull-back)
//! - [`solver`]: Newton iteration and parameter continuation
//! - [`rom`]: snapshot collection, POD compression, reduced Galerkin systems
//! - [`deim`]: discrete empirical interpolation of the internal force
//! - [`scenario`]: deserialized study descriptions (TOML)
//! - [`artifacts`]: binary persistence of offline results
//! - [`driver`]: offline/online/compare pipelines used by the CLI

pub mod artifacts;
pub mod assembly;
pub mod bc;
pub mod constitutive;
pub mod deim;
pub mod driver;
pub mod error;
pub mod geomap;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod rom;
pub mod scenario;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
