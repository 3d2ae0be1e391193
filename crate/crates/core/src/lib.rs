//! Uncertainty quantification for elliptic diffusion problems on randomly
//! deformed domains with rough random diffusion coefficients.
//!
//! The random domain is handled by mapping every realization back to the
//! unit disc; the rough part of the coefficient is handled by a first-order
//! perturbation expansion around its smooth mean.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod fields;
pub mod lowrank;
pub mod mesh;
pub mod perturbation;
pub mod sparse;
pub mod uq;
mod text;

pub use error::{Error, Result};
pub use fem::{NodalField, Norms};
pub use fields::{Sample, ScalarFieldKL, VectorFieldKL};
pub use lowrank::{KLBasis, LowRankFactor};
pub use mesh::{build_disc_mesh, refine, Mesh, Point};
pub use perturbation::{SampleSolve, SampleSolver};
pub use sparse::SparseMatrix;
pub use uq::{QuadratureRule, Statistics};
