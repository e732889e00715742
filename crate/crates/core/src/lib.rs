//! Augmented mixed finite elements for Stokes interface problems with
//! piecewise-constant viscosity on the square `[-1, 1]²` split into four
//! quadrant subdomains.
//!
//! The unknowns are the stress `σ` (row-wise RT₀ or BDM₁) and the velocity `u`
//! (continuous P₁ or P₂). The crate also builds Kellogg-type singular exact
//! solutions and runs adaptive and uniform convergence studies against them.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod fespace;
pub mod kellogg;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod tensor;

pub use error::{Error, Result};
