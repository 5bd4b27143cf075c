//! Linear maps between quadratic Hamiltonian systems whose structure matrices
//! carry independent signs, together with the Cartan block-form Hamiltonians
//! and a numeric toolkit for Hermitian and Kaehler metrics.
//!
//! The main pieces:
//!
//! - [`structure`]: sign signatures, structure matrices, coefficient fields.
//! - [`ode`]: fixed-step RK4 over a uniform parameter grid.
//! - [`solver`]: the transformation equation, its factorization `T = S K R`
//!   and the Poisson-structure test.
//! - [`cartan`]: block Hamiltonians `xbar^T M x` and their restrictions.
//! - [`kaehler`]: metrics, connections and curvature from potentials.
//! - [`scenario`]: TOML scenarios and the reports the binary writes.
//!
//! See the `examples/` directory for runnable walkthroughs.

pub mod cartan;
pub mod error;
pub mod kaehler;
pub mod ode;
pub mod scenario;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};
pub use structure::{CoefficientField, Sign, SignSignature, StructureMatrix, FIRST_FORMALISM};
