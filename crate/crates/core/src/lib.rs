//! Computational toolkit for higher-order Fourier analysis on finite abelian groups.
//!
//! Every construction comes with a checker; the checkers are what the test suites and
//! the `hfa verify` command run.

pub mod almost_forms;
pub mod bilinear;
pub mod bohr;
pub mod error;
pub mod fourier;
pub mod freiman;
pub mod group;
pub mod lattice;
pub mod poly_torsion;
pub mod progression;
pub mod rng;

pub use error::{HfaError, Result};
pub use group::{Character, FinAbGroup, GroupElement, TorusValue};
