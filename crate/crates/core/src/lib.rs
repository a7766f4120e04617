//! Penalty-based ensemble finite element solver for the 2D incompressible
//! Navier-Stokes equations.
//!
//! All members of an ensemble share one coefficient matrix per timestep:
//! convection is linearized about the ensemble mean (implicit) while each
//! member's fluctuation is transported explicitly. Incompressibility is
//! relaxed by a pressure penalty `div u + eps p = 0`, so the saddle-point
//! system is uniformly invertible. A CFL test on the fluctuations halves the
//! timestep when violated.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod stats;
pub mod stepper;

pub use error::{Error, Result};
pub use fem::{CoefficientVector, FunctionSpace};
pub use linalg::{Factorization, Factorizer, SparseMatrix};
pub use mesh::{generate_unit_square, mesh_size, read_msh, write_msh, Mesh};
pub use stats::StatRecord;
pub use stepper::{EnsembleSolver, EnsembleState, SchemeParams, StabilityLedger, StepOutcome};
