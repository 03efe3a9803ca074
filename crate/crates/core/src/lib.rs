//! Multi-phase-field topology optimization for 2D linear elasticity.
//!
//! The design variable is a vector-valued phase field on a triangulated
//! rectangle: one volume-fraction vector per mesh vertex, constrained to the
//! Gibbs simplex with a prescribed mean. Material density and the elasticity
//! tensor interpolate between the phases (the last phase is void, scaled by
//! the square of the interface thickness), which turns the structure's
//! vibration modes into a generalized eigenvalue problem `K(phi) w = lambda
//! M(phi) w`. Objectives built from those eigenvalues, optionally combined
//! with mean compliance and target-displacement tracking under static loads,
//! are minimized by a projected gradient method driven by exact discrete
//! eigenvalue sensitivities.
//!
//! Modules roughly follow the pipeline:
//!
//! * [`grid`]: structured triangle meshes and Dirichlet dof maps,
//! * [`material`]: pointwise material laws (cutoff, density, elasticity),
//! * [`sparse`]: symmetric sparse matrices and a banded Cholesky solver,
//! * [`assembly`]: stiffness/mass forms, their phase derivatives, loads,
//! * [`eigen`]: shift-invert Lanczos for the smallest eigenpairs plus a
//!   dense verification oracle,
//! * [`sensitivity`]: eigenvalue/eigenfunction derivatives and the
//!   semi-derivative of a repeated first eigenvalue,
//! * [`phasefield`]: the design variable and the admissible-set projection,
//! * [`opt`]: interface energy, eigenvalue objectives, projected gradient,
//! * [`compliance`]: state/adjoint solves and combined objectives,
//! * [`config`], [`io`]: run configuration, VTK and CSV output,
//! * [`verify`]: the self-check suite exposed by the `verify` subcommand.

pub mod assembly;
pub mod compliance;
pub mod config;
pub mod eigen;
pub mod grid;
pub mod io;
pub mod material;
pub mod opt;
pub mod phasefield;
pub mod sensitivity;
pub mod sparse;
pub mod verify;

mod error;

pub use error::{Error, Result};
