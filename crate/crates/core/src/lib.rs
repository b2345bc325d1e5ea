//! Finite element solver for quasi-static Biot poroelasticity in the
//! displacement / total pressure / fluid pressure formulation.
//!
//! Taylor-Hood P2-P1 elements for displacement and total pressure, P1 for
//! the fluid pressure, backward Euler in time. Three time steppers share
//! one set of assembled operators:
//!
//! * [`CoupledSolver`]: the monolithic 3x3 block system,
//! * [`SplitSolver::step_te`]: lagged pressure, one Stokes solve then one
//!   pressure solve,
//! * [`SplitSolver::step_iterative`]: pressure and Stokes solves alternated
//!   to a fixed point.
//!
//! [`benchmark`] drives the manufactured-solution convergence study.

pub mod assembly;
pub mod benchmark;
pub mod biot;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod params;
pub mod sparse;

pub use assembly::{
    apply_dirichlet, assemble_form, assemble_functional, korn_check, AssemblyError, Constraint, FormKind,
    FunctionalKind, KornReport,
};
pub use benchmark::{
    compute_errors, format_sci, run_level, run_study, Algorithm, ErrorReport, FieldErrors, LevelResult,
    ManufacturedCase, StudyConfig, StudyError,
};
pub use biot::{
    consistent_total_pressure, contraction_monitor, contraction_monitor_from, energy_check, BiotError, BiotState,
    ContractionReport, CoupledSolver, DiscreteSystem, EnergyReport, FrozenHomogeneous, IterationControl, IterationLog,
    PressureSolver, ProblemData, SolveStats, SplitSolver, ZeroData,
};
pub use fem::{
    eval_basis, interpolate_scalar, interpolate_vector, quadrature, FemError, FieldVector, QuadratureRule, Space,
    SpaceKind,
};
pub use linalg::{cg_solve, lu_factor, relative_residual, CgResult, Factorization, LinalgError};
pub use mesh::{build_uniform, build_uniform_with, refine, BoundaryTag, Diagonal, MeshError, Point, TriMesh};
pub use params::{ParamError, PhysParams, Preset};
pub use sparse::{BlockBuilder, CsrMatrix};
