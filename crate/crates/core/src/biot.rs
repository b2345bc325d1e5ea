//! Time stepping for the three-field Biot system.
//!
//! With unit-coefficient operators `A` (strain), `B` (divergence, P1 rows),
//! `M` (P1 mass) and `S` (P1 stiffness), one backward Euler step reads
//!
//! ```text
//!  2mu A u  -  B^T xi                             = F_u(t_n)
//!  -B u     -  M xi / lambda  +  alpha M p / lambda = 0
//!  alpha M xi / lambda  -  (s M + K dt S) p         = -(dt F_p(t_n) + s M p' - alpha M xi' / lambda)
//! ```
//!
//! where `s = c0 + alpha^2/lambda` and primes mark the previous level. The
//! second and third rows are negated relative to the weak form so that the
//! block matrix is symmetric. Displacement and fluid pressure carry
//! Dirichlet data on the essential sides; the total pressure is free.
//!
//! Loads and boundary values are stored as spatial profiles and scaled by
//! [`ProblemData::time_factor`] at each step, so every operator is
//! assembled and factorized once.

use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{assemble_form, assemble_functional, AssemblyError, Constraint, FormKind, FunctionalKind};
use crate::fem::{interpolate_scalar, interpolate_vector, FemError, FieldVector, Space, SpaceKind};
use crate::linalg::{cg_solve, lu_factor, Factorization, LinalgError};
use crate::mesh::{BoundaryTag, Point, TriMesh};
use crate::params::PhysParams;
use crate::sparse::{BlockBuilder, CsrMatrix};

#[derive(Debug, Error)]
pub enum BiotError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("iteration did not reach tolerance {tol:e} in {max_iter} iterations (last increment {last:.3e})")]
    NoConvergence { tol: f64, max_iter: usize, last: f64, increments: Vec<f64> },
    #[error("state lives on a different discretization")]
    StateMismatch,
}

/// Data of a Biot problem, split into spatial profiles and one common time
/// factor: the load at time `t` is `time_factor(t) * profile(x)`.
pub trait ProblemData: Send + Sync {
    fn body_force(&self, x: Point) -> [f64; 2];
    /// Traction on the natural boundary; `n` is the outward normal.
    fn traction(&self, x: Point, n: Point) -> [f64; 2];
    fn source(&self, x: Point) -> f64;
    /// Normal flux `K grad p . n` on the natural boundary.
    fn flux(&self, x: Point, n: Point) -> f64;
    fn displacement_bc(&self, x: Point) -> [f64; 2];
    fn pressure_bc(&self, x: Point) -> f64;
    fn time_factor(&self, t: f64) -> f64;

    fn dirichlet_tags(&self) -> Vec<BoundaryTag> {
        vec![BoundaryTag::Right, BoundaryTag::Left]
    }

    fn neumann_tags(&self) -> Vec<BoundaryTag> {
        vec![BoundaryTag::Bottom, BoundaryTag::Top]
    }
}

/// No loads, homogeneous boundary data.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl ProblemData for ZeroData {
    fn body_force(&self, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn traction(&self, _: Point, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn source(&self, _: Point) -> f64 {
        0.0
    }
    fn flux(&self, _: Point, _: Point) -> f64 {
        0.0
    }
    fn displacement_bc(&self, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn pressure_bc(&self, _: Point) -> f64 {
        0.0
    }
    fn time_factor(&self, _: f64) -> f64 {
        1.0
    }
}

/// Wraps a problem, zeroes its Dirichlet data and freezes its loads at
/// `time_factor(t0)`. This is the setting in which the discrete energy
/// identity holds exactly.
pub struct FrozenHomogeneous {
    inner: Arc<dyn ProblemData>,
    factor: f64,
}

impl FrozenHomogeneous {
    pub fn new(inner: Arc<dyn ProblemData>, t0: f64) -> Self {
        let factor = inner.time_factor(t0);
        Self { inner, factor }
    }
}

impl ProblemData for FrozenHomogeneous {
    fn body_force(&self, x: Point) -> [f64; 2] {
        self.inner.body_force(x)
    }
    fn traction(&self, x: Point, n: Point) -> [f64; 2] {
        self.inner.traction(x, n)
    }
    fn source(&self, x: Point) -> f64 {
        self.inner.source(x)
    }
    fn flux(&self, x: Point, n: Point) -> f64 {
        self.inner.flux(x, n)
    }
    fn displacement_bc(&self, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn pressure_bc(&self, _: Point) -> f64 {
        0.0
    }
    fn time_factor(&self, _: f64) -> f64 {
        self.factor
    }
    fn dirichlet_tags(&self) -> Vec<BoundaryTag> {
        self.inner.dirichlet_tags()
    }
    fn neumann_tags(&self) -> Vec<BoundaryTag> {
        self.inner.neumann_tags()
    }
}

/// Discrete fields at one time level.
#[derive(Debug, Clone)]
pub struct BiotState {
    pub u: FieldVector,
    pub xi: FieldVector,
    pub p: FieldVector,
    pub t: f64,
}

impl BiotState {
    /// Largest absolute coefficient difference per field `(u, xi, p)`.
    pub fn max_difference(&self, other: &BiotState) -> [f64; 3] {
        let d = |a: &FieldVector, b: &FieldVector| {
            a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        [d(&self.u, &other.u), d(&self.xi, &other.xi), d(&self.p, &other.p)]
    }
}

/// Linear solver bookkeeping accumulated over a run.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SolveStats {
    pub solves: usize,
    /// Largest blockwise relative residual `||r_k|| / (|| (|A||x|)_k || + ||b_k||)`.
    pub max_residual: f64,
    /// Total fixed-point iterations (iterative scheme only).
    pub iterations: usize,
    pub max_iterations_per_step: usize,
}

impl SolveStats {
    pub fn merge(&mut self, other: &SolveStats) {
        self.solves += other.solves;
        self.max_residual = self.max_residual.max(other.max_residual);
        self.iterations += other.iterations;
        self.max_iterations_per_step = self.max_iterations_per_step.max(other.max_iterations_per_step);
    }

    /// Residual threshold above which a run is considered tainted.
    pub const RESIDUAL_LIMIT: f64 = 1e-9;

    pub fn tainted(&self) -> bool {
        self.max_residual.is_nan() || self.max_residual > Self::RESIDUAL_LIMIT
    }

    fn record(&mut self, residual: f64) {
        self.solves += 1;
        self.max_residual = self.max_residual.max(residual);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn block_residual(a: &CsrMatrix, x: &[f64], b: &[f64], blocks: &[Range<usize>]) -> f64 {
    let ax = a.matvec(x);
    let scale = a.abs_matvec(x);
    blocks
        .iter()
        .map(|r| {
            let res: Vec<f64> = r.clone().map(|i| b[i] - ax[i]).collect();
            let s = norm(&scale[r.clone()]) + norm(&b[r.clone()]);
            if s == 0.0 {
                0.0
            } else {
                norm(&res) / s
            }
        })
        .fold(0.0, f64::max)
}

/// Assembled operators and data profiles on one mesh.
pub struct DiscreteSystem {
    params: PhysParams,
    data: Arc<dyn ProblemData>,
    mesh: Arc<TriMesh>,
    u_space: Arc<Space>,
    xi_space: Arc<Space>,
    p_space: Arc<Space>,
    elasticity: CsrMatrix,
    div: CsrMatrix,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    load_u: Vec<f64>,
    load_p: Vec<f64>,
    bc_u: Vec<f64>,
    bc_p: Vec<f64>,
}

impl DiscreteSystem {
    pub fn new(mesh: Arc<TriMesh>, params: PhysParams, data: Arc<dyn ProblemData>) -> Result<Self, BiotError> {
        let dirichlet = data.dirichlet_tags();
        let neumann = data.neumann_tags();
        let u_space = Arc::new(Space::new(SpaceKind::P2Vector, mesh.clone(), &dirichlet));
        let xi_space = Arc::new(Space::new(SpaceKind::P1, mesh.clone(), &[]));
        let p_space = Arc::new(Space::new(SpaceKind::P1, mesh.clone(), &dirichlet));

        let elasticity = assemble_form(FormKind::Elasticity, &u_space, &u_space)?;
        let div = assemble_form(FormKind::DivCoupling, &u_space, &xi_space)?;
        let mass = assemble_form(FormKind::Mass, &p_space, &p_space)?;
        let stiffness = assemble_form(FormKind::PressureStiffness, &p_space, &p_space)?;

        let mut load_u = assemble_functional(&FunctionalKind::VolumeLoad, &u_space, |x, _| data.body_force(x))?;
        let mut load_p = assemble_functional(&FunctionalKind::VolumeLoad, &p_space, |x, _| [data.source(x), 0.0])?;
        if !neumann.is_empty() {
            let trac = assemble_functional(&FunctionalKind::BoundaryTraction(neumann.clone()), &u_space, |x, n| {
                data.traction(x, n)
            })?;
            let flux =
                assemble_functional(&FunctionalKind::BoundaryFlux(neumann), &p_space, |x, n| [data.flux(x, n), 0.0])?;
            load_u.iter_mut().zip(&trac).for_each(|(a, b)| *a += b);
            load_p.iter_mut().zip(&flux).for_each(|(a, b)| *a += b);
        }

        let mut bc_u = vec![0.0; u_space.dof_count()];
        for &d in u_space.constrained_dofs() {
            bc_u[d] = data.displacement_bc(u_space.node_point(d))[u_space.component(d)];
        }
        let mut bc_p = vec![0.0; p_space.dof_count()];
        for &d in p_space.constrained_dofs() {
            bc_p[d] = data.pressure_bc(p_space.node_point(d));
        }

        Ok(Self {
            params,
            data,
            mesh,
            u_space,
            xi_space,
            p_space,
            elasticity,
            div,
            mass,
            stiffness,
            load_u,
            load_p,
            bc_u,
            bc_p,
        })
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn data(&self) -> &Arc<dyn ProblemData> {
        &self.data
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn u_space(&self) -> &Arc<Space> {
        &self.u_space
    }

    pub fn xi_space(&self) -> &Arc<Space> {
        &self.xi_space
    }

    pub fn p_space(&self) -> &Arc<Space> {
        &self.p_space
    }

    /// `(eps(u), eps(v))`.
    pub fn elasticity(&self) -> &CsrMatrix {
        &self.elasticity
    }

    /// `(div u, q)`, rows in the P1 space.
    pub fn div(&self) -> &CsrMatrix {
        &self.div
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Displacement load vector at time `t`.
    pub fn load_u(&self, t: f64) -> Vec<f64> {
        let s = self.data.time_factor(t);
        self.load_u.iter().map(|v| s * v).collect()
    }

    /// Fluid load vector (source and flux) at time `t`.
    pub fn load_p(&self, t: f64) -> Vec<f64> {
        let s = self.data.time_factor(t);
        self.load_p.iter().map(|v| s * v).collect()
    }

    fn bc_u(&self, t: f64) -> Vec<f64> {
        let s = self.data.time_factor(t);
        self.bc_u.iter().map(|v| s * v).collect()
    }

    fn bc_p(&self, t: f64) -> Vec<f64> {
        let s = self.data.time_factor(t);
        self.bc_p.iter().map(|v| s * v).collect()
    }

    fn sizes(&self) -> (usize, usize, usize) {
        (self.u_space.dof_count(), self.xi_space.dof_count(), self.p_space.dof_count())
    }

    pub fn zero_state(&self, t: f64) -> BiotState {
        BiotState {
            u: FieldVector::zeros(self.u_space.clone()),
            xi: FieldVector::zeros(self.xi_space.clone()),
            p: FieldVector::zeros(self.p_space.clone()),
            t,
        }
    }

    /// Nodal interpolants of the given fields.
    pub fn interpolate_state(
        &self,
        u: impl Fn(Point) -> [f64; 2],
        xi: impl Fn(Point) -> f64,
        p: impl Fn(Point) -> f64,
        t: f64,
    ) -> Result<BiotState, BiotError> {
        Ok(BiotState {
            u: interpolate_vector(&self.u_space, u)?,
            xi: interpolate_scalar(&self.xi_space, xi)?,
            p: interpolate_scalar(&self.p_space, p)?,
            t,
        })
    }

    fn check_state(&self, s: &BiotState) -> Result<(), BiotError> {
        let ok = Arc::ptr_eq(s.u.space(), &self.u_space)
            && Arc::ptr_eq(s.xi.space(), &self.xi_space)
            && Arc::ptr_eq(s.p.space(), &self.p_space);
        if ok {
            Ok(())
        } else {
            Err(BiotError::StateMismatch)
        }
    }

    /// The unconstrained symmetric 3x3 block matrix of one coupled step.
    pub fn coupled_matrix(&self) -> CsrMatrix {
        let PhysParams { mu, lambda, alpha, conductivity, dt, .. } = self.params;
        let (nu, nx, np) = self.sizes();
        let mut b = BlockBuilder::new(nu + nx + np, nu + nx + np);
        b.add(&self.elasticity, 0, 0, 2.0 * mu)
            .add_transpose(&self.div, 0, nu, -1.0)
            .add(&self.div, nu, 0, -1.0)
            .add(&self.mass, nu, nu, -1.0 / lambda)
            .add(&self.mass, nu, nu + nx, alpha / lambda)
            .add(&self.mass, nu + nx, nu, alpha / lambda)
            .add(&self.mass, nu + nx, nu + nx, -self.params.storage_total())
            .add(&self.stiffness, nu + nx, nu + nx, -conductivity * dt);
        b.build()
    }

    /// The unconstrained generalized Stokes matrix for `(u, xi)`.
    pub fn stokes_matrix(&self) -> CsrMatrix {
        let (nu, nx, _) = self.sizes();
        let mut b = BlockBuilder::new(nu + nx, nu + nx);
        b.add(&self.elasticity, 0, 0, 2.0 * self.params.mu)
            .add_transpose(&self.div, 0, nu, -1.0)
            .add(&self.div, nu, 0, -1.0)
            .add(&self.mass, nu, nu, -1.0 / self.params.lambda);
        b.build()
    }

    /// The unconstrained SPD pressure matrix `s M + K dt S`.
    pub fn pressure_matrix(&self) -> CsrMatrix {
        let mut b = BlockBuilder::new(self.mass.nrows(), self.mass.ncols());
        b.add(&self.mass, 0, 0, self.params.storage_total()).add(
            &self.stiffness,
            0,
            0,
            self.params.conductivity * self.params.dt,
        );
        b.build()
    }

    /// Right-hand side of the pressure equation for a given total pressure
    /// iterate `xi_star`.
    fn pressure_rhs(&self, prev: &BiotState, xi_star: &[f64], t: f64) -> Vec<f64> {
        let PhysParams { alpha, lambda, dt, .. } = self.params;
        let s = self.params.storage_total();
        let mp = self.mass.matvec(prev.p.values());
        let dxi: Vec<f64> = xi_star.iter().zip(prev.xi.values()).map(|(a, b)| a - b).collect();
        let mx = self.mass.matvec(&dxi);
        let f = self.load_p(t);
        (0..mp.len()).map(|i| s * mp[i] + alpha / lambda * mx[i] + dt * f[i]).collect()
    }

    fn stokes_rhs(&self, p: &[f64], t: f64) -> Vec<f64> {
        let PhysParams { alpha, lambda, .. } = self.params;
        let mut rhs = self.load_u(t);
        rhs.extend(self.mass.matvec(p).iter().map(|v| -alpha / lambda * v));
        rhs
    }

    /// `||v||` in L2 for a P1 coefficient vector.
    pub fn l2_norm_p1(&self, v: &[f64]) -> f64 {
        self.mass.bilinear(v, v).max(0.0).sqrt()
    }

    /// `||eps(u)||` in L2.
    pub fn strain_norm(&self, u: &[f64]) -> f64 {
        self.elasticity.bilinear(u, u).max(0.0).sqrt()
    }
}

/// Monolithic solver: one factorization of the constrained block system.
pub struct CoupledSolver<'a> {
    sys: &'a DiscreteSystem,
    matrix: CsrMatrix,
    constraint: Constraint,
    lu: Factorization,
}

impl<'a> CoupledSolver<'a> {
    pub fn new(sys: &'a DiscreteSystem) -> Result<Self, BiotError> {
        let (nu, nx, _) = sys.sizes();
        let mut fixed: Vec<usize> = sys.u_space.constrained_dofs().to_vec();
        fixed.extend(sys.p_space.constrained_dofs().iter().map(|d| d + nu + nx));
        let (matrix, constraint) = Constraint::new(&sys.coupled_matrix(), &fixed);
        let lu = lu_factor(&matrix)?;
        Ok(Self { sys, matrix, constraint, lu })
    }

    /// The constrained system matrix.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn step(&self, prev: &BiotState) -> Result<(BiotState, SolveStats), BiotError> {
        let sys = self.sys;
        sys.check_state(prev)?;
        let PhysParams { alpha, lambda, dt, .. } = sys.params;
        let (nu, nx, np) = sys.sizes();
        let t = prev.t + dt;

        let mut rhs = sys.load_u(t);
        rhs.extend(std::iter::repeat_n(0.0, nx));
        let mp = sys.mass.matvec(prev.p.values());
        let mx = sys.mass.matvec(prev.xi.values());
        let fp = sys.load_p(t);
        let s = sys.params.storage_total();
        rhs.extend((0..np).map(|i| -(dt * fp[i] + s * mp[i] - alpha / lambda * mx[i])));

        let mut bc = sys.bc_u(t);
        bc.extend(std::iter::repeat_n(0.0, nx));
        bc.extend(sys.bc_p(t));
        self.constraint.apply_rhs(&mut rhs, &bc);

        let x = self.lu.solve(&rhs);
        let mut stats = SolveStats::default();
        stats.record(block_residual(&self.matrix, &x, &rhs, &[0..nu, nu..nu + nx, nu + nx..nu + nx + np]));
        let state = BiotState {
            u: FieldVector::from_vec(sys.u_space.clone(), x[..nu].to_vec())?,
            xi: FieldVector::from_vec(sys.xi_space.clone(), x[nu..nu + nx].to_vec())?,
            p: FieldVector::from_vec(sys.p_space.clone(), x[nu + nx..].to_vec())?,
            t,
        };
        Ok((state, stats))
    }
}

/// How the SPD pressure equation is solved in the split schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PressureSolver {
    Lu,
    Cg { tol: f64, max_iter: usize },
}

/// Stopping rule of the iterative scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationControl {
    /// Exactly this many pressure/Stokes sweeps per step.
    Fixed(usize),
    /// Sweep until `||xi^i - xi^{i-1}|| <= tol`, failing after `max_iter`.
    Tolerance { tol: f64, max_iter: usize },
}

/// Per-step history of the iterative scheme.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationLog {
    /// `||xi^i - xi^{i-1}||` in L2 for each sweep.
    pub increments: Vec<f64>,
    pub stats: SolveStats,
}

/// Decoupled solver: factorized generalized Stokes and pressure systems.
pub struct SplitSolver<'a> {
    sys: &'a DiscreteSystem,
    stokes: CsrMatrix,
    stokes_constraint: Constraint,
    stokes_lu: Factorization,
    pressure: CsrMatrix,
    pressure_constraint: Constraint,
    pressure_lu: Option<Factorization>,
    pressure_solver: PressureSolver,
}

impl<'a> SplitSolver<'a> {
    pub fn new(sys: &'a DiscreteSystem) -> Result<Self, BiotError> {
        Self::with_pressure_solver(sys, PressureSolver::Lu)
    }

    pub fn with_pressure_solver(sys: &'a DiscreteSystem, pressure_solver: PressureSolver) -> Result<Self, BiotError> {
        let (stokes, stokes_constraint) = Constraint::new(&sys.stokes_matrix(), sys.u_space.constrained_dofs());
        let stokes_lu = lu_factor(&stokes)?;
        let (pressure, pressure_constraint) = Constraint::new(&sys.pressure_matrix(), sys.p_space.constrained_dofs());
        let pressure_lu = match pressure_solver {
            PressureSolver::Lu => Some(lu_factor(&pressure)?),
            PressureSolver::Cg { .. } => None,
        };
        Ok(Self {
            sys,
            stokes,
            stokes_constraint,
            stokes_lu,
            pressure,
            pressure_constraint,
            pressure_lu,
            pressure_solver,
        })
    }

    fn solve_stokes(&self, p: &[f64], t: f64, stats: &mut SolveStats) -> (Vec<f64>, Vec<f64>) {
        let (nu, nx, _) = self.sys.sizes();
        let mut rhs = self.sys.stokes_rhs(p, t);
        let mut bc = self.sys.bc_u(t);
        bc.extend(std::iter::repeat_n(0.0, nx));
        self.stokes_constraint.apply_rhs(&mut rhs, &bc);
        let mut x = self.stokes_lu.solve(&rhs);
        stats.record(block_residual(&self.stokes, &x, &rhs, &[0..nu, nu..nu + nx]));
        let xi = x.split_off(nu);
        (x, xi)
    }

    fn solve_pressure(
        &self,
        prev: &BiotState,
        xi_star: &[f64],
        t: f64,
        stats: &mut SolveStats,
    ) -> Result<Vec<f64>, BiotError> {
        let mut rhs = self.sys.pressure_rhs(prev, xi_star, t);
        self.pressure_constraint.apply_rhs(&mut rhs, &self.sys.bc_p(t));
        let x = match (self.pressure_solver, &self.pressure_lu) {
            (PressureSolver::Lu, Some(lu)) => lu.solve(&rhs),
            (PressureSolver::Cg { tol, max_iter }, _) => cg_solve(&self.pressure, &rhs, tol, max_iter)?.x,
            (PressureSolver::Lu, None) => unreachable!("LU pressure solver is factorized at construction"),
        };
        let all = 0..x.len();
        stats.record(block_residual(&self.pressure, &x, &rhs, std::slice::from_ref(&all)));
        Ok(x)
    }

    fn state(&self, u: Vec<f64>, xi: Vec<f64>, p: Vec<f64>, t: f64) -> Result<BiotState, BiotError> {
        Ok(BiotState {
            u: FieldVector::from_vec(self.sys.u_space.clone(), u)?,
            xi: FieldVector::from_vec(self.sys.xi_space.clone(), xi)?,
            p: FieldVector::from_vec(self.sys.p_space.clone(), p)?,
            t,
        })
    }

    /// Time-extrapolated step: Stokes with the lagged pressure, then the
    /// pressure equation with the new total pressure.
    pub fn step_te(&self, prev: &BiotState) -> Result<(BiotState, SolveStats), BiotError> {
        self.sys.check_state(prev)?;
        let t = prev.t + self.sys.params.dt;
        let mut stats = SolveStats::default();
        let (u, xi) = self.solve_stokes(prev.p.values(), t, &mut stats);
        let p = self.solve_pressure(prev, &xi, t, &mut stats)?;
        Ok((self.state(u, xi, p, t)?, stats))
    }

    /// Iterative step started from the previous time level.
    pub fn step_iterative(
        &self,
        prev: &BiotState,
        control: IterationControl,
    ) -> Result<(BiotState, IterationLog), BiotError> {
        self.step_iterative_from(prev, prev.xi.values(), control, &mut |_, _| {})
    }

    /// Iterative step from an arbitrary initial total pressure. `observer`
    /// sees every iterate `(i, state^{n,i})`.
    pub fn step_iterative_from(
        &self,
        prev: &BiotState,
        xi_start: &[f64],
        control: IterationControl,
        observer: &mut dyn FnMut(usize, &BiotState),
    ) -> Result<(BiotState, IterationLog), BiotError> {
        self.sys.check_state(prev)?;
        let t = prev.t + self.sys.params.dt;
        let (max_iter, tol) = match control {
            IterationControl::Fixed(n) => (n.max(1), None),
            IterationControl::Tolerance { tol, max_iter } => (max_iter.max(1), Some(tol)),
        };
        let mut log = IterationLog::default();
        let mut xi_prev = xi_start.to_vec();
        let mut current = None;
        for i in 1..=max_iter {
            let p = self.solve_pressure(prev, &xi_prev, t, &mut log.stats)?;
            let (u, xi) = self.solve_stokes(&p, t, &mut log.stats);
            let diff: Vec<f64> = xi.iter().zip(&xi_prev).map(|(a, b)| a - b).collect();
            let inc = self.sys.l2_norm_p1(&diff);
            log.increments.push(inc);
            xi_prev.clone_from(&xi);
            let state = self.state(u, xi, p, t)?;
            observer(i, &state);
            current = Some(state);
            if tol.is_some_and(|tol| inc <= tol) {
                break;
            }
        }
        let n = log.increments.len();
        log.stats.iterations = n;
        log.stats.max_iterations_per_step = n;
        if let Some(tol) = tol {
            let last = *log.increments.last().expect("at least one sweep");
            if last > tol {
                return Err(BiotError::NoConvergence { tol, max_iter, last, increments: log.increments });
            }
        }
        Ok((current.expect("at least one sweep"), log))
    }
}

/// `xi = alpha p - lambda div u` with the divergence projected onto P1,
/// i.e. the total pressure that satisfies the second block row exactly.
pub fn consistent_total_pressure(
    sys: &DiscreteSystem,
    u: &FieldVector,
    p: &FieldVector,
) -> Result<FieldVector, BiotError> {
    let PhysParams { alpha, lambda, .. } = sys.params;
    let bu = sys.div.matvec(u.values());
    let (mass, _) = Constraint::new(&sys.mass, &[]);
    let div = lu_factor(&mass)?.solve(&bu);
    let xi = p.values().iter().zip(&div).map(|(p, d)| alpha * p - lambda * d).collect();
    Ok(FieldVector::from_vec(sys.xi_space.clone(), xi)?)
}

/// Per-iteration errors of the iterative scheme against the coupled step.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    /// `(alpha^2/lambda) / (c0 + alpha^2/lambda)`.
    pub rho: f64,
    /// `||xi^i - xi^n||` for `i = 0..=imax`.
    pub xi_errors: Vec<f64>,
    /// `||p^i - p^n||` for `i = 1..=imax`.
    pub p_errors: Vec<f64>,
    /// `||eps(u^i - u^n)||` for `i = 1..=imax`.
    pub strain_errors: Vec<f64>,
    /// `xi_errors[i] / xi_errors[i-1]` where the denominator exceeds the
    /// noise floor.
    pub ratios: Vec<f64>,
    pub noise_floor: f64,
    /// Iterations violating `ratio <= rho + 1e-8`.
    pub ratio_violations: Vec<usize>,
    /// Iterations violating `||e_p^i|| <= (rho/alpha) ||e_xi^{i-1}||`.
    pub pressure_violations: Vec<usize>,
    /// Iterations violating `||eps(e_u^i)|| <= sqrt(2)/(2 mu) ||e_xi^i||`.
    pub strain_violations: Vec<usize>,
    /// Iterations where `||e_xi||` increased.
    pub monotonicity_violations: Vec<usize>,
}

impl ContractionReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.ratio_violations.is_empty()
            && self.pressure_violations.is_empty()
            && self.strain_violations.is_empty()
            && self.monotonicity_violations.is_empty()
    }

    /// First iteration with `||e_xi^i|| <= factor ||e_xi^0||`.
    pub fn iterations_to_reduce(&self, factor: f64) -> Option<usize> {
        let e0 = *self.xi_errors.first()?;
        self.xi_errors.iter().position(|&e| e <= factor * e0)
    }
}

/// Runs `imax` sweeps of the iterative scheme from `xi_start` and measures
/// each iterate against the coupled solution of the same step.
pub fn contraction_monitor_from(
    sys: &DiscreteSystem,
    prev: &BiotState,
    xi_start: &[f64],
    imax: usize,
) -> Result<ContractionReport, BiotError> {
    let PhysParams { alpha, mu, .. } = sys.params;
    let rho = sys.params.contraction_factor();
    let (oracle, _) = CoupledSolver::new(sys)?.step(prev)?;
    let split = SplitSolver::new(sys)?;

    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut xi_errors = vec![sys.l2_norm_p1(&diff(xi_start, oracle.xi.values()))];
    let mut p_errors = Vec::new();
    let mut strain_errors = Vec::new();
    split.step_iterative_from(prev, xi_start, IterationControl::Fixed(imax), &mut |_, s| {
        xi_errors.push(sys.l2_norm_p1(&diff(s.xi.values(), oracle.xi.values())));
        p_errors.push(sys.l2_norm_p1(&diff(s.p.values(), oracle.p.values())));
        strain_errors.push(sys.strain_norm(&diff(s.u.values(), oracle.u.values())));
    })?;

    // errors below this are dominated by rounding in the two solves
    let noise_floor = 1e-11 * sys.l2_norm_p1(oracle.xi.values()).max(f64::MIN_POSITIVE);
    let mut ratios = Vec::new();
    let mut ratio_violations = Vec::new();
    let mut pressure_violations = Vec::new();
    let mut strain_violations = Vec::new();
    let mut monotonicity_violations = Vec::new();
    for i in 1..xi_errors.len() {
        let (prev_e, e) = (xi_errors[i - 1], xi_errors[i]);
        if prev_e <= noise_floor {
            continue;
        }
        let r = e / prev_e;
        ratios.push(r);
        if r > rho + 1e-8 {
            ratio_violations.push(i);
        }
        if e > prev_e {
            monotonicity_violations.push(i);
        }
        if p_errors[i - 1] > rho / alpha * prev_e + noise_floor {
            pressure_violations.push(i);
        }
        if strain_errors[i - 1] > 2f64.sqrt() / (2.0 * mu) * e + noise_floor {
            strain_violations.push(i);
        }
    }
    Ok(ContractionReport {
        rho,
        xi_errors,
        p_errors,
        strain_errors,
        ratios,
        noise_floor,
        ratio_violations,
        pressure_violations,
        strain_violations,
        monotonicity_violations,
    })
}

/// [`contraction_monitor_from`] started at the previous time level.
pub fn contraction_monitor(
    sys: &DiscreteSystem,
    prev: &BiotState,
    imax: usize,
) -> Result<ContractionReport, BiotError> {
    contraction_monitor_from(sys, prev, prev.xi.values(), imax)
}

/// Discrete energy balance along a coupled trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// Energy `J^l` for each level of the trajectory.
    pub energy: Vec<f64>,
    /// Accumulated dissipation minus fluid work `S^l`.
    pub dissipation: Vec<f64>,
    /// `|J^l + S^l - J^0| / (|J^0| + 1)`.
    pub defects: Vec<f64>,
    /// Smallest of the individually nonnegative dissipation summands.
    pub min_dissipation_term: f64,
}

impl EnergyReport {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates `J^l + S^l = J^0` along `trajectory` (level 0 first). The
/// identity holds for time-independent loads, homogeneous Dirichlet data
/// and an initial total pressure satisfying the second block row (see
/// [`consistent_total_pressure`]).
pub fn energy_check(sys: &DiscreteSystem, trajectory: &[BiotState]) -> EnergyReport {
    let PhysParams { mu, lambda, alpha, c0, conductivity, dt, .. } = sys.params;
    let w =
        |s: &BiotState| -> Vec<f64> { s.p.values().iter().zip(s.xi.values()).map(|(p, x)| alpha * p - x).collect() };
    let m = |v: &[f64]| sys.mass.bilinear(v, v);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let j = |s: &BiotState| {
        mu * sys.elasticity.bilinear(s.u.values(), s.u.values())
            + m(&w(s)) / (2.0 * lambda)
            + 0.5 * c0 * m(s.p.values())
            - dot(&sys.load_u(s.t), s.u.values())
    };
    let mut energy = Vec::with_capacity(trajectory.len());
    let mut dissipation = Vec::with_capacity(trajectory.len());
    let mut min_term = f64::INFINITY;
    let mut acc = 0.0;
    for (l, s) in trajectory.iter().enumerate() {
        if l > 0 {
            let prev = &trajectory[l - 1];
            let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x - y) / dt).collect() };
            let du = sub(s.u.values(), prev.u.values());
            let dw = sub(&w(s), &w(prev));
            let dp = sub(s.p.values(), prev.p.values());
            let terms = [
                dt * dt * mu * sys.elasticity.bilinear(&du, &du),
                dt * dt * m(&dw) / (2.0 * lambda),
                dt * dt * 0.5 * c0 * m(&dp),
                dt * conductivity * sys.stiffness.bilinear(s.p.values(), s.p.values()),
            ];
            min_term = terms.iter().copied().fold(min_term, f64::min);
            acc += terms.iter().sum::<f64>() - dt * dot(&sys.load_p(s.t), s.p.values());
        }
        energy.push(j(s));
        dissipation.push(acc);
    }
    let j0 = energy.first().copied().unwrap_or(0.0);
    let defects = energy.iter().zip(&dissipation).map(|(j, s)| (j + s - j0).abs() / (j0.abs() + 1.0)).collect();
    EnergyReport {
        energy,
        dissipation,
        defects,
        min_dissipation_term: if min_term.is_finite() { min_term } else { 0.0 },
    }
}
