//! Manufactured-solution convergence study on the unit square.
//!
//! The exact solution is
//!
//! ```text
//! u1 = e^-t ( sin(2 pi y)(cos(2 pi x) - 1) + sin(pi x) sin(pi y) / (mu + lambda) )
//! u2 = e^-t ( sin(2 pi x)(1 - cos(2 pi y)) + sin(pi x) sin(pi y) / (mu + lambda) )
//! p  = e^-t sin(pi x) sin(pi y)
//! ```
//!
//! with `xi = alpha p - lambda div u`. Displacement and pressure are
//! prescribed on `x = 0` and `x = 1`; traction and flux on `y = 0` and
//! `y = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::biot::{
    BiotError, BiotState, CoupledSolver, DiscreteSystem, IterationControl, ProblemData, SolveStats, SplitSolver,
};
use crate::fem::{quadrature, FieldVector};
use crate::mesh::{build_uniform_with, Diagonal, MeshError, Point};
use crate::params::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Coupled,
    Te,
    Iterative,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coupled => "coupled",
            Self::Te => "te",
            Self::Iterative => "iterative",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coupled" => Ok(Self::Coupled),
            "te" => Ok(Self::Te),
            "iterative" => Ok(Self::Iterative),
            other => Err(format!("unknown algorithm {other:?} (expected coupled, te or iterative)")),
        }
    }
}

/// The manufactured problem for a given parameter set.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub params: PhysParams,
}

impl ManufacturedCase {
    pub fn new(params: PhysParams) -> Self {
        Self { params }
    }

    fn ml(&self) -> f64 {
        self.params.mu + self.params.lambda
    }

    pub fn displacement(&self, x: Point, t: f64) -> [f64; 2] {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let b = sx * sy / self.ml();
        let e = (-t).exp();
        [
            e * ((2.0 * PI * x[1]).sin() * ((2.0 * PI * x[0]).cos() - 1.0) + b),
            e * ((2.0 * PI * x[0]).sin() * (1.0 - (2.0 * PI * x[1]).cos()) + b),
        ]
    }

    /// Row `c` is the gradient of component `c`.
    pub fn displacement_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        let (s2x, c2x, s2y, c2y) =
            ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).sin(), (2.0 * PI * x[1]).cos());
        let k = PI / self.ml();
        let e = (-t).exp();
        [
            [e * (-2.0 * PI * s2y * s2x + k * cx * sy), e * (2.0 * PI * c2y * (c2x - 1.0) + k * sx * cy)],
            [e * (2.0 * PI * c2x * (1.0 - c2y) + k * cx * sy), e * (2.0 * PI * s2x * s2y + k * sx * cy)],
        ]
    }

    pub fn divergence(&self, x: Point, t: f64) -> f64 {
        (-t).exp() * PI * (PI * (x[0] + x[1])).sin() / self.ml()
    }

    pub fn pressure(&self, x: Point, t: f64) -> f64 {
        (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin()
    }

    pub fn pressure_gradient(&self, x: Point, t: f64) -> [f64; 2] {
        let e = (-t).exp();
        [e * PI * (PI * x[0]).cos() * (PI * x[1]).sin(), e * PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
    }

    pub fn total_pressure(&self, x: Point, t: f64) -> f64 {
        self.params.alpha * self.pressure(x, t) - self.params.lambda * self.divergence(x, t)
    }

    pub fn total_pressure_gradient(&self, x: Point, t: f64) -> [f64; 2] {
        let gp = self.pressure_gradient(x, t);
        let g = self.params.lambda * (-t).exp() * PI * PI * (PI * (x[0] + x[1])).cos() / self.ml();
        [self.params.alpha * gp[0] - g, self.params.alpha * gp[1] - g]
    }

    /// Body force at time `t`.
    pub fn body_force_at(&self, x: Point, t: f64) -> [f64; 2] {
        let PhysParams { mu, alpha, .. } = self.params;
        let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        let c = (PI * (x[0] + x[1])).cos();
        let k = 2.0 * mu * PI * PI / self.ml();
        let e = (-t).exp();
        [
            e * (4.0 * mu * PI * PI * (2.0 * PI * x[1]).sin() * (2.0 * (2.0 * PI * x[0]).cos() - 1.0)
                + (k * sx + alpha * PI * cx) * sy
                - PI * PI * c),
            e * (4.0 * mu * PI * PI * (2.0 * PI * x[0]).sin() * (1.0 - 2.0 * (2.0 * PI * x[1]).cos())
                + (k * sy + alpha * PI * cy) * sx
                - PI * PI * c),
        ]
    }

    /// Fluid source at time `t`.
    pub fn source_at(&self, x: Point, t: f64) -> f64 {
        let PhysParams { c0, conductivity, alpha, .. } = self.params;
        (-t).exp()
            * ((-c0 + 2.0 * PI * PI * conductivity) * (PI * x[0]).sin() * (PI * x[1]).sin()
                - alpha * PI / self.ml() * (PI * (x[0] + x[1])).sin())
    }

    /// `(2 mu eps(u) - xi I) n` at time `t`.
    pub fn traction_at(&self, x: Point, n: Point, t: f64) -> [f64; 2] {
        let g = self.displacement_gradient(x, t);
        let mu = self.params.mu;
        let xi = self.total_pressure(x, t);
        let s00 = 2.0 * mu * g[0][0] - xi;
        let s11 = 2.0 * mu * g[1][1] - xi;
        let s01 = mu * (g[0][1] + g[1][0]);
        [s00 * n[0] + s01 * n[1], s01 * n[0] + s11 * n[1]]
    }

    /// `K grad p . n` at time `t`.
    pub fn flux_at(&self, x: Point, n: Point, t: f64) -> f64 {
        let g = self.pressure_gradient(x, t);
        self.params.conductivity * (g[0] * n[0] + g[1] * n[1])
    }

    /// Interpolated exact fields at time `t`.
    pub fn initial_state(&self, sys: &DiscreteSystem, t: f64) -> Result<BiotState, BiotError> {
        sys.interpolate_state(|x| self.displacement(x, t), |x| self.total_pressure(x, t), |x| self.pressure(x, t), t)
    }
}

impl ProblemData for ManufacturedCase {
    fn body_force(&self, x: Point) -> [f64; 2] {
        self.body_force_at(x, 0.0)
    }
    fn traction(&self, x: Point, n: Point) -> [f64; 2] {
        self.traction_at(x, n, 0.0)
    }
    fn source(&self, x: Point) -> f64 {
        self.source_at(x, 0.0)
    }
    fn flux(&self, x: Point, n: Point) -> f64 {
        self.flux_at(x, n, 0.0)
    }
    fn displacement_bc(&self, x: Point) -> [f64; 2] {
        self.displacement(x, 0.0)
    }
    fn pressure_bc(&self, x: Point) -> f64 {
        self.pressure(x, 0.0)
    }
    fn time_factor(&self, t: f64) -> f64 {
        (-t).exp()
    }
}

/// L2 and full H1 errors of the three fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_xi: f64,
    pub h1_xi: f64,
    pub l2_p: f64,
    pub h1_p: f64,
}

impl FieldErrors {
    pub const NAMES: [&'static str; 6] = ["L2_u", "H1_u", "L2_xi", "H1_xi", "L2_p", "H1_p"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.l2_u, self.h1_u, self.l2_xi, self.h1_xi, self.l2_p, self.h1_p]
    }
}

/// Squared L2 error and squared gradient error of one field.
fn field_error(
    field: &FieldVector,
    value: &dyn Fn(Point) -> [f64; 2],
    gradient: &dyn Fn(Point) -> [[f64; 2]; 2],
) -> (f64, f64) {
    let rule = quadrature(5).expect("degree 5 rule exists");
    let mesh = field.space().mesh();
    let comps = field.space().kind().components();
    let (mut l2, mut semi) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let map = crate::fem::ElementMap::new(mesh.triangle_coords(t));
        let area = map.det().abs();
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.map(*l);
            let (v, g) = (field.eval(t, *l), field.eval_gradient(t, *l));
            let (ve, ge) = (value(x), gradient(x));
            for c in 0..comps {
                l2 += w * area * (v[c] - ve[c]).powi(2);
                semi += w * area * ((g[c][0] - ge[c][0]).powi(2) + (g[c][1] - ge[c][1]).powi(2));
            }
        }
    }
    (l2, semi)
}

/// Errors of `state` against the exact solution at `state.t`.
pub fn compute_errors(state: &BiotState, case: &ManufacturedCase) -> FieldErrors {
    let t = state.t;
    let (lu, su) = field_error(&state.u, &|x| case.displacement(x, t), &|x| case.displacement_gradient(x, t));
    let (lx, sx) = field_error(&state.xi, &|x| [case.total_pressure(x, t), 0.0], &|x| {
        [case.total_pressure_gradient(x, t), [0.0; 2]]
    });
    let (lp, sp) =
        field_error(&state.p, &|x| [case.pressure(x, t), 0.0], &|x| [case.pressure_gradient(x, t), [0.0; 2]]);
    FieldErrors {
        l2_u: lu.sqrt(),
        h1_u: (lu + su).sqrt(),
        l2_xi: lx.sqrt(),
        h1_xi: (lx + sx).sqrt(),
        l2_p: lp.sqrt(),
        h1_p: (lp + sp).sqrt(),
    }
}

/// One convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyConfig {
    pub algorithm: Algorithm,
    pub params: PhysParams,
    /// Cells per side of the coarsest mesh.
    pub n0: usize,
    /// Number of meshes; each is the red refinement of the previous one.
    pub levels: usize,
    pub diagonal: Diagonal,
    /// Only used by the iterative algorithm.
    #[serde(skip)]
    pub iteration: IterationControl,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub inv_h: usize,
    pub dofs: usize,
    pub errors: FieldErrors,
    /// `log2(e_{2h} / e_h)` against the previous level.
    pub rates: Option<[f64; 6]>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub algorithm: Algorithm,
    pub params: PhysParams,
    pub diagonal: Diagonal,
    pub steps: usize,
    pub levels: Vec<LevelResult>,
}

/// Scientific notation with a signed two-digit exponent, e.g. `1.063e-03`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.3e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

impl ErrorReport {
    pub fn finest(&self) -> Option<&LevelResult> {
        self.levels.last()
    }

    pub fn finest_rates(&self) -> Option<[f64; 6]> {
        self.finest().and_then(|l| l.rates)
    }

    pub fn stats(&self) -> SolveStats {
        let mut s = SolveStats::default();
        for l in &self.levels {
            s.merge(&l.stats);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,inv_h");
        for n in FieldErrors::NAMES {
            out.push_str(&format!(",err_{n},rate_{n}"));
        }
        out.push('\n');
        for l in &self.levels {
            out.push_str(&format!("{},{}", l.level, l.inv_h));
            let e = l.errors.as_array();
            for k in 0..6 {
                let rate = l.rates.map(|r| format!("{:.2}", r[k])).unwrap_or_default();
                out.push_str(&format!(",{},{}", format_sci(e[k]), rate));
            }
            out.push('\n');
        }
        out
    }
}

fn rates(coarse: &FieldErrors, fine: &FieldErrors) -> [f64; 6] {
    let (c, f) = (coarse.as_array(), fine.as_array());
    std::array::from_fn(|k| (c[k] / f[k]).log2())
}

/// Runs `steps` time steps of `algorithm` from the interpolated exact
/// initial data.
pub fn run_level(
    sys: &DiscreteSystem,
    case: &ManufacturedCase,
    algorithm: Algorithm,
    iteration: IterationControl,
) -> Result<(BiotState, SolveStats), BiotError> {
    let steps = sys.params().num_steps();
    let mut state = case.initial_state(sys, 0.0)?;
    let mut stats = SolveStats::default();
    match algorithm {
        Algorithm::Coupled => {
            let solver = CoupledSolver::new(sys)?;
            for _ in 0..steps {
                let (s, st) = solver.step(&state)?;
                state = s;
                stats.merge(&st);
            }
        }
        Algorithm::Te => {
            let solver = SplitSolver::new(sys)?;
            for _ in 0..steps {
                let (s, st) = solver.step_te(&state)?;
                state = s;
                stats.merge(&st);
            }
        }
        Algorithm::Iterative => {
            let solver = SplitSolver::new(sys)?;
            for _ in 0..steps {
                let (s, log) = solver.step_iterative(&state, iteration)?;
                state = s;
                stats.merge(&log.stats);
            }
        }
    }
    Ok((state, stats))
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("a study needs at least 2 levels (got {0})")]
    TooFewLevels(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("level {level} (1/h = {inv_h}): {source}")]
    Level { level: usize, inv_h: usize, source: BiotError },
}

/// Convergence study over `config.levels` successively refined meshes.
/// `progress` is called after each level.
pub fn run_study(config: &StudyConfig, progress: &mut dyn FnMut(&LevelResult)) -> Result<ErrorReport, StudyError> {
    if config.levels < 2 {
        return Err(StudyError::TooFewLevels(config.levels));
    }
    let case = ManufacturedCase::new(config.params);
    let mut mesh = build_uniform_with(config.n0, config.diagonal)?;
    let mut levels: Vec<LevelResult> = Vec::with_capacity(config.levels);
    for level in 0..config.levels {
        if level > 0 {
            mesh = mesh.refine();
        }
        let inv_h = config.n0 << level;
        let wrap = |source| StudyError::Level { level, inv_h, source };
        let sys = DiscreteSystem::new(Arc::new(mesh.clone()), config.params, Arc::new(case)).map_err(wrap)?;
        let (state, stats) = run_level(&sys, &case, config.algorithm, config.iteration).map_err(wrap)?;
        let errors = compute_errors(&state, &case);
        let rates = levels.last().map(|prev| rates(&prev.errors, &errors));
        let dofs = sys.u_space().dof_count() + sys.xi_space().dof_count() + sys.p_space().dof_count();
        let result = LevelResult { level, inv_h, dofs, errors, rates, stats };
        progress(&result);
        levels.push(result);
    }
    Ok(ErrorReport {
        algorithm: config.algorithm,
        params: config.params,
        diagonal: config.diagonal,
        steps: config.params.num_steps(),
        levels,
    })
}
