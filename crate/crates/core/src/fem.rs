//! Lagrange spaces on triangles: P1 and P2 scalar, P2 vector.
//!
//! Reference element is `{(0,0), (1,0), (0,1)}` with barycentric
//! coordinates `(l0, l1, l2) = (1 - s - t, s, t)`. Local P2 nodes 0..3 are
//! the vertices, node `3 + k` is the midpoint of the edge opposite vertex
//! `k`. Global numbering puts vertex DOFs first (vertex id) and then edge
//! DOFs (`num_vertices + edge id`); the vector space stacks the x component
//! block in front of the y component block.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{BoundaryTag, Point, TriMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("unknown space kind {0:?} (expected p1, p2 or p2-vector)")]
    UnknownKind(String),
    #[error("quadrature degree {0} unsupported (supported: 1..=5)")]
    UnsupportedDegree(usize),
    #[error("barycentric point {0:?} must be nonnegative and sum to 1")]
    InvalidBarycentric([f64; 3]),
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{op} needs a {expected} space, got {got}")]
    WrongKind { op: &'static str, expected: &'static str, got: SpaceKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    P1,
    P2,
    P2Vector,
}

impl SpaceKind {
    /// Scalar basis functions per element.
    pub fn scalar_nodes(self) -> usize {
        match self {
            Self::P1 => 3,
            Self::P2 | Self::P2Vector => 6,
        }
    }

    pub fn components(self) -> usize {
        match self {
            Self::P2Vector => 2,
            _ => 1,
        }
    }

    pub fn local_dofs(self) -> usize {
        self.scalar_nodes() * self.components()
    }

    pub fn is_vector(self) -> bool {
        self.components() == 2
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P2Vector => "p2-vector",
        })
    }
}

impl FromStr for SpaceKind {
    type Err = FemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Self::P1),
            "p2" => Ok(Self::P2),
            "p2-vector" | "p2vector" | "p2v" => Ok(Self::P2Vector),
            _ => Err(FemError::UnknownKind(s.to_string())),
        }
    }
}

/// Symmetric quadrature rule on the reference triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the points.
    pub points: Vec<[f64; 3]>,
    /// Weights, summing to the reference area 1/2.
    pub weights: Vec<f64>,
    /// Highest total degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Reference coordinates `(s, t)` of point `q`.
    pub fn reference_point(&self, q: usize) -> Point {
        [self.points[q][1], self.points[q][2]]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A rule exact for polynomials of total degree `min_degree` or higher.
///
/// Degree 1 is the centroid rule, degree 2 the three-point interior rule,
/// and degrees 3 to 5 share the seven-point degree-5 rule.
pub fn quadrature(min_degree: usize) -> Result<QuadratureRule, FemError> {
    match min_degree {
        1 => Ok(QuadratureRule { points: vec![[1.0 / 3.0; 3]], weights: vec![0.5], degree: 1 }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(QuadratureRule { points: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![1.0 / 6.0; 3], degree: 2 })
        }
        3..=5 => Ok(seven_point_rule()),
        d => Err(FemError::UnsupportedDegree(d)),
    }
}

fn seven_point_rule() -> QuadratureRule {
    let sq15 = 15f64.sqrt();
    let a1 = (6.0 - sq15) / 21.0;
    let b1 = 1.0 - 2.0 * a1;
    let a2 = (6.0 + sq15) / 21.0;
    let b2 = 1.0 - 2.0 * a2;
    let w0 = 9.0 / 80.0;
    let w1 = (155.0 - sq15) / 2400.0;
    let w2 = (155.0 + sq15) / 2400.0;
    QuadratureRule {
        points: vec![
            [1.0 / 3.0; 3],
            [b1, a1, a1],
            [a1, b1, a1],
            [a1, a1, b1],
            [b2, a2, a2],
            [a2, b2, a2],
            [a2, a2, b2],
        ],
        weights: vec![w0, w1, w1, w1, w2, w2, w2],
        degree: 5,
    }
}

/// Five-point Gauss-Legendre rule on `[0, 1]` (exact to degree 9).
/// Returns `(points, weights)`, weights summing to 1.
pub fn edge_quadrature() -> ([f64; 5], [f64; 5]) {
    let r = (10.0f64 / 7.0).sqrt();
    let x1 = (5.0 - 2.0 * r).sqrt() / 3.0;
    let x2 = (5.0 + 2.0 * r).sqrt() / 3.0;
    let w0 = 128.0 / 225.0;
    let w1 = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    let xs = [-x2, -x1, 0.0, x1, x2];
    let ws = [w2, w1, w0, w1, w2];
    (xs.map(|x| 0.5 * (x + 1.0)), ws.map(|w| 0.5 * w))
}

/// Basis values and reference-coordinate gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

const BARY_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
/// Vertices of the edge opposite each local vertex.
pub(crate) const EDGE_VERTICES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

/// Evaluates the scalar basis of `kind` (the P2 vector space uses the P2
/// basis per component). Writes `kind.scalar_nodes()` entries.
pub(crate) fn fill_basis(kind: SpaceKind, l: [f64; 3], values: &mut [f64], grads: &mut [[f64; 2]]) {
    match kind {
        SpaceKind::P1 => {
            values[..3].copy_from_slice(&l);
            grads[..3].copy_from_slice(&BARY_GRAD);
        }
        SpaceKind::P2 | SpaceKind::P2Vector => {
            for i in 0..3 {
                values[i] = l[i] * (2.0 * l[i] - 1.0);
                let c = 4.0 * l[i] - 1.0;
                grads[i] = [c * BARY_GRAD[i][0], c * BARY_GRAD[i][1]];
            }
            for (k, &[a, b]) in EDGE_VERTICES.iter().enumerate() {
                values[3 + k] = 4.0 * l[a] * l[b];
                grads[3 + k] = [
                    4.0 * (l[a] * BARY_GRAD[b][0] + l[b] * BARY_GRAD[a][0]),
                    4.0 * (l[a] * BARY_GRAD[b][1] + l[b] * BARY_GRAD[a][1]),
                ];
            }
        }
    }
}

pub fn eval_basis(kind: SpaceKind, bary: [f64; 3]) -> Result<BasisValues, FemError> {
    let sum: f64 = bary.iter().sum();
    if bary.iter().any(|&l| l < -1e-14) || (sum - 1.0).abs() > 1e-12 {
        return Err(FemError::InvalidBarycentric(bary));
    }
    let n = kind.scalar_nodes();
    let mut values = vec![0.0; n];
    let mut gradients = vec![[0.0; 2]; n];
    fill_basis(kind, bary, &mut values, &mut gradients);
    Ok(BasisValues { values, gradients })
}

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    origin: Point,
    jac: [[f64; 2]; 2],
    inv_t: [[f64; 2]; 2],
    det: f64,
}

impl ElementMap {
    pub fn new(coords: [Point; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // inverse transpose of jac
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self { origin: p0, jac, inv_t, det }
    }

    /// Jacobian determinant (twice the triangle area).
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn map(&self, bary: [f64; 3]) -> Point {
        let (s, t) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jac[0][0] * s + self.jac[0][1] * t,
            self.origin[1] + self.jac[1][0] * s + self.jac[1][1] * t,
        ]
    }

    /// Physical gradient from a reference gradient.
    #[inline]
    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1], self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1]]
    }
}

/// Global DOF indices of one element (at most 12).
#[derive(Debug, Clone, Copy)]
pub struct LocalDofs {
    idx: [usize; 12],
    len: usize,
}

impl std::ops::Deref for LocalDofs {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

/// A Lagrange space over a mesh together with its essential boundary.
#[derive(Debug, Clone)]
pub struct Space {
    kind: SpaceKind,
    mesh: Arc<TriMesh>,
    dirichlet_tags: Vec<BoundaryTag>,
    scalar_dofs: usize,
    constrained: Vec<usize>,
    is_constrained: Vec<bool>,
}

impl Space {
    pub fn new(kind: SpaceKind, mesh: Arc<TriMesh>, dirichlet_tags: &[BoundaryTag]) -> Self {
        let scalar_dofs = match kind {
            SpaceKind::P1 => mesh.num_vertices(),
            SpaceKind::P2 | SpaceKind::P2Vector => mesh.num_vertices() + mesh.num_edges(),
        };
        let mut tags = dirichlet_tags.to_vec();
        tags.sort_unstable();
        tags.dedup();
        let mut space =
            Self { kind, mesh, dirichlet_tags: tags, scalar_dofs, constrained: Vec::new(), is_constrained: Vec::new() };
        let constrained = space.boundary_dofs(&space.dirichlet_tags.clone());
        let mut flags = vec![false; space.dof_count()];
        for &d in &constrained {
            flags[d] = true;
        }
        space.constrained = constrained;
        space.is_constrained = flags;
        space
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn dirichlet_tags(&self) -> &[BoundaryTag] {
        &self.dirichlet_tags
    }

    pub fn dof_count(&self) -> usize {
        self.scalar_dofs * self.kind.components()
    }

    /// DOFs per component.
    pub fn scalar_dof_count(&self) -> usize {
        self.scalar_dofs
    }

    /// Sorted list of DOFs fixed by the Dirichlet tags.
    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.is_constrained[dof]
    }

    pub fn same_mesh(&self, other: &Space) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    pub fn element_dofs(&self, t: usize) -> LocalDofs {
        let mut idx = [0usize; 12];
        let tri = self.mesh.triangles()[t];
        idx[..3].copy_from_slice(&tri);
        let mut n = 3;
        if self.kind != SpaceKind::P1 {
            let nv = self.mesh.num_vertices();
            for (k, &e) in self.mesh.triangle_edges()[t].iter().enumerate() {
                idx[3 + k] = nv + e;
            }
            n = 6;
        }
        if self.kind.is_vector() {
            for a in 0..6 {
                idx[6 + a] = idx[a] + self.scalar_dofs;
            }
            n = 12;
        }
        LocalDofs { idx, len: n }
    }

    /// Component (0 = x, 1 = y) a DOF belongs to.
    pub fn component(&self, dof: usize) -> usize {
        dof / self.scalar_dofs
    }

    /// Location of the Lagrange node carrying `dof`.
    pub fn node_point(&self, dof: usize) -> Point {
        let s = dof % self.scalar_dofs;
        let nv = self.mesh.num_vertices();
        if s < nv {
            self.mesh.vertices()[s]
        } else {
            let [a, b] = self.mesh.edges()[s - nv];
            let (p, q) = (self.mesh.vertices()[a], self.mesh.vertices()[b]);
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
        }
    }

    /// All DOFs whose node lies on an edge carrying one of `tags`, sorted.
    pub fn boundary_dofs(&self, tags: &[BoundaryTag]) -> Vec<usize> {
        let nv = self.mesh.num_vertices();
        let mut scalar = Vec::new();
        for (e, &id) in self.mesh.boundary_edges().iter().zip(self.mesh.boundary_edge_ids()) {
            if !tags.contains(&e.tag) {
                continue;
            }
            scalar.extend_from_slice(&e.vertices);
            if self.kind != SpaceKind::P1 {
                scalar.push(nv + id);
            }
        }
        scalar.sort_unstable();
        scalar.dedup();
        let mut dofs = scalar.clone();
        if self.kind.is_vector() {
            dofs.extend(scalar.iter().map(|d| d + self.scalar_dofs));
        }
        dofs
    }
}

/// Coefficient vector of a finite element function.
#[derive(Debug, Clone)]
pub struct FieldVector {
    space: Arc<Space>,
    values: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(space: Arc<Space>) -> Self {
        let n = space.dof_count();
        Self { space, values: vec![0.0; n] }
    }

    pub fn from_vec(space: Arc<Space>, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != space.dof_count() {
            return Err(FemError::LengthMismatch { expected: space.dof_count(), got: values.len() });
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a barycentric point of triangle `t`; the second entry is
    /// zero for scalar spaces.
    pub fn eval(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let kind = self.space.kind();
        let mut phi = [0.0; 6];
        let mut dphi = [[0.0; 2]; 6];
        fill_basis(kind, bary, &mut phi, &mut dphi);
        let dofs = self.space.element_dofs(t);
        let m = kind.scalar_nodes();
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate().take(kind.components()) {
            *slot = (0..m).map(|a| self.values[dofs[c * m + a]] * phi[a]).sum();
        }
        out
    }

    /// Physical gradient at a barycentric point; row `c` is the gradient of
    /// component `c`.
    pub fn eval_gradient(&self, t: usize, bary: [f64; 3]) -> [[f64; 2]; 2] {
        let kind = self.space.kind();
        let map = ElementMap::new(self.space.mesh().triangle_coords(t));
        let mut phi = [0.0; 6];
        let mut dphi = [[0.0; 2]; 6];
        fill_basis(kind, bary, &mut phi, &mut dphi);
        let dofs = self.space.element_dofs(t);
        let m = kind.scalar_nodes();
        let mut out = [[0.0; 2]; 2];
        for (c, row) in out.iter_mut().enumerate().take(kind.components()) {
            for a in 0..m {
                let g = map.gradient(dphi[a]);
                let v = self.values[dofs[c * m + a]];
                row[0] += v * g[0];
                row[1] += v * g[1];
            }
        }
        out
    }
}

/// Nodal interpolant of a scalar function.
pub fn interpolate_scalar(space: &Arc<Space>, f: impl Fn(Point) -> f64) -> Result<FieldVector, FemError> {
    if space.kind().is_vector() {
        return Err(FemError::WrongKind { op: "interpolate_scalar", expected: "scalar", got: space.kind() });
    }
    let values = (0..space.dof_count()).map(|d| f(space.node_point(d))).collect();
    Ok(FieldVector { space: space.clone(), values })
}

/// Nodal interpolant of a vector function.
pub fn interpolate_vector(space: &Arc<Space>, f: impl Fn(Point) -> [f64; 2]) -> Result<FieldVector, FemError> {
    if !space.kind().is_vector() {
        return Err(FemError::WrongKind { op: "interpolate_vector", expected: "vector", got: space.kind() });
    }
    let n = space.scalar_dof_count();
    let mut values = vec![0.0; 2 * n];
    for d in 0..n {
        let v = f(space.node_point(d));
        values[d] = v[0];
        values[n + d] = v[1];
    }
    Ok(FieldVector { space: space.clone(), values })
}
