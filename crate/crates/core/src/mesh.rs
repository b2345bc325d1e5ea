//! Structured triangulations of the unit square.
//!
//! The square is split into `n x n` cells, each cut along the same
//! diagonal ([`Diagonal`]). Red refinement (every triangle split into four
//! through its edge midpoints) maps this family onto itself, so
//! `refine(build_uniform(n))` and `build_uniform(2n)` describe the same
//! triangulation up to vertex numbering.
//!
//! Boundary sides carry one of four tags:
//!
//! | tag      | side   | id |
//! |----------|--------|----|
//! | `Right`  | x = 1  | 1  |
//! | `Bottom` | y = 0  | 2  |
//! | `Left`   | x = 0  | 3  |
//! | `Top`    | y = 1  | 4  |

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in the plane.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("a uniform mesh needs at least one cell per side (got 0)")]
    ZeroCells,
}

/// Side of the unit square a boundary edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    Right,
    Bottom,
    Left,
    Top,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [Self::Right, Self::Bottom, Self::Left, Self::Top];

    /// Numeric id (1..=4) used in dumps and reports.
    pub fn id(self) -> u8 {
        match self {
            Self::Right => 1,
            Self::Bottom => 2,
            Self::Left => 3,
            Self::Top => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn outward_normal(self) -> Point {
        match self {
            Self::Right => [1.0, 0.0],
            Self::Bottom => [0.0, -1.0],
            Self::Left => [-1.0, 0.0],
            Self::Top => [0.0, 1.0],
        }
    }

    /// Whether `p` lies on this side (exact comparison; structured meshes
    /// place boundary vertices exactly on 0 or 1).
    pub fn contains(self, p: Point) -> bool {
        match self {
            Self::Right => p[0] == 1.0,
            Self::Bottom => p[1] == 0.0,
            Self::Left => p[0] == 0.0,
            Self::Top => p[1] == 1.0,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Right => "right",
            Self::Bottom => "bottom",
            Self::Left => "left",
            Self::Top => "top",
        };
        write!(f, "{name}")
    }
}

/// Which diagonal cuts each cell of a uniform mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagonal {
    /// Bottom-left to top-right.
    Rising,
    /// Bottom-right to top-left.
    #[default]
    Falling,
}

impl Diagonal {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rising => "rising",
            Self::Falling => "falling",
        }
    }
}

impl fmt::Display for Diagonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Diagonal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rising" => Ok(Self::Rising),
            "falling" => Ok(Self::Falling),
            other => Err(format!("unknown diagonal {other:?} (expected rising or falling)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming triangulation with tagged boundary edges.
///
/// Triangles are stored counterclockwise. Besides the primary data the mesh
/// keeps a global edge list; local edge `k` of a triangle is the edge
/// opposite its local vertex `k`.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    level: usize,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary_edge_ids: Vec<usize>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        level: usize,
    ) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2 + 1);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let mut local = [0usize; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let (a, b) = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                *slot = *index.entry((a, b)).or_insert_with(|| {
                    edges.push([a, b]);
                    edges.len() - 1
                });
            }
            triangle_edges.push(local);
        }
        let boundary_edge_ids = boundary_edges
            .iter()
            .map(|e| {
                let key = edge_key(e.vertices[0], e.vertices[1]);
                *index.get(&key).expect("boundary edge is not an edge of any triangle")
            })
            .collect();
        Self { vertices, triangles, boundary_edges, level, edges, triangle_edges, boundary_edge_ids }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Refinement depth; 0 for a freshly built uniform mesh.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Unique edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge ids of each triangle; entry `k` is opposite vertex `k`.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Global edge id of each boundary edge, parallel to `boundary_edges()`.
    pub fn boundary_edge_ids(&self) -> &[usize] {
        &self.boundary_edge_ids
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_coords(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Mesh size: the longest edge.
    pub fn h(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(0.0, f64::max)
    }

    /// Red refinement: every triangle is replaced by four children through
    /// its edge midpoints. Midpoint vertices are appended after the parent
    /// vertices in global edge order.
    pub fn refine(&self) -> TriMesh {
        let nv = self.vertices.len();
        let mut vertices = Vec::with_capacity(nv + self.edges.len());
        vertices.extend_from_slice(&self.vertices);
        for &[a, b] in &self.edges {
            let (p, q) = (self.vertices[a], self.vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        }

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (tri, te) in self.triangles.iter().zip(&self.triangle_edges) {
            let [a, b, c] = *tri;
            let [m0, m1, m2] = [nv + te[0], nv + te[1], nv + te[2]];
            triangles.push([a, m2, m1]);
            triangles.push([m2, b, m0]);
            triangles.push([m1, m0, c]);
            triangles.push([m0, m1, m2]);
        }

        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for (e, &id) in self.boundary_edges.iter().zip(&self.boundary_edge_ids) {
            let m = nv + id;
            boundary_edges.push(BoundaryEdge { vertices: [e.vertices[0], m], tag: e.tag });
            boundary_edges.push(BoundaryEdge { vertices: [m, e.vertices[1]], tag: e.tag });
        }

        TriMesh::from_parts(vertices, triangles, boundary_edges, self.level + 1)
    }

    /// Plain-text dump for debugging.
    ///
    /// ```text
    /// level <l>
    /// vertices <nv>
    /// <id> <x> <y>            (one line per vertex)
    /// triangles <nt>
    /// <id> <v0> <v1> <v2>     (counterclockwise)
    /// boundary_edges <nb>
    /// <id> <v0> <v1> <tag>    (tag: 1 right, 2 bottom, 3 left, 4 top)
    /// ```
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "level {}", self.level)?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary_edges {}", self.boundary_edges.len())?;
        for (i, e) in self.boundary_edges.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", e.vertices[0], e.vertices[1], e.tag.id())?;
        }
        Ok(())
    }
}

/// Uniform `n x n` triangulation with the default [`Diagonal`].
pub fn build_uniform(n: usize) -> Result<TriMesh, MeshError> {
    build_uniform_with(n, Diagonal::default())
}

/// Uniform `n x n` triangulation of the unit square.
///
/// Vertices are numbered row by row (`j * (n + 1) + i` for the vertex at
/// `(i/n, j/n)`); every cell is cut along `diagonal`.
pub fn build_uniform_with(n: usize, diagonal: Diagonal) -> Result<TriMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::ZeroCells);
    }
    let stride = n + 1;
    let inv = 1.0 / n as f64;
    let coord = |i: usize| if i == n { 1.0 } else { i as f64 * inv };

    let mut vertices = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([coord(i), coord(j)]);
        }
    }

    let vid = |i: usize, j: usize| j * stride + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            match diagonal {
                Diagonal::Rising => {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                }
                Diagonal::Falling => {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
    }

    let mut boundary_edges = Vec::with_capacity(4 * n);
    for k in 0..n {
        boundary_edges.push(BoundaryEdge { vertices: [vid(k, 0), vid(k + 1, 0)], tag: BoundaryTag::Bottom });
    }
    for k in 0..n {
        boundary_edges.push(BoundaryEdge { vertices: [vid(n, k), vid(n, k + 1)], tag: BoundaryTag::Right });
    }
    for k in (0..n).rev() {
        boundary_edges.push(BoundaryEdge { vertices: [vid(k + 1, n), vid(k, n)], tag: BoundaryTag::Top });
    }
    for k in (0..n).rev() {
        boundary_edges.push(BoundaryEdge { vertices: [vid(0, k + 1), vid(0, k)], tag: BoundaryTag::Left });
    }

    Ok(TriMesh::from_parts(vertices, triangles, boundary_edges, 0))
}

/// Free-function form of [`TriMesh::refine`].
pub fn refine(mesh: &TriMesh) -> TriMesh {
    mesh.refine()
}
