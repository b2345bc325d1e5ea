//! Global assembly of bilinear forms and load functionals, and essential
//! boundary conditions.
//!
//! Forms are assembled with unit coefficients; physical factors are applied
//! by the caller. Rows belong to the test space, columns to the trial
//! space. Element contributions are computed in parallel over fixed-size
//! chunks of triangles and concatenated in chunk order, so the result does
//! not depend on the number of threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{edge_quadrature, fill_basis, quadrature, ElementMap, Space, SpaceKind};
use crate::mesh::{BoundaryTag, Point};
use crate::sparse::CsrMatrix;

const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("trial and test spaces live on different meshes")]
    MeshMismatch,
    #[error("{form:?} cannot pair trial space {trial} with test space {test}")]
    Incompatible { form: FormKind, trial: SpaceKind, test: SpaceKind },
    #[error("{0} needs a nonempty set of boundary tags")]
    EmptyTags(&'static str),
    #[error("{functional} needs a {expected} test space, got {got}")]
    WrongTestSpace { functional: &'static str, expected: &'static str, got: SpaceKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `(eps(u), eps(v))`, vector/vector.
    Elasticity,
    /// `(div u, q)` with a vector trial and scalar test space, or
    /// `(p, div v)` with the roles swapped.
    DivCoupling,
    /// `(p, q)`, scalar/scalar.
    Mass,
    /// `(grad p, grad q)`, scalar/scalar.
    PressureStiffness,
    /// `(div u, div v)`, vector/vector.
    DivDiv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionalKind {
    /// `(f, v)` over the domain.
    VolumeLoad,
    /// `<h, v>` over edges carrying the given tags; vector test space.
    BoundaryTraction(Vec<BoundaryTag>),
    /// `<g, q>` over edges carrying the given tags; scalar test space.
    BoundaryFlux(Vec<BoundaryTag>),
}

/// Reference basis values and gradients at the points of the degree 5 rule.
struct Tabulated {
    weights: Vec<f64>,
    points: Vec<[f64; 3]>,
    values: Vec<[f64; 6]>,
    grads: Vec<[[f64; 2]; 6]>,
}

fn tabulate(kind: SpaceKind) -> Tabulated {
    let rule = quadrature(5).expect("degree 5 rule exists");
    let mut values = Vec::with_capacity(rule.len());
    let mut grads = Vec::with_capacity(rule.len());
    for &l in &rule.points {
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        fill_basis(kind, l, &mut v, &mut g);
        values.push(v);
        grads.push(g);
    }
    Tabulated { weights: rule.weights, points: rule.points, values, grads }
}

fn check_form(kind: FormKind, trial: &Space, test: &Space) -> Result<(), AssemblyError> {
    if !trial.same_mesh(test) {
        return Err(AssemblyError::MeshMismatch);
    }
    let (tv, sv) = (trial.kind().is_vector(), test.kind().is_vector());
    let ok = match kind {
        FormKind::Elasticity | FormKind::DivDiv => tv && sv,
        FormKind::Mass | FormKind::PressureStiffness => !tv && !sv,
        FormKind::DivCoupling => tv != sv,
    };
    if ok {
        Ok(())
    } else {
        Err(AssemblyError::Incompatible { form: kind, trial: trial.kind(), test: test.kind() })
    }
}

/// Element matrix, `out[i * n_trial + j]` for test function `i` and trial
/// function `j`.
fn element_matrix(
    kind: FormKind,
    map: &ElementMap,
    trial: (&Tabulated, SpaceKind),
    test: (&Tabulated, SpaceKind),
    out: &mut [f64; 144],
) {
    let (tr, trial_kind) = trial;
    let (te, test_kind) = test;
    let nj = trial_kind.local_dofs();
    let ni = test_kind.local_dofs();
    let mj = trial_kind.scalar_nodes();
    let mi = test_kind.scalar_nodes();
    out[..ni * nj].fill(0.0);
    let area_scale = map.det().abs();
    for q in 0..tr.weights.len() {
        let w = tr.weights[q] * area_scale;
        let mut gj = [[0.0; 2]; 6];
        let mut gi = [[0.0; 2]; 6];
        for (g, &r) in gj.iter_mut().zip(&tr.grads[q][..mj]) {
            *g = map.gradient(r);
        }
        for (g, &r) in gi.iter_mut().zip(&te.grads[q][..mi]) {
            *g = map.gradient(r);
        }
        match kind {
            FormKind::Mass => {
                for i in 0..mi {
                    for j in 0..mj {
                        out[i * nj + j] += w * te.values[q][i] * tr.values[q][j];
                    }
                }
            }
            FormKind::PressureStiffness => {
                for i in 0..mi {
                    for j in 0..mj {
                        out[i * nj + j] += w * (gi[i][0] * gj[j][0] + gi[i][1] * gj[j][1]);
                    }
                }
            }
            FormKind::Elasticity => {
                // eps(N_a e_c) : eps(N_b e_d) = (delta_cd grad N_a . grad N_b + d_d N_a d_c N_b) / 2
                for d in 0..2 {
                    for b in 0..mi {
                        for c in 0..2 {
                            for a in 0..mj {
                                let dot = if c == d { gj[a][0] * gi[b][0] + gj[a][1] * gi[b][1] } else { 0.0 };
                                out[(d * mi + b) * nj + c * mj + a] += w * 0.5 * (dot + gj[a][d] * gi[b][c]);
                            }
                        }
                    }
                }
            }
            FormKind::DivDiv => {
                for d in 0..2 {
                    for b in 0..mi {
                        for c in 0..2 {
                            for a in 0..mj {
                                out[(d * mi + b) * nj + c * mj + a] += w * gj[a][c] * gi[b][d];
                            }
                        }
                    }
                }
            }
            FormKind::DivCoupling => {
                if trial_kind.is_vector() {
                    for i in 0..mi {
                        for c in 0..2 {
                            for a in 0..mj {
                                out[i * nj + c * mj + a] += w * te.values[q][i] * gj[a][c];
                            }
                        }
                    }
                } else {
                    for d in 0..2 {
                        for b in 0..mi {
                            for j in 0..mj {
                                out[(d * mi + b) * nj + j] += w * gi[b][d] * tr.values[q][j];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Assembles a unit-coefficient bilinear form.
pub fn assemble_form(kind: FormKind, trial: &Space, test: &Space) -> Result<CsrMatrix, AssemblyError> {
    check_form(kind, trial, test)?;
    let mesh = trial.mesh();
    let (tk, sk) = (trial.kind(), test.kind());
    let tab_trial = tabulate(tk);
    let tab_test = tabulate(sk);
    let (nj, ni) = (tk.local_dofs(), sk.local_dofs());
    let nt = mesh.num_triangles();
    let starts: Vec<usize> = (0..nt).step_by(CHUNK).collect();
    let chunks: Vec<Vec<(usize, usize, f64)>> = starts
        .par_iter()
        .map(|&s| {
            let mut local = [0.0; 144];
            let mut trips = Vec::with_capacity(CHUNK * ni * nj);
            for t in s..(s + CHUNK).min(nt) {
                let map = ElementMap::new(mesh.triangle_coords(t));
                element_matrix(kind, &map, (&tab_trial, tk), (&tab_test, sk), &mut local);
                let rows = test.element_dofs(t);
                let cols = trial.element_dofs(t);
                for (i, &r) in rows.iter().enumerate() {
                    for (j, &c) in cols.iter().enumerate() {
                        trips.push((r, c, local[i * nj + j]));
                    }
                }
            }
            trips
        })
        .collect();
    let trips = chunks.concat();
    Ok(CsrMatrix::from_triplets(test.dof_count(), trial.dof_count(), &trips))
}

/// Assembles a load vector. `data(x, n)` receives the point and the
/// outward unit normal (zero for volume terms); scalar test spaces use
/// the first component of the returned value.
pub fn assemble_functional(
    kind: &FunctionalKind,
    test: &Space,
    data: impl Fn(Point, Point) -> [f64; 2] + Sync,
) -> Result<Vec<f64>, AssemblyError> {
    let sk = test.kind();
    let mesh = test.mesh();
    let mut out = vec![0.0; test.dof_count()];
    match kind {
        FunctionalKind::VolumeLoad => {
            let tab = tabulate(sk);
            let m = sk.scalar_nodes();
            let nt = mesh.num_triangles();
            let starts: Vec<usize> = (0..nt).step_by(CHUNK).collect();
            let chunks: Vec<Vec<(usize, f64)>> = starts
                .par_iter()
                .map(|&s| {
                    let mut pairs = Vec::with_capacity(CHUNK * sk.local_dofs());
                    for t in s..(s + CHUNK).min(nt) {
                        let map = ElementMap::new(mesh.triangle_coords(t));
                        let dofs = test.element_dofs(t);
                        let mut local = [0.0; 12];
                        for q in 0..tab.weights.len() {
                            let w = tab.weights[q] * map.det().abs();
                            let f = data(map.map(tab.points[q]), [0.0, 0.0]);
                            for c in 0..sk.components() {
                                for a in 0..m {
                                    local[c * m + a] += w * f[c] * tab.values[q][a];
                                }
                            }
                        }
                        pairs.extend(dofs.iter().zip(&local).map(|(&d, &v)| (d, v)));
                    }
                    pairs
                })
                .collect();
            for (d, v) in chunks.into_iter().flatten() {
                out[d] += v;
            }
        }
        FunctionalKind::BoundaryTraction(tags) | FunctionalKind::BoundaryFlux(tags) => {
            let (name, want_vector) = match kind {
                FunctionalKind::BoundaryTraction(_) => ("boundary traction", true),
                _ => ("boundary flux", false),
            };
            if tags.is_empty() {
                return Err(AssemblyError::EmptyTags(name));
            }
            if sk.is_vector() != want_vector {
                return Err(AssemblyError::WrongTestSpace {
                    functional: name,
                    expected: if want_vector { "vector" } else { "scalar" },
                    got: sk,
                });
            }
            let (xs, ws) = edge_quadrature();
            let nv = mesh.num_vertices();
            let ns = test.scalar_dof_count();
            for (edge, &id) in mesh.boundary_edges().iter().zip(mesh.boundary_edge_ids()) {
                if !tags.contains(&edge.tag) {
                    continue;
                }
                let [a, b] = edge.vertices;
                let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
                let len = (q[0] - p[0]).hypot(q[1] - p[1]);
                let normal = edge.tag.outward_normal();
                for (&s, &w) in xs.iter().zip(&ws) {
                    let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                    let g = data(x, normal);
                    // trace of the element basis on the edge
                    let (nodes, phi): (Vec<usize>, Vec<f64>) = if sk == SpaceKind::P1 {
                        (vec![a, b], vec![1.0 - s, s])
                    } else {
                        (
                            vec![a, b, nv + id],
                            vec![(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)],
                        )
                    };
                    for c in 0..sk.components() {
                        for (&n, &v) in nodes.iter().zip(&phi) {
                            out[c * ns + n] += w * len * g[c] * v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Essential boundary conditions imposed by row and column elimination.
///
/// Constrained rows and columns of the operator are replaced by those of
/// the identity. The removed column entries are kept so that right-hand
/// sides can be lifted for new boundary values without touching the
/// (already factorized) matrix.
#[derive(Debug, Clone)]
pub struct Constraint {
    dofs: Vec<usize>,
    fixed: Vec<bool>,
    coupling: CsrMatrix,
}

impl Constraint {
    /// Returns the constrained matrix and the constraint record.
    pub fn new(matrix: &CsrMatrix, dofs: &[usize]) -> (CsrMatrix, Constraint) {
        let n = matrix.nrows();
        assert_eq!(n, matrix.ncols(), "constraints need a square matrix");
        let mut fixed = vec![false; n];
        for &d in dofs {
            fixed[d] = true;
        }
        let mut kept = Vec::with_capacity(matrix.nnz());
        let mut moved = Vec::new();
        for (i, j, v) in matrix.triplets() {
            match (fixed[i], fixed[j]) {
                (false, false) => kept.push((i, j, v)),
                (false, true) => moved.push((i, j, v)),
                _ => {}
            }
        }
        let mut dofs = dofs.to_vec();
        dofs.sort_unstable();
        dofs.dedup();
        kept.extend(dofs.iter().map(|&d| (d, d, 1.0)));
        let constrained = CsrMatrix::from_triplets(n, n, &kept);
        let coupling = CsrMatrix::from_triplets(n, n, &moved);
        (constrained, Constraint { dofs, fixed, coupling })
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    /// Moves the known values into `rhs`: free rows lose `A[i, fixed] * g`,
    /// fixed rows take the prescribed value. Only the fixed entries of
    /// `values` are read.
    pub fn apply_rhs(&self, rhs: &mut [f64], values: &[f64]) {
        let mut g = vec![0.0; values.len()];
        for &d in &self.dofs {
            g[d] = values[d];
        }
        let lift = self.coupling.matvec(&g);
        for (i, r) in rhs.iter_mut().enumerate() {
            if self.fixed[i] {
                *r = g[i];
            } else {
                *r -= lift[i];
            }
        }
    }

    /// Sets every fixed entry of `rhs` to zero and leaves the rest.
    pub fn zero_fixed(&self, rhs: &mut [f64]) {
        for &d in &self.dofs {
            rhs[d] = 0.0;
        }
    }
}

/// Constrains the DOFs of `space` on `tags` to `g(x, t)` (first component
/// for scalar spaces).
pub fn apply_dirichlet(
    matrix: &CsrMatrix,
    rhs: &[f64],
    space: &Space,
    tags: &[BoundaryTag],
    g: impl Fn(Point, f64) -> [f64; 2],
    t: f64,
) -> (CsrMatrix, Vec<f64>) {
    let dofs = space.boundary_dofs(tags);
    let (constrained, constraint) = Constraint::new(matrix, &dofs);
    let mut values = vec![0.0; space.dof_count()];
    for &d in &dofs {
        values[d] = g(space.node_point(d), t)[space.component(d)];
    }
    let mut b = rhs.to_vec();
    constraint.apply_rhs(&mut b, &values);
    (constrained, b)
}

/// Outcome of comparing `||div u||` with `sqrt(2) ||eps(u)||` on random
/// fields.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KornReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `||div u|| / ||eps(u)||`.
    pub max_ratio: f64,
}

/// Draws `samples` random coefficient vectors on a P2 vector space and
/// checks `||div u|| <= sqrt(2) ||eps(u)||` up to `1e-12 ||eps(u)||`.
pub fn korn_check(space: &Arc<Space>, samples: usize, seed: u64) -> Result<KornReport, AssemblyError> {
    let elast = assemble_form(FormKind::Elasticity, space, space)?;
    let divdiv = assemble_form(FormKind::DivDiv, space, space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for k in 0..samples {
        // alternate smooth-ish and rough fields
        let scale = if k % 2 == 0 { 1.0 } else { 10f64.powi(rng.gen_range(-3..=3)) };
        let u: Vec<f64> = (0..space.dof_count()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let eps = elast.bilinear(&u, &u).max(0.0).sqrt();
        let div = divdiv.bilinear(&u, &u).max(0.0).sqrt();
        if eps > 0.0 {
            max_ratio = max_ratio.max(div / eps);
        }
        if div > 2f64.sqrt() * eps + 1e-12 * eps {
            violations += 1;
        }
    }
    Ok(KornReport { samples, violations, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate_vector;
    use crate::mesh::{build_uniform, build_uniform_with, Diagonal};

    fn spaces(n: usize) -> (Arc<Space>, Arc<Space>) {
        let mesh = Arc::new(build_uniform(n).unwrap());
        (Arc::new(Space::new(SpaceKind::P2Vector, mesh.clone(), &[])), Arc::new(Space::new(SpaceKind::P1, mesh, &[])))
    }

    #[test]
    fn mass_row_sums_total_area() {
        let (_, p1) = spaces(8);
        let m = assemble_form(FormKind::Mass, &p1, &p1).unwrap();
        let total: f64 = m.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!(m.max_asymmetry() <= 1e-13);
    }

    #[test]
    fn rigid_motions_have_no_strain() {
        let (v, _) = spaces(4);
        let a = assemble_form(FormKind::Elasticity, &v, &v).unwrap();
        assert!(a.max_asymmetry() <= 1e-13);
        let u = interpolate_vector(&v, |x| [0.3 - 0.7 * x[1], -1.1 + 0.7 * x[0]]).unwrap();
        let r = a.matvec(u.values());
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{:?}", r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn div_coupling_orientations_are_transposes() {
        let (v, p) = spaces(3);
        let b = assemble_form(FormKind::DivCoupling, &v, &p).unwrap();
        let bt = assemble_form(FormKind::DivCoupling, &p, &v).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (p.dof_count(), v.dof_count()));
        let diff = b.transpose().triplets().map(|(i, j, x)| (x - bt.get(i, j)).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn incompatible_forms_rejected() {
        let (v, p) = spaces(2);
        assert!(matches!(assemble_form(FormKind::Mass, &v, &p), Err(AssemblyError::Incompatible { .. })));
        assert!(matches!(assemble_form(FormKind::DivCoupling, &p, &p), Err(AssemblyError::Incompatible { .. })));
        let other = Arc::new(Space::new(SpaceKind::P1, Arc::new(build_uniform(2).unwrap()), &[]));
        assert_eq!(assemble_form(FormKind::Mass, &p, &other).unwrap_err(), AssemblyError::MeshMismatch);
    }

    #[test]
    fn functionals() {
        let (v, p) = spaces(4);
        let zero = assemble_functional(&FunctionalKind::VolumeLoad, &v, |_, _| [0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let one = assemble_functional(&FunctionalKind::VolumeLoad, &p, |_, _| [1.0, 0.0]).unwrap();
        assert!((one.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let flux = assemble_functional(&FunctionalKind::BoundaryFlux(vec![BoundaryTag::Bottom]), &p, |_, _| [1.0, 0.0])
            .unwrap();
        assert!((flux.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // only bottom vertices receive flux
        for (d, &x) in flux.iter().enumerate() {
            if p.node_point(d)[1] != 0.0 {
                assert_eq!(x, 0.0);
            }
        }
        assert_eq!(
            assemble_functional(&FunctionalKind::BoundaryFlux(vec![]), &p, |_, _| [1.0, 0.0]).unwrap_err(),
            AssemblyError::EmptyTags("boundary flux")
        );
        assert!(matches!(
            assemble_functional(&FunctionalKind::BoundaryTraction(vec![BoundaryTag::Top]), &p, |_, _| [1.0, 0.0]),
            Err(AssemblyError::WrongTestSpace { .. })
        ));
    }

    #[test]
    fn divergence_theorem() {
        let (v, p) = spaces(5);
        let b = assemble_form(FormKind::DivCoupling, &v, &p).unwrap();
        let normals =
            assemble_functional(&FunctionalKind::BoundaryTraction(BoundaryTag::ALL.to_vec()), &v, |_, n| n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u: Vec<f64> = (0..v.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let interior: f64 = b.matvec(&u).iter().sum();
            let boundary: f64 = normals.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((interior - boundary).abs() <= 1e-10 * boundary.abs().max(1.0));
        }
    }

    #[test]
    fn dirichlet_elimination_keeps_symmetry_and_values() {
        let mesh = Arc::new(build_uniform(16).unwrap());
        let tags = [BoundaryTag::Right, BoundaryTag::Left];
        let p = Arc::new(Space::new(SpaceKind::P1, mesh, &tags));
        let m = assemble_form(FormKind::Mass, &p, &p).unwrap();
        let s = assemble_form(FormKind::PressureStiffness, &p, &p).unwrap();
        let mut bb = crate::sparse::BlockBuilder::new(p.dof_count(), p.dof_count());
        bb.add(&m, 0, 0, 1.0).add(&s, 0, 0, 0.01);
        let a = bb.build();
        let t = 0.01;
        let exact = |x: Point, t: f64| {
            let pi = std::f64::consts::PI;
            [(-t).exp() * (pi * x[0]).sin() * (pi * x[1]).sin(), 0.0]
        };
        let rhs = vec![1.0; p.dof_count()];
        let (ac, bc) = apply_dirichlet(&a, &rhs, &p, &tags, exact, t);
        assert!(ac.max_asymmetry() <= 1e-13);
        let x = crate::linalg::lu_factor(&ac).unwrap().solve(&bc);
        for &d in p.constrained_dofs() {
            assert!((x[d] - exact(p.node_point(d), t)[0]).abs() <= 1e-13);
        }
        let (_, bz) = apply_dirichlet(&a, &rhs, &p, &tags, |_, _| [0.0, 0.0], t);
        let xz = crate::linalg::lu_factor(&ac).unwrap().solve(&bz);
        assert!(p.constrained_dofs().iter().all(|&d| xz[d] == 0.0));
    }

    #[test]
    fn korn_inequality_on_random_fields() {
        let (v, _) = spaces(2);
        let r = korn_check(&v, 50, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 2f64.sqrt());
    }

    #[test]
    fn assembly_is_deterministic() {
        let (v, p) = spaces(12);
        let a = assemble_form(FormKind::DivCoupling, &v, &p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| assemble_form(FormKind::DivCoupling, &v, &p).unwrap());
        assert_eq!(a, b);
    }

    fn unit_triangle() -> Arc<Space> {
        let mesh = Arc::new(build_uniform_with(1, Diagonal::Rising).unwrap());
        Arc::new(Space::new(SpaceKind::P1, mesh, &[]))
    }

    #[test]
    fn one_cell_mass_entries() {
        // two triangles of area 1/2 share the diagonal vertices 0 and 3
        let p = unit_triangle();
        let m = assemble_form(FormKind::Mass, &p, &p).unwrap();
        let area = 0.5;
        assert!((m.get(1, 1) - area / 6.0).abs() < 1e-15);
        assert!((m.get(0, 0) - 2.0 * area / 6.0).abs() < 1e-15);
        assert!((m.get(0, 1) - area / 12.0).abs() < 1e-15);
        assert!((m.get(0, 3) - 2.0 * area / 12.0).abs() < 1e-15);
        assert_eq!(m.get(1, 2), 0.0);
    }
}
