use std::sync::Arc;

use biot_core::{
    assemble_form, build_uniform_with, consistent_total_pressure, contraction_monitor, energy_check, format_sci,
    interpolate_scalar, interpolate_vector, BiotState, CoupledSolver, CsrMatrix, Diagonal, DiscreteSystem, FieldVector,
    FormKind, FrozenHomogeneous, ManufacturedCase, PhysParams, Space, SpaceKind,
};
use proptest::prelude::*;

fn diagonal() -> impl Strategy<Value = Diagonal> {
    prop_oneof![Just(Diagonal::Rising), Just(Diagonal::Falling)]
}

fn space(kind: SpaceKind, n: usize, d: Diagonal) -> Arc<Space> {
    Arc::new(Space::new(kind, Arc::new(build_uniform_with(n, d).unwrap()), &[]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_matches_dense_accumulation(
        entries in prop::collection::vec((0usize..7, 0usize..5, -10.0f64..10.0), 0..60),
        x in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let a = CsrMatrix::from_triplets(7, 5, &entries);
        let mut dense = vec![vec![0.0; 5]; 7];
        for &(i, j, v) in &entries {
            dense[i][j] += v;
        }
        let d = a.to_dense();
        for i in 0..7 {
            for j in 0..5 {
                prop_assert!((d[i][j] - dense[i][j]).abs() < 1e-12);
            }
        }
        let y = a.matvec(&x);
        for i in 0..7 {
            let expect: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
            prop_assert!((y[i] - expect).abs() < 1e-12);
        }
        prop_assert_eq!(a.transpose().transpose().to_dense(), d);
    }

    #[test]
    fn uniform_meshes_tile_the_square(n in 1usize..12, d in diagonal()) {
        let mesh = build_uniform_with(n, d).unwrap();
        prop_assert_eq!(mesh.num_vertices(), (n + 1) * (n + 1));
        prop_assert_eq!(mesh.num_triangles(), 2 * n * n);
        prop_assert_eq!(mesh.boundary_edges().len(), 4 * n);
        prop_assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        prop_assert!((0..mesh.num_triangles()).all(|t| mesh.signed_area(t) > 0.0));
        let fine = mesh.refine();
        prop_assert_eq!(fine.num_triangles(), 8 * n * n);
        prop_assert!((fine.total_area() - 1.0).abs() < 1e-12);
        prop_assert!((0..fine.num_triangles()).all(|t| fine.signed_area(t) > 0.0));
    }

    #[test]
    fn mass_integrates_constants_and_elasticity_ignores_rigid_motions(
        n in 1usize..6,
        d in diagonal(),
        rigid in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        for kind in [SpaceKind::P1, SpaceKind::P2] {
            let s = space(kind, n, d);
            let m = assemble_form(FormKind::Mass, &s, &s).unwrap();
            let ones = vec![1.0; s.dof_count()];
            prop_assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
        }
        let v = space(SpaceKind::P2Vector, n, d);
        let a = assemble_form(FormKind::Elasticity, &v, &v).unwrap();
        let (tx, ty, w) = rigid;
        let u = interpolate_vector(&v, |x| [tx - w * x[1], ty + w * x[0]]).unwrap();
        let au = a.matvec(u.values());
        prop_assert!(au.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn div_coupling_integrates_divergence_of_linear_fields(
        n in 1usize..6,
        d in diagonal(),
        g in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        let mesh = Arc::new(build_uniform_with(n, d).unwrap());
        let v = Arc::new(Space::new(SpaceKind::P2Vector, mesh.clone(), &[]));
        let p = Arc::new(Space::new(SpaceKind::P1, mesh, &[]));
        let b = assemble_form(FormKind::DivCoupling, &v, &p).unwrap();
        let u = interpolate_vector(&v, |x| [g.0 * x[0] + g.1 * x[1], g.2 * x[0] + g.3 * x[1]]).unwrap();
        let one = interpolate_scalar(&p, |_| 1.0).unwrap();
        let total = b.bilinear(one.values(), u.values());
        prop_assert!((total - (g.0 + g.3)).abs() < 1e-12);
    }

    #[test]
    fn divergence_bounded_by_strain(
        n in 1usize..5,
        d in diagonal(),
        seed in prop::collection::vec(-1.0f64..1.0, 1..400),
    ) {
        let v = space(SpaceKind::P2Vector, n, d);
        let a = assemble_form(FormKind::Elasticity, &v, &v).unwrap();
        let dd = assemble_form(FormKind::DivDiv, &v, &v).unwrap();
        let u: Vec<f64> = (0..v.dof_count()).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sqrt()).collect();
        let eps = a.bilinear(&u, &u).sqrt();
        let div = dd.bilinear(&u, &u).sqrt();
        prop_assert!(div <= 2f64.sqrt() * eps * (1.0 + 1e-12));
    }

    #[test]
    fn sci_format_round_trips(m in 1.0f64..10.0, e in -30i32..30) {
        let x = m * 10f64.powi(e);
        let s = format_sci(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-4 + 1e-12);
        let (mant, exp) = s.split_once('e').unwrap();
        prop_assert_eq!(mant.len(), 5);
        prop_assert_eq!(exp.len(), 3);
    }

    #[test]
    fn lame_constants_and_contraction_factor_in_range(
        youngs in 1e-2f64..1e3,
        nu in 0.01f64..0.4999,
        alpha in 0.1f64..2.0,
        c0 in 0.0f64..10.0,
    ) {
        let p = PhysParams::new(youngs, nu, alpha, c0, 1.0, 1e-3, 0.01).unwrap();
        prop_assert!(p.mu > 0.0 && p.lambda > 0.0);
        let rho = p.contraction_factor();
        prop_assert!(rho > 0.0 && rho <= 1.0);
        prop_assert_eq!(rho == 1.0, c0 == 0.0);
        prop_assert!((p.storage_total() * rho - alpha * alpha / p.lambda).abs() < 1e-12 * p.storage_total());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn iterative_scheme_contracts_for_any_material(
        nu in 0.1f64..0.45,
        c0 in 0.05f64..5.0,
        k in 1e-4f64..10.0,
        dt in 1e-4f64..1e-1,
        d in diagonal(),
    ) {
        let params = PhysParams::new(1.0, nu, 1.0, c0, k, dt, 1.0).unwrap();
        let case = ManufacturedCase::new(params);
        let mesh = Arc::new(build_uniform_with(4, d).unwrap());
        let sys = DiscreteSystem::new(mesh, params, Arc::new(case)).unwrap();
        let start = case.initial_state(&sys, 0.0).unwrap();
        let r = contraction_monitor(&sys, &start, 8).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
        let rho = params.contraction_factor();
        for i in 1..r.xi_errors.len() {
            prop_assert!(r.xi_errors[i] <= rho.powi(i as i32) * r.xi_errors[0] * (1.0 + 1e-8) + r.noise_floor);
        }
    }

    #[test]
    fn energy_identity_for_any_material(
        nu in 0.1f64..0.45,
        c0 in 0.0f64..2.0,
        k in 1e-3f64..10.0,
        dt in 1e-3f64..1e-1,
    ) {
        let params = PhysParams::new(1.0, nu, 1.0, c0, k, dt, 1.0).unwrap();
        let case = ManufacturedCase::new(params);
        let mesh = Arc::new(build_uniform_with(4, Diagonal::Falling).unwrap());
        let sys = DiscreteSystem::new(mesh, params, Arc::new(FrozenHomogeneous::new(Arc::new(case), 0.0))).unwrap();
        let mut u = interpolate_vector(sys.u_space(), |x| case.displacement(x, 0.0)).unwrap();
        let mut p = interpolate_scalar(sys.p_space(), |x| case.pressure(x, 0.0)).unwrap();
        zero_constrained(&mut u);
        zero_constrained(&mut p);
        let xi = consistent_total_pressure(&sys, &u, &p).unwrap();
        let mut traj = vec![BiotState { u, xi, p, t: 0.0 }];
        let solver = CoupledSolver::new(&sys).unwrap();
        for _ in 0..3 {
            let next = solver.step(traj.last().unwrap()).unwrap().0;
            traj.push(next);
        }
        let r = energy_check(&sys, &traj);
        prop_assert!(r.max_defect() <= 1e-9, "{:?}", r);
        prop_assert!(r.min_dissipation_term >= 0.0);
    }
}

fn zero_constrained(f: &mut FieldVector) {
    let space = f.space().clone();
    for &i in space.constrained_dofs() {
        f.values_mut()[i] = 0.0;
    }
}
