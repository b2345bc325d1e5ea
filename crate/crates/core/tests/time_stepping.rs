use std::sync::Arc;

use biot_core::{
    build_uniform, cg_solve, compute_errors, consistent_total_pressure, contraction_monitor_from, energy_check,
    lu_factor, relative_residual, run_level, Algorithm, BiotState, BoundaryTag, Constraint, CoupledSolver,
    DiscreteSystem, FieldVector, IterationControl, ManufacturedCase, PhysParams, Point, Preset, ProblemData,
    SplitSolver, ZeroData,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(n: usize, params: PhysParams, data: Arc<dyn ProblemData>) -> DiscreteSystem {
    DiscreteSystem::new(Arc::new(build_uniform(n).unwrap()), params, data).unwrap()
}

fn nu03(dt: f64) -> PhysParams {
    PhysParams::from_preset(Preset::Nu03, dt, 0.01).unwrap()
}

/// Time-independent loads and exact-solution Dirichlet data on all sides.
struct Steady(ManufacturedCase);

impl ProblemData for Steady {
    fn body_force(&self, x: Point) -> [f64; 2] {
        self.0.body_force_at(x, 0.0)
    }
    fn traction(&self, _: Point, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn source(&self, x: Point) -> f64 {
        self.0.source_at(x, 0.0)
    }
    fn flux(&self, _: Point, _: Point) -> f64 {
        0.0
    }
    fn displacement_bc(&self, x: Point) -> [f64; 2] {
        self.0.displacement(x, 0.0)
    }
    fn pressure_bc(&self, x: Point) -> f64 {
        self.0.pressure(x, 0.0)
    }
    fn time_factor(&self, _: f64) -> f64 {
        1.0
    }
    fn dirichlet_tags(&self) -> Vec<BoundaryTag> {
        BoundaryTag::ALL.to_vec()
    }
    fn neumann_tags(&self) -> Vec<BoundaryTag> {
        Vec::new()
    }
}

#[test]
fn zero_data_gives_zero_state_for_every_scheme() {
    let sys = system(4, nu03(1e-3), Arc::new(ZeroData));
    let coupled = CoupledSolver::new(&sys).unwrap();
    let split = SplitSolver::new(&sys).unwrap();
    let zero = sys.zero_state(0.0);
    let (a, _) = coupled.step(&zero).unwrap();
    let (b, _) = split.step_te(&zero).unwrap();
    let (c, _) = split.step_iterative(&zero, IterationControl::Fixed(1)).unwrap();
    for s in [a, b, c] {
        assert_eq!(s.max_difference(&zero), [0.0; 3]);
        assert!((s.t - 1e-3).abs() < 1e-15);
    }
}

#[test]
fn steady_data_reaches_a_fixed_point() {
    let params = PhysParams::from_preset(Preset::Nu03, 0.5, 100.0).unwrap();
    let sys = system(4, params, Arc::new(Steady(ManufacturedCase::new(params))));
    let solver = CoupledSolver::new(&sys).unwrap();
    let mut state = sys.zero_state(0.0);
    let mut steps = None;
    for n in 1..=params.num_steps() {
        let (next, stats) = solver.step(&state).unwrap();
        assert!(!stats.tainted());
        let d = next.max_difference(&state);
        state = next;
        if d.iter().all(|&v| v <= 1e-10) {
            steps = Some(n);
            break;
        }
    }
    assert!(steps.is_some(), "no fixed point within {} steps", params.num_steps());
    // the fixed point does not depend on the time step
    let params2 = PhysParams { dt: 2.0, ..params };
    let sys2 = DiscreteSystem::new(sys.mesh().clone(), params2, sys.data().clone()).unwrap();
    let start = BiotState {
        u: FieldVector::from_vec(sys2.u_space().clone(), state.u.values().to_vec()).unwrap(),
        xi: FieldVector::from_vec(sys2.xi_space().clone(), state.xi.values().to_vec()).unwrap(),
        p: FieldVector::from_vec(sys2.p_space().clone(), state.p.values().to_vec()).unwrap(),
        t: state.t,
    };
    let (again, _) = CoupledSolver::new(&sys2).unwrap().step(&start).unwrap();
    assert!(again.max_difference(&start).iter().all(|&v| v <= 1e-9));
}

#[test]
fn te_agrees_with_coupled_on_the_coarse_mesh() {
    let params = nu03(1e-3);
    let case = ManufacturedCase::new(params);
    let sys = system(16, params, Arc::new(case));
    let it = IterationControl::Fixed(1);
    let (coupled, _) = run_level(&sys, &case, Algorithm::Coupled, it).unwrap();
    let (te, _) = run_level(&sys, &case, Algorithm::Te, it).unwrap();
    let (ec, et) = (compute_errors(&coupled, &case).as_array(), compute_errors(&te, &case).as_array());
    for k in 0..6 {
        assert!((ec[k] - et[k]).abs() <= 0.05 * ec[k], "field {k}: coupled {:e} te {:e}", ec[k], et[k]);
    }
}

#[test]
fn iterating_to_tolerance_recovers_the_coupled_step() {
    for preset in Preset::ALL {
        let params = PhysParams::from_preset(preset, 1e-3, 0.01).unwrap();
        let case = ManufacturedCase::new(params);
        let sys = system(8, params, Arc::new(case));
        let start = case.initial_state(&sys, 0.0).unwrap();
        let (coupled, _) = CoupledSolver::new(&sys).unwrap().step(&start).unwrap();
        let control = IterationControl::Tolerance { tol: 1e-12, max_iter: 10_000 };
        let (iterated, log) = SplitSolver::new(&sys).unwrap().step_iterative(&start, control).unwrap();
        let d = iterated.max_difference(&coupled);
        assert!(d.iter().all(|&v| v <= 1e-10), "{preset}: {d:?} after {} sweeps", log.increments.len());
    }
}

#[test]
fn reused_factorization_reproduces_the_step() {
    let params = nu03(1e-3);
    let case = ManufacturedCase::new(params);
    let sys = system(8, params, Arc::new(case));
    let start = case.initial_state(&sys, 0.0).unwrap();
    let solver = CoupledSolver::new(&sys).unwrap();
    let (a, _) = solver.step(&start).unwrap();
    let (b, _) = solver.step(&start).unwrap();
    let (c, _) = CoupledSolver::new(&sys).unwrap().step(&start).unwrap();
    assert_eq!(a.max_difference(&b), [0.0; 3]);
    assert!(a.max_difference(&c).iter().all(|&v| v <= 1e-12));
}

#[test]
fn energy_of_zero_trajectory_is_zero() {
    let sys = system(4, nu03(1e-3), Arc::new(ZeroData));
    let solver = CoupledSolver::new(&sys).unwrap();
    let mut traj = vec![sys.zero_state(0.0)];
    for _ in 0..3 {
        let next = solver.step(traj.last().unwrap()).unwrap().0;
        traj.push(next);
    }
    let r = energy_check(&sys, &traj);
    assert!(r.energy.iter().chain(&r.dissipation).all(|&v| v == 0.0));
    assert_eq!(r.max_defect(), 0.0);
}

#[test]
fn energy_decays_from_a_random_admissible_state() {
    let params = nu03(1e-2);
    let sys = system(8, params, Arc::new(ZeroData));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut u = FieldVector::zeros(sys.u_space().clone());
    for (i, v) in u.values_mut().iter_mut().enumerate() {
        if !sys.u_space().is_constrained(i) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut p = FieldVector::zeros(sys.p_space().clone());
    for (i, v) in p.values_mut().iter_mut().enumerate() {
        if !sys.p_space().is_constrained(i) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let xi = consistent_total_pressure(&sys, &u, &p).unwrap();
    let start = BiotState { u, xi, p, t: 0.0 };
    let (next, _) = CoupledSolver::new(&sys).unwrap().step(&start).unwrap();
    let r = energy_check(&sys, &[start, next]);
    assert!(r.min_dissipation_term >= 0.0);
    assert!(r.energy[1] <= r.energy[0]);
    assert!(r.max_defect() <= 1e-9, "{:e}", r.max_defect());
}

#[test]
fn starting_at_the_coupled_total_pressure_leaves_no_error() {
    let params = nu03(1e-3);
    let case = ManufacturedCase::new(params);
    let sys = system(8, params, Arc::new(case));
    let start = case.initial_state(&sys, 0.0).unwrap();
    let (oracle, _) = CoupledSolver::new(&sys).unwrap().step(&start).unwrap();
    let r = contraction_monitor_from(&sys, &start, oracle.xi.values(), 5).unwrap();
    let scale = sys.l2_norm_p1(oracle.xi.values());
    assert!(r.xi_errors.iter().all(|&e| e <= 1e-10 * scale), "{:?}", r.xi_errors);
    assert!(r.p_errors.iter().all(|&e| e <= 1e-10 * scale));
    assert!(r.passed());
}

#[test]
fn cg_agrees_with_lu_on_the_pressure_system() {
    let params = nu03(1e-3);
    let sys = system(16, params, Arc::new(ManufacturedCase::new(params)));
    let (a, _) = Constraint::new(&sys.pressure_matrix(), sys.p_space().constrained_dofs());
    let b: Vec<f64> = (0..a.nrows()).map(|i| ((i as f64) * 0.37).sin()).collect();
    let lu = lu_factor(&a).unwrap().solve(&b);
    let cg = cg_solve(&a, &b, 1e-13, 10_000).unwrap();
    assert!(relative_residual(&a, &lu, &b) <= 1e-12);
    let diff = lu.iter().zip(&cg.x).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-8, "{diff:e}");
}
