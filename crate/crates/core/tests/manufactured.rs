//! Strong-form residual of the manufactured fields.

mod common;

use std::f64::consts::PI;

use common::{max_strong_residual, strong_form};

use biot_core::{ManufacturedCase, PhysParams, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn strong_form_residual_all_presets() {
    for (k, preset) in Preset::ALL.into_iter().enumerate() {
        let params = PhysParams::from_preset(preset, 1e-3, 0.01).unwrap();
        let worst = max_strong_residual(&ManufacturedCase::new(params), 100, 11 + k as u64);
        assert!(worst <= 1e-8, "{preset}: strong-form residual {worst:e}");
    }
}

#[test]
fn divergence_closed_form() {
    // div u = e^{-t} pi sin(pi(x+y)) / (mu + lambda)
    let params = PhysParams::from_preset(Preset::Nu03, 1e-3, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let pt = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let s = strong_form(&params, pt);
        let closed = (-pt[2]).exp() * PI * (PI * (pt[0] + pt[1])).sin() / (params.mu + params.lambda);
        assert!((s.div_u - closed).abs() < 1e-12);
    }
}

#[test]
fn boundary_data_consistent_with_exact_fields() {
    let params = PhysParams::from_preset(Preset::Nu03, 1e-3, 0.01).unwrap();
    let case = ManufacturedCase::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let (s, t) = (rng.gen::<f64>(), rng.gen_range(0.0..0.01));
        for (x, n) in [([s, 0.0], [0.0, -1.0]), ([s, 1.0], [0.0, 1.0])] {
            let st = strong_form(&params, [x[0], x[1], t]);
            let g = st.grad_u;
            let sxx = 2.0 * params.mu * g[0][0] - st.xi;
            let syy = 2.0 * params.mu * g[1][1] - st.xi;
            let sxy = params.mu * (g[0][1] + g[1][0]);
            let expect = [sxx * n[0] + sxy * n[1], sxy * n[0] + syy * n[1]];
            let got = case.traction_at(x, n, t);
            assert!((got[0] - expect[0]).abs() < 1e-10 && (got[1] - expect[1]).abs() < 1e-10);
            let gp = case.pressure_gradient(x, t);
            let flux = case.flux_at(x, n, t);
            assert!((flux - params.conductivity * (gp[0] * n[0] + gp[1] * n[1])).abs() < 1e-12);
        }
    }
}
