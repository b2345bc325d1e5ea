//! Exact solution over hyper-dual numbers, so first and second derivatives
//! come out exact to rounding and independent of the hand-derived formulas
//! in the library.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

use biot_core::{ManufacturedCase, PhysParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a + b e1 + c e2 + d e1 e2` with `e1^2 = e2^2 = 0`.
#[derive(Debug, Clone, Copy)]
struct Hd {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Hd {
    fn cst(a: f64) -> Self {
        Self { a, b: 0.0, c: 0.0, d: 0.0 }
    }

    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self { a: f, b: self.b * df, c: self.c * df, d: self.d * df + self.b * self.c * ddf }
    }

    fn sin(self) -> Self {
        self.chain(self.a.sin(), self.a.cos(), -self.a.sin())
    }

    fn cos(self) -> Self {
        self.chain(self.a.cos(), -self.a.sin(), -self.a.cos())
    }

    fn exp(self) -> Self {
        let e = self.a.exp();
        self.chain(e, e, e)
    }
}

impl Add for Hd {
    type Output = Hd;
    fn add(self, o: Hd) -> Hd {
        Hd { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

impl Sub for Hd {
    type Output = Hd;
    fn sub(self, o: Hd) -> Hd {
        self + (-o)
    }
}

impl Neg for Hd {
    type Output = Hd;
    fn neg(self) -> Hd {
        Hd { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }
}

impl Mul for Hd {
    type Output = Hd;
    fn mul(self, o: Hd) -> Hd {
        Hd {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a,
            c: self.a * o.c + self.c * o.a,
            d: self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        }
    }
}

impl Mul<Hd> for f64 {
    type Output = Hd;
    fn mul(self, o: Hd) -> Hd {
        Hd::cst(self) * o
    }
}

impl Div<f64> for Hd {
    type Output = Hd;
    fn div(self, k: f64) -> Hd {
        Hd { a: self.a / k, b: self.b / k, c: self.c / k, d: self.d / k }
    }
}

fn one() -> Hd {
    Hd::cst(1.0)
}

struct Exact {
    mu: f64,
    lambda: f64,
}

impl Exact {
    fn u(&self, x: Hd, y: Hd, t: Hd) -> [Hd; 2] {
        let e = (-t).exp();
        let bump = (PI * x).sin() * (PI * y).sin() / (self.mu + self.lambda);
        [
            e * ((2.0 * PI * y).sin() * ((2.0 * PI * x).cos() - one()) + bump),
            e * ((2.0 * PI * x).sin() * (one() - (2.0 * PI * y).cos()) + bump),
        ]
    }

    fn p(&self, x: Hd, y: Hd, t: Hd) -> Hd {
        (-t).exp() * (PI * x).sin() * (PI * y).sin()
    }
}

/// Seeds variable `i` along `e1` and variable `j` along `e2`.
fn seed(point: [f64; 3], i: usize, j: usize) -> [Hd; 3] {
    std::array::from_fn(|k| Hd { a: point[k], b: f64::from(k == i), c: f64::from(k == j), d: 0.0 })
}

/// `d^2 f / dv_i dv_j` and the first derivative along `i`.
fn second<const N: usize>(f: impl Fn([Hd; 3]) -> [Hd; N], point: [f64; 3], i: usize, j: usize) -> [(f64, f64); N] {
    let v = f(seed(point, i, j));
    std::array::from_fn(|k| (v[k].b, v[k].d))
}

pub struct Strong {
    pub force: [f64; 2],
    pub source: f64,
    pub div_u: f64,
    pub grad_u: [[f64; 2]; 2],
    pub xi: f64,
}

/// Strong-form quantities of the exact solution at `(x, y, t)`.
pub fn strong_form(params: &PhysParams, pt: [f64; 3]) -> Strong {
    let ex = Exact { mu: params.mu, lambda: params.lambda };
    let (mu, lambda, alpha, c0, k) = (params.mu, params.lambda, params.alpha, params.c0, params.conductivity);
    let u = |v: [Hd; 3]| ex.u(v[0], v[1], v[2]);
    let p = |v: [Hd; 3]| [ex.p(v[0], v[1], v[2])];

    // d2u[i][j][c] = d^2 u_c / dx_i dx_j
    let mut d2u = [[[0.0; 2]; 2]; 2];
    let mut grad_u = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let r = second(u, pt, i, j);
            for c in 0..2 {
                d2u[i][j][c] = r[c].1;
                grad_u[c][i] = r[c].0;
            }
        }
    }
    let mut dp = [0.0; 2];
    let mut lap_p = 0.0;
    for (i, slot) in dp.iter_mut().enumerate() {
        let r = second(p, pt, i, i);
        *slot = r[0].0;
        lap_p += r[0].1;
    }
    let div_u = grad_u[0][0] + grad_u[1][1];
    let grad_div: [f64; 2] = std::array::from_fn(|c| d2u[c][0][0] + d2u[c][1][1]);
    let p_val = p(seed(pt, 0, 0))[0].a;
    let xi = alpha * p_val - lambda * div_u;
    let grad_xi: [f64; 2] = std::array::from_fn(|c| alpha * dp[c] - lambda * grad_div[c]);

    // -div(2 mu eps(u)) + grad xi
    let force = std::array::from_fn(|c| {
        let lap = d2u[0][0][c] + d2u[1][1][c];
        -mu * (lap + grad_div[c]) + grad_xi[c]
    });

    // c0 p_t + alpha (div u)_t - K lap p, with the time derivative taken
    // along e1 and a spatial one along e2
    let dt_p = second(p, pt, 2, 2)[0].0;
    let mut dt_div = 0.0;
    for i in 0..2 {
        dt_div += second(u, pt, 2, i)[i].1;
    }
    let source = c0 * dt_p + alpha * dt_div - k * lap_p;
    Strong { force, source, div_u, grad_u, xi }
}

/// Largest relative mismatch between the library's forcing, divergence,
/// total pressure and gradient formulas and the strong form, over
/// `samples` random points of `[0,1]^2 x [0, 0.01]`.
pub fn max_strong_residual(case: &ManufacturedCase, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let pt = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen_range(0.0..0.01)];
        let (x, t) = ([pt[0], pt[1]], pt[2]);
        let s = strong_form(&case.params, pt);
        let f = case.body_force_at(x, t);
        let scale = 1.0 + s.force[0].abs().max(s.force[1].abs());
        worst = worst.max((f[0] - s.force[0]).abs() / scale);
        worst = worst.max((f[1] - s.force[1]).abs() / scale);
        worst = worst.max((case.source_at(x, t) - s.source).abs() / (1.0 + s.source.abs()));
        worst = worst.max((case.divergence(x, t) - s.div_u).abs());
        worst = worst.max((case.total_pressure(x, t) - s.xi).abs() / (1.0 + s.xi.abs()));
        let g = case.displacement_gradient(x, t);
        for c in 0..2 {
            for d in 0..2 {
                worst = worst.max((g[c][d] - s.grad_u[c][d]).abs());
            }
        }
    }
    worst
}
