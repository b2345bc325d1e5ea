//! Material and time-stepping parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("Poisson ratio nu must satisfy 0 < nu < 0.5 (got {0})")]
    PoissonRatio(f64),
    #[error("Young's modulus E must be positive (got {0})")]
    YoungsModulus(f64),
    #[error("storage coefficient c0 must be nonnegative (got {0})")]
    Storage(f64),
    #[error("hydraulic conductivity K must be positive (got {0})")]
    Conductivity(f64),
    #[error("time step dt must be positive (got {0})")]
    TimeStep(f64),
    #[error("terminal time T must be positive (got {0})")]
    FinalTime(f64),
    #[error("Biot-Willis constant alpha must be finite (got {0})")]
    Alpha(f64),
    #[error("unknown preset {0:?} (expected nu03, nu0499, lowk or c0zero)")]
    UnknownPreset(String),
}

/// Physical and discretization parameters. The Lamé constants are derived
/// from `E` and `nu` at construction and never set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub youngs: f64,
    pub poisson: f64,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub c0: f64,
    pub conductivity: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl PhysParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        youngs: f64,
        poisson: f64,
        alpha: f64,
        c0: f64,
        conductivity: f64,
        dt: f64,
        t_final: f64,
    ) -> Result<Self, ParamError> {
        if !(poisson > 0.0 && poisson < 0.5) {
            return Err(ParamError::PoissonRatio(poisson));
        }
        if !(youngs > 0.0 && youngs.is_finite()) {
            return Err(ParamError::YoungsModulus(youngs));
        }
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(ParamError::Storage(c0));
        }
        if !(conductivity > 0.0 && conductivity.is_finite()) {
            return Err(ParamError::Conductivity(conductivity));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ParamError::TimeStep(dt));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(ParamError::FinalTime(t_final));
        }
        if !alpha.is_finite() {
            return Err(ParamError::Alpha(alpha));
        }
        Ok(Self {
            youngs,
            poisson,
            mu: youngs / (2.0 * (1.0 + poisson)),
            lambda: youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)),
            alpha,
            c0,
            conductivity,
            dt,
            t_final,
        })
    }

    /// Preset material with `E = 1`, `alpha = 1`.
    pub fn from_preset(preset: Preset, dt: f64, t_final: f64) -> Result<Self, ParamError> {
        let (nu, c0, k) = preset.values();
        Self::new(1.0, nu, 1.0, c0, k, dt, t_final)
    }

    /// Number of time steps to reach `t_final`.
    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    /// Per-iteration contraction bound of the iterative scheme,
    /// `(alpha^2/lambda) / (c0 + alpha^2/lambda)`.
    pub fn contraction_factor(&self) -> f64 {
        let a = self.alpha * self.alpha / self.lambda;
        a / (self.c0 + a)
    }

    /// Coefficient of the pressure mass matrix, `c0 + alpha^2/lambda`.
    pub fn storage_total(&self) -> f64 {
        self.c0 + self.alpha * self.alpha / self.lambda
    }
}

/// Named parameter sets `(nu, c0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Nu03,
    Nu0499,
    LowK,
    C0Zero,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::Nu03, Self::Nu0499, Self::LowK, Self::C0Zero];

    pub fn values(self) -> (f64, f64, f64) {
        match self {
            Self::Nu03 => (0.3, 1.0, 1.0),
            Self::Nu0499 => (0.499, 1.0, 1.0),
            Self::LowK => (0.3, 1.0, 1e-6),
            Self::C0Zero => (0.3, 0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nu03 => "nu03",
            Self::Nu0499 => "nu0499",
            Self::LowK => "lowk",
            Self::C0Zero => "c0zero",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ParamError::UnknownPreset(s.to_string()))
    }
}
