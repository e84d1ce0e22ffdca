//! Learning signal `z_k` and the robust part of the control input.
//!
//! The input is always `u = -θ̂ - s` where `s` is either the unit-vector
//! switching term `ρ z/‖z‖` or its smoothed version
//! `ρ μ/(‖μ‖ + ε)` with `μ = ρ z`.

use nalgebra::DVector;

use crate::barrier::DomainError;
use crate::error::{check_dim, Error, Result};

/// `‖z‖` below this takes the zero branch of the switching term.
pub const ZERO_BRANCH: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustMode {
    Discontinuous,
    Continuous { eps: f64 },
}

/// Which convergence scheme the loop follows.
///
/// `One` is the exact-convergence scheme (switching robust term, `FII`
/// barrier); `Two` is the residual-tolerant scheme whose gain is the
/// derivative of `(b + 1) V / (b - V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub mode: RobustMode,
    /// Barrier bound: `b_V` for Model I, `b_e²` for Model II.
    pub bound: f64,
    pub gamma: f64,
    pub theta_bar: f64,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("bound", self.bound)?;
        positive("gamma", self.gamma)?;
        positive("theta_bar", self.theta_bar)?;
        if let RobustMode::Continuous { eps } = self.mode {
            positive("eps", eps)?;
        }
        Ok(())
    }

    /// Residual allowed per iteration in the `ΔL_k` inequality: `εT` in
    /// continuous mode, zero otherwise.
    pub fn residual(&self, horizon: f64) -> f64 {
        match self.mode {
            RobustMode::Discontinuous => 0.0,
            RobustMode::Continuous { eps } => eps * horizon,
        }
    }
}

fn gap(x: f64, bound: f64) -> std::result::Result<f64, DomainError> {
    if x >= 0.0 && x < bound {
        Ok(bound - x)
    } else {
        Err(DomainError { value: x, bound })
    }
}

/// `b² / (b - V)² · L_gV`.
pub fn z_model1_thm1(v: f64, lgv: &DVector<f64>, bound: f64) -> Result<DVector<f64>> {
    let g = gap(v, bound)?;
    Ok(lgv * (bound * bound / (g * g)))
}

/// `b_e² · bᵀPe / (b_e² - eᵀPe)²`, with `bound = b_e²` and `epb = bᵀPe`.
pub fn z_model2_thm1(epe: f64, epb: &DVector<f64>, bound: f64) -> Result<DVector<f64>> {
    let g = gap(epe, bound)?;
    Ok(epb * (bound / (g * g)))
}

/// `b (b + 1) / (b - x)² · grad`, shared by both models.
pub fn z_thm2(x: f64, grad: &DVector<f64>, bound: f64) -> Result<DVector<f64>> {
    let g = gap(x, bound)?;
    Ok(grad * (bound * (bound + 1.0) / (g * g)))
}

pub fn robust_disc(z: &DVector<f64>, rho: f64) -> DVector<f64> {
    let norm = z.norm();
    if norm < ZERO_BRANCH {
        DVector::zeros(z.len())
    } else {
        z * (rho / norm)
    }
}

pub fn robust_cont(z: &DVector<f64>, rho: f64, eps: f64) -> DVector<f64> {
    let mu = z * rho;
    let scale = rho / (mu.norm() + eps);
    mu * scale
}

pub fn robust(mode: RobustMode, z: &DVector<f64>, rho: f64) -> DVector<f64> {
    match mode {
        RobustMode::Discontinuous => robust_disc(z, rho),
        RobustMode::Continuous { eps } => robust_cont(z, rho, eps),
    }
}

/// `u = -θ̂ - s`.
pub fn compose(theta_hat: &DVector<f64>, s: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("robust term", theta_hat.len(), s.len())?;
    Ok(-(theta_hat + s))
}
