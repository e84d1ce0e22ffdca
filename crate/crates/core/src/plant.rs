//! Error models driven by the learning controller.
//!
//! Both models share the uncertainty split used by desired compensation:
//! the lumped uncertainty `w(x, t)` is evaluated along the desired
//! trajectory to give the iteration-invariant parameter `θ(t) = w(x_d(t), t)`,
//! and the remainder `δw = w(x_d + e, t) - w(x_d, t)` is bounded in norm by a
//! user supplied `ρ(e, t)` that vanishes at `e = 0`.
//!
//! Model I is `ė = f(e, t) + g(e, t) (u + δw + θ)` with a Lyapunov
//! certificate for the nominal part. Model II is the linear special case
//! `ė = A e + b (u + δw + θ)` where `AᵀP + PA = -Q`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

pub type StateFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync>;
pub type TrajectoryFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
pub type GaugeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance on `AᵀP + PA + Q`.
pub const LYAPUNOV_EQ_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct UncertaintySpec {
    /// Lumped uncertainty `w(x, t)`, an m-vector.
    pub w: StateFn,
    /// Norm bound `ρ(e, t) >= ‖δw‖`.
    pub rho: ScalarFn,
}

impl UncertaintySpec {
    pub fn theta(&self, x_d: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.w)(x_d, t)
    }

    pub fn delta_w(&self, x_d: &DVector<f64>, e: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.w)(&(x_d + e), t) - (self.w)(x_d, t)
    }
}

/// Lyapunov function of the nominal Model I dynamics together with its
/// comparison functions. Validated by sampling only.
#[derive(Clone)]
pub struct LyapunovCertificate {
    pub value: ScalarFn,
    /// `∂V/∂t + L_f V`.
    pub dissipation: ScalarFn,
    /// `L_g V` as an m-vector.
    pub lgv: StateFn,
    pub alpha1: GaugeFn,
    pub alpha1_inv: GaugeFn,
    pub alpha2: GaugeFn,
    pub alpha: GaugeFn,
}

#[derive(Clone)]
pub struct ErrorModelI {
    n: usize,
    m: usize,
    f: StateFn,
    g: MatrixFn,
    x_d: TrajectoryFn,
    uncertainty: UncertaintySpec,
    certificate: LyapunovCertificate,
    horizon: f64,
}

impl ErrorModelI {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        f: StateFn,
        g: MatrixFn,
        x_d: TrajectoryFn,
        uncertainty: UncertaintySpec,
        certificate: LyapunovCertificate,
        horizon: f64,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        let model = ErrorModelI {
            n,
            m,
            f,
            g,
            x_d,
            uncertainty,
            certificate,
            horizon,
        };
        let zero = DVector::zeros(n);
        check_dim("x_d", n, (model.x_d)(0.0).len())?;
        check_dim("f", n, (model.f)(&zero, 0.0).len())?;
        let g0 = (model.g)(&zero, 0.0);
        check_dim("g rows", n, g0.nrows())?;
        check_dim("g columns", m, g0.ncols())?;
        check_dim(
            "w",
            m,
            model.uncertainty.theta(&(model.x_d)(0.0), 0.0).len(),
        )?;
        check_dim("LgV", m, (model.certificate.lgv)(&zero, 0.0).len())?;
        for t in probe_times(horizon) {
            if (model.f)(&zero, t).amax() != 0.0 {
                return Err(Error::Parameter {
                    name: "f",
                    reason: format!("origin is not an equilibrium at t = {t}"),
                });
            }
        }
        Ok(model)
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.certificate
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        self.horizon = horizon;
        Ok(self)
    }

    /// `f + g (u + δw + θ)`.
    pub fn rhs(&self, t: f64, e: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("error", self.n, e.len())?;
        check_dim("input", self.m, u.len())?;
        let x_d = (self.x_d)(t);
        let lumped = u + self.uncertainty.delta_w(&x_d, e, t) + self.uncertainty.theta(&x_d, t);
        Ok((self.f)(e, t) + (self.g)(e, t) * lumped)
    }
}

#[derive(Clone)]
pub struct ErrorModelII {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    x_d: TrajectoryFn,
    uncertainty: UncertaintySpec,
    horizon: f64,
    lambda_min: f64,
}

impl ErrorModelII {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        x_d: TrajectoryFn,
        uncertainty: UncertaintySpec,
        horizon: f64,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        check_dim("b rows", n, b.nrows())?;
        check_dim("P rows", n, p.nrows())?;
        check_dim("P columns", n, p.ncols())?;
        check_dim("Q rows", n, q.nrows())?;
        check_dim("Q columns", n, q.ncols())?;
        check_dim("x_d", n, x_d(0.0).len())?;
        check_dim("w", b.ncols(), uncertainty.theta(&x_d(0.0), 0.0).len())?;

        let residual = (a.transpose() * &p + &p * &a + &q).amax();
        if residual > LYAPUNOV_EQ_TOL {
            return Err(Error::Parameter {
                name: "P",
                reason: format!("AᵀP + PA + Q has max entry {residual:e}"),
            });
        }
        let lambda_min = min_eigenvalue("P", &p)?;
        min_eigenvalue("Q", &q)?;
        Ok(ErrorModelII {
            a,
            b,
            p,
            q,
            x_d,
            uncertainty,
            horizon,
            lambda_min,
        })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Smallest eigenvalue of P.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Max entry of `AᵀP + PA + Q`.
    pub fn lyapunov_residual(&self) -> f64 {
        (self.a.transpose() * &self.p + &self.p * &self.a + &self.q).amax()
    }

    /// `A e + b (u + δw + θ)`.
    pub fn rhs(&self, t: f64, e: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("error", self.a.nrows(), e.len())?;
        check_dim("input", self.b.ncols(), u.len())?;
        let x_d = (self.x_d)(t);
        let lumped = u + self.uncertainty.delta_w(&x_d, e, t) + self.uncertainty.theta(&x_d, t);
        Ok(&self.a * e + &self.b * lumped)
    }
}

/// Either error model, behind the surface the engine needs.
#[derive(Clone)]
pub enum Plant {
    I(ErrorModelI),
    II(ErrorModelII),
}

impl Plant {
    pub fn n(&self) -> usize {
        match self {
            Plant::I(m) => m.n,
            Plant::II(m) => m.a.nrows(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Plant::I(m) => m.m,
            Plant::II(m) => m.b.ncols(),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Plant::I(m) => m.horizon,
            Plant::II(m) => m.horizon,
        }
    }

    pub fn with_horizon(self, horizon: f64) -> Result<Self> {
        Ok(match self {
            Plant::I(m) => Plant::I(m.with_horizon(horizon)?),
            Plant::II(m) => Plant::II(m.with_horizon(horizon)?),
        })
    }

    fn parts(&self) -> (&TrajectoryFn, &UncertaintySpec) {
        match self {
            Plant::I(m) => (&m.x_d, &m.uncertainty),
            Plant::II(m) => (&m.x_d, &m.uncertainty),
        }
    }

    pub fn desired(&self, t: f64) -> DVector<f64> {
        (self.parts().0)(t)
    }

    pub fn rhs(&self, t: f64, e: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Plant::I(m) => m.rhs(t, e, u),
            Plant::II(m) => m.rhs(t, e, u),
        }
    }

    /// `θ(t) = w(x_d(t), t)`. Only monitors may look at this.
    pub fn theta_true(&self, t: f64) -> DVector<f64> {
        let (x_d, unc) = self.parts();
        unc.theta(&x_d(t), t)
    }

    pub fn delta_w(&self, t: f64, e: &DVector<f64>) -> DVector<f64> {
        let (x_d, unc) = self.parts();
        unc.delta_w(&x_d(t), e, t)
    }

    pub fn rho_bound(&self, t: f64, e: &DVector<f64>) -> f64 {
        (self.parts().1.rho)(e, t)
    }

    /// The quantity the barrier acts on: `V(e, t)` for Model I, `eᵀPe` for
    /// Model II.
    pub fn barrier_arg(&self, t: f64, e: &DVector<f64>) -> f64 {
        match self {
            Plant::I(m) => (m.certificate.value)(e, t),
            Plant::II(m) => e.dot(&(&m.p * e)),
        }
    }

    /// `L_g V` for Model I, `bᵀPe` for Model II.
    pub fn gradient(&self, t: f64, e: &DVector<f64>) -> DVector<f64> {
        match self {
            Plant::I(m) => (m.certificate.lgv)(e, t),
            Plant::II(m) => m.b.transpose() * (&m.p * e),
        }
    }

    /// Error-norm radius implied by `barrier_arg <= level`.
    pub fn error_radius(&self, level: f64) -> f64 {
        match self {
            Plant::I(m) => (m.certificate.alpha1_inv)(level),
            Plant::II(m) => (level / m.lambda_min).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCheck {
    pub samples: usize,
    /// Largest amount by which an inequality was exceeded (<= 0 when all hold).
    pub worst_excess: f64,
    pub holds: bool,
}

const SAMPLE_SLACK: f64 = 1e-12;

impl SampleCheck {
    fn new(samples: usize) -> Self {
        SampleCheck {
            samples,
            worst_excess: f64::NEG_INFINITY,
            holds: true,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let excess = lhs - rhs;
        self.worst_excess = self.worst_excess.max(excess);
        let allowed = SAMPLE_SLACK * (1.0 + rhs.abs().max(lhs.abs()));
        if excess.is_nan() || excess > allowed {
            self.holds = false;
        }
    }
}

fn sample_points(plant: &Plant, samples: usize, seed: u64) -> Vec<(DVector<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = plant.n();
    let horizon = plant.horizon();
    (0..samples)
        .map(|_| {
            let e = DVector::from_fn(n, |_, _| rng.random_range(-10.0..=10.0));
            let t = rng.random_range(0.0..=horizon);
            (e, t)
        })
        .collect()
}

/// Samples `‖δw‖ <= ρ` on random `(e, t)` with `e ∈ [-10, 10]^n`, plus
/// `ρ(0, t) = 0`.
pub fn check_uncertainty(plant: &Plant, samples: usize, seed: u64) -> SampleCheck {
    let mut check = SampleCheck::new(samples);
    let zero = DVector::zeros(plant.n());
    for (e, t) in sample_points(plant, samples, seed) {
        check.record(plant.delta_w(t, &e).norm(), plant.rho_bound(t, &e));
        check.record(plant.rho_bound(t, &zero).abs(), 0.0);
    }
    check
}

/// Samples the comparison bounds `α₁(‖e‖) <= V <= α₂(‖e‖)`, the dissipation
/// bound `∂V/∂t + L_f V <= -α(‖e‖)` and `V(0, t) = 0`.
pub fn check_certificate(model: &ErrorModelI, samples: usize, seed: u64) -> SampleCheck {
    let cert = &model.certificate;
    let plant = Plant::I(model.clone());
    let mut check = SampleCheck::new(samples);
    let zero = DVector::zeros(model.n);
    for (e, t) in sample_points(&plant, samples, seed) {
        let norm = e.norm();
        let v = (cert.value)(&e, t);
        check.record((cert.alpha1)(norm), v);
        check.record(v, (cert.alpha2)(norm));
        check.record((cert.dissipation)(&e, t), -(cert.alpha)(norm));
        check.record((cert.value)(&zero, t).abs(), 0.0);
    }
    check
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "T",
            reason: format!("horizon must be positive and finite, got {horizon}"),
        })
    }
}

fn probe_times(horizon: f64) -> impl Iterator<Item = f64> {
    (0..=16).map(move |i| horizon * i as f64 / 16.0)
}

fn min_eigenvalue(name: &'static str, m: &DMatrix<f64>) -> Result<f64> {
    let sym_err = (m - m.transpose()).amax();
    if sym_err > LYAPUNOV_EQ_TOL {
        return Err(Error::Parameter {
            name,
            reason: format!("matrix is not symmetric (asymmetry {sym_err:e})"),
        });
    }
    let lambda = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Error::Parameter {
            name,
            reason: format!("matrix is not positive definite (min eigenvalue {lambda:e})"),
        })
    }
}

/// Lipschitz gain of the built-in uncertainty `w(x, t) = 0.5 x`.
pub const BUILTIN_LIPSCHITZ: f64 = 0.5;

fn builtin_uncertainty() -> UncertaintySpec {
    UncertaintySpec {
        w: Arc::new(|x, _| x * BUILTIN_LIPSCHITZ),
        rho: Arc::new(|e, _| BUILTIN_LIPSCHITZ * e.norm()),
    }
}

fn builtin_trajectory() -> TrajectoryFn {
    Arc::new(|t: f64| DVector::from_element(1, t.sin()))
}

/// Scalar Model I: `f = -e`, `g = 1`, `w(x, t) = 0.5 x`, `x_d = sin t`,
/// `V = e²/2`, over `[0, 2π]`.
pub fn builtin_model_i() -> ErrorModelI {
    let certificate = LyapunovCertificate {
        value: Arc::new(|e, _| 0.5 * e.norm_squared()),
        dissipation: Arc::new(|e, _| -e.norm_squared()),
        lgv: Arc::new(|e, _| e.clone()),
        alpha1: Arc::new(|s| 0.5 * s * s),
        alpha1_inv: Arc::new(|v| (2.0 * v.max(0.0)).sqrt()),
        alpha2: Arc::new(|s| 0.5 * s * s),
        alpha: Arc::new(|s| s * s),
    };
    ErrorModelI::new(
        1,
        1,
        Arc::new(|e, _| -e),
        Arc::new(|_, _| DMatrix::identity(1, 1)),
        builtin_trajectory(),
        builtin_uncertainty(),
        certificate,
        2.0 * PI,
    )
    .expect("built-in Model I is consistent")
}

/// Scalar Model II: `A = -1`, `b = 1`, `P = 0.5`, `Q = 1`, same uncertainty
/// and trajectory as Model I.
pub fn builtin_model_ii() -> ErrorModelII {
    ErrorModelII::new(
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        builtin_trajectory(),
        builtin_uncertainty(),
        2.0 * PI,
    )
    .expect("built-in Model II is consistent")
}

pub fn builtin_examples() -> (ErrorModelI, ErrorModelII) {
    (builtin_model_i(), builtin_model_ii())
}

/// Looks up a built-in plant by its config name.
pub fn builtin(name: &str) -> Option<Plant> {
    match name {
        "scalar-I" => Some(Plant::I(builtin_model_i())),
        "scalar-II" => Some(Plant::II(builtin_model_ii())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn model_i_rhs_examples() {
        let m = builtin_model_i();
        assert_eq!(m.rhs(0.0, &s(0.0), &s(0.0)).unwrap()[0], 0.0);
        assert!(m.rhs(FRAC_PI_2, &s(0.0), &s(-0.5)).unwrap()[0].abs() < 1e-15);
        assert_eq!(m.rhs(0.0, &s(1.0), &s(0.0)).unwrap()[0], -0.5);
    }

    #[test]
    fn model_ii_rhs_examples() {
        let m = builtin_model_ii();
        assert_eq!(m.rhs(0.0, &s(0.0), &s(0.0)).unwrap()[0], 0.0);
        assert_eq!(m.rhs(0.0, &s(2.0), &s(0.0)).unwrap()[0], -1.0);
        assert_eq!(m.rhs(FRAC_PI_2, &s(0.0), &s(0.0)).unwrap()[0], 0.5);
    }

    #[test]
    fn rhs_rejects_wrong_dimensions() {
        let m = builtin_model_i();
        let two = DVector::zeros(2);
        assert!(matches!(
            m.rhs(0.0, &two, &s(0.0)),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            m.rhs(0.0, &s(0.0), &two),
            Err(Error::Dimension { .. })
        ));
        let m = builtin_model_ii();
        assert!(matches!(
            m.rhs(0.0, &s(0.0), &two),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn theta_and_rho_examples() {
        let p = Plant::I(builtin_model_i());
        assert_eq!(p.theta_true(0.0)[0], 0.0);
        assert_eq!(p.theta_true(FRAC_PI_2)[0], 0.5);
        assert!(p.theta_true(PI)[0].abs() < 1e-12);
        assert_eq!(p.rho_bound(0.3, &s(0.0)), 0.0);
        assert_eq!(p.rho_bound(0.3, &s(2.0)), 1.0);
        assert_eq!(p.rho_bound(0.3, &s(-3.0)), 1.5);
    }

    #[test]
    fn certificate_examples() {
        let m = builtin_model_i();
        let c = m.certificate();
        assert_eq!((c.value)(&s(0.0), 1.0), 0.0);
        assert_eq!((c.dissipation)(&s(1.0), 1.0), -1.0);
        assert!((c.dissipation)(&s(1.0), 1.0) <= -(c.alpha)(1.0));
        let m2 = builtin_model_ii();
        let lhs = m2.a().transpose() * m2.p() + m2.p() * m2.a();
        assert_eq!(lhs[(0, 0)], -1.0);
        assert_eq!(-m2.q()[(0, 0)], -1.0);
        assert!(m2.lyapunov_residual() <= LYAPUNOV_EQ_TOL);
        assert_eq!(m2.lambda_min(), 0.5);
    }

    #[test]
    fn sampled_inequalities_hold_for_builtins() {
        let (m1, m2) = builtin_examples();
        assert!(check_certificate(&m1, 10_000, 7).holds);
        assert!(check_uncertainty(&Plant::I(m1), 10_000, 8).holds);
        assert!(check_uncertainty(&Plant::II(m2), 10_000, 9).holds);
    }

    #[test]
    fn broken_certificate_is_caught() {
        let mut m = builtin_model_i();
        m.certificate.alpha = Arc::new(|s| 2.0 * s * s);
        assert!(!check_certificate(&m, 1000, 1).holds);
    }

    #[test]
    fn loose_rho_is_caught() {
        let mut m = builtin_model_ii();
        m.uncertainty.rho = Arc::new(|e, _| 0.25 * e.norm());
        assert!(!check_uncertainty(&Plant::II(m), 1000, 2).holds);
    }

    #[test]
    fn model_ii_rejects_bad_lyapunov_pair() {
        let err = ErrorModelII::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            builtin_trajectory(),
            builtin_uncertainty(),
            1.0,
        );
        assert!(matches!(err, Err(Error::Parameter { name: "P", .. })));
    }

    #[test]
    fn model_i_rejects_shifted_equilibrium() {
        let m = builtin_model_i();
        let err = ErrorModelI::new(
            1,
            1,
            Arc::new(|e, _| -e + DVector::from_element(1, 0.1)),
            m.g.clone(),
            m.x_d.clone(),
            m.uncertainty.clone(),
            m.certificate.clone(),
            1.0,
        );
        assert!(matches!(err, Err(Error::Parameter { name: "f", .. })));
    }

    #[test]
    fn builtin_lookup() {
        assert!(matches!(builtin("scalar-I"), Some(Plant::I(_))));
        assert!(matches!(builtin("scalar-II"), Some(Plant::II(_))));
        assert!(builtin("pendulum").is_none());
    }

    #[test]
    fn error_radius() {
        let p1 = Plant::I(builtin_model_i());
        assert!((p1.error_radius(0.5) - 1.0).abs() < 1e-15);
        let p2 = Plant::II(builtin_model_ii());
        assert!((p2.error_radius(2.0) - 2.0).abs() < 1e-15);
    }
}
