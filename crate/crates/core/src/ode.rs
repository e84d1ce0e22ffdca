//! Classical fixed-step Runge-Kutta integration.

use nalgebra::DVector;

/// One RK4 step of size `h` from `(t, y)`. The right-hand side may fail, in
/// which case the step is abandoned and the error returned.
pub fn rk4_step<E, F>(t: f64, y: &DVector<f64>, h: f64, mut rhs: F) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let half = 0.5 * h;
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + half, &(y + &k1 * half))?;
    let k3 = rhs(t + half, &(y + &k2 * half))?;
    let k4 = rhs(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}
