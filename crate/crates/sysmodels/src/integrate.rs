//! Classical fixed-step Runge–Kutta integration with zero-order-hold inputs.

use crate::SysError;

/// One RK4 step of `ẋ = f(x, u, v)` with `u`, `v` held constant over `dt`.
pub fn rk4_step<const N: usize, F>(
    deriv: F,
    x: &[f64; N],
    u: f64,
    v: f64,
    dt: f64,
) -> Result<[f64; N], SysError>
where
    F: Fn(&[f64; N], f64, f64) -> Result<[f64; N], SysError>,
{
    assert!(dt > 0.0, "step size must be positive");
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = deriv(x, u, v)?;
    let k2 = deriv(&add(x, &k1, 0.5 * dt), u, v)?;
    let k3 = deriv(&add(x, &k2, 0.5 * dt), u, v)?;
    let k4 = deriv(&add(x, &k3, dt), u, v)?;
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() {
            return Err(SysError::NonFinite);
        }
    }
    Ok(out)
}
