//! Jacobian linearization with zero-order-hold discretization, and a
//! fixed-point discrete Riccati solver for the LQR data-generation
//! controller.

use nalgebra::DMatrix;

use crate::SysError;

type DMat = DMatrix<f64>;

/// Central-difference Jacobians of a continuous-time vector field at
/// `(x*, u*)`, discretized by zero-order hold with a truncated
/// matrix-exponential series (tolerance 1e-12).
pub fn jacobian_linearize<const N: usize, F>(
    deriv: F,
    x_star: &[f64; N],
    u_star: f64,
    dt: f64,
) -> Result<(DMat, DMat), SysError>
where
    F: Fn(&[f64; N], f64, f64) -> Result<[f64; N], SysError>,
{
    let h = 1e-6;
    let mut a_c = DMat::zeros(N, N);
    for j in 0..N {
        let mut xp = *x_star;
        let mut xm = *x_star;
        xp[j] += h;
        xm[j] -= h;
        let fp = deriv(&xp, u_star, 0.0)?;
        let fm = deriv(&xm, u_star, 0.0)?;
        for i in 0..N {
            let d = (fp[i] - fm[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(SysError::NonFinite);
            }
            a_c[(i, j)] = d;
        }
    }
    let fp = deriv(x_star, u_star + h, 0.0)?;
    let fm = deriv(x_star, u_star - h, 0.0)?;
    let mut b_c = DMat::zeros(N, 1);
    for i in 0..N {
        b_c[(i, 0)] = (fp[i] - fm[i]) / (2.0 * h);
    }
    Ok(zoh_discretize(&a_c, &b_c, dt))
}

/// `(e^{A dt}, ∫₀^dt e^{A s} ds · B)` via truncated series.
pub fn zoh_discretize(a_c: &DMat, b_c: &DMat, dt: f64) -> (DMat, DMat) {
    let n = a_c.nrows();
    let mut a_d = DMat::identity(n, n);
    // Integral term starts at dt·I.
    let mut int = DMat::identity(n, n) * dt;
    let mut term = DMat::identity(n, n);
    let mut k = 1usize;
    loop {
        term = a_c * &term * (dt / k as f64);
        a_d += &term;
        int += &term * (dt / (k + 1) as f64);
        if term.amax() < 1e-12 || k > 60 {
            break;
        }
        k += 1;
    }
    (a_d, &int * b_c)
}

/// Discrete-algebraic-Riccati fixed point for `(A, B, Qc, Rc)`; returns the
/// state-feedback gain `K` with `u = -K x` and spectral radius of `A - B K`
/// below one.
pub fn dare_lqr(
    a: &DMat,
    b: &DMat,
    qc: &DMat,
    rc: &DMat,
    tol: f64,
    max_iter: usize,
) -> Result<DMat, SysError> {
    let mut p = qc.clone();
    for _ in 0..max_iter {
        let btp = b.transpose() * &p;
        let gain_denom = rc + &btp * b;
        let inv = gain_denom
            .clone()
            .try_inverse()
            .ok_or(SysError::RiccatiDiverged)?;
        let next =
            a.transpose() * &p * a - a.transpose() * &p * b * &inv * &btp * a + qc;
        let delta = (&next - &p).amax();
        let scale = 1.0 + p.amax();
        p = next;
        if delta < tol * scale {
            let btp = b.transpose() * &p;
            let inv = (rc + &btp * b)
                .try_inverse()
                .ok_or(SysError::RiccatiDiverged)?;
            return Ok(inv * btp * a);
        }
    }
    Err(SysError::RiccatiDiverged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pendulum::{pendulum_deriv, EquilibriumShift, PendulumParams};
    use approx::assert_relative_eq;
    use numlin::spectral_radius;

    #[test]
    fn scalar_dare_matches_golden_ratio() {
        let one = DMat::from_element(1, 1, 1.0);
        let k = dare_lqr(&one, &one, &one, &one, 1e-14, 500).unwrap();
        let p = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_relative_eq!(k[(0, 0)], p / (1.0 + p), max_relative = 1e-10);
    }

    #[test]
    fn zero_dynamics_needs_no_feedback() {
        let a = DMat::zeros(1, 1);
        let b = DMat::from_element(1, 1, 1.0);
        let q = DMat::from_element(1, 1, 3.0);
        let r = DMat::from_element(1, 1, 1.0);
        let k = dare_lqr(&a, &b, &q, &r, 1e-14, 500).unwrap();
        assert_relative_eq!(k[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_linearization_matches_exponential() {
        let lam = -0.7;
        let (a, _b) = jacobian_linearize(
            |x: &[f64; 1], u, _| Ok([lam * x[0] + u]),
            &[0.0],
            0.0,
            0.02,
        )
        .unwrap();
        assert_relative_eq!(a[(0, 0)], (lam * 0.02f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn input_matrix_scales_linearly_for_small_steps() {
        let lam = 0.3;
        let bval = |dt: f64| {
            let (_, b) = jacobian_linearize(
                |x: &[f64; 1], u, _| Ok([lam * x[0] + 2.0 * u]),
                &[0.0],
                0.0,
                dt,
            )
            .unwrap();
            b[(0, 0)]
        };
        let r = bval(2e-4) / bval(1e-4);
        assert_relative_eq!(r, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn pendulum_linearization_has_two_unstable_modes() {
        let p = PendulumParams::default();
        let eq = EquilibriumShift::nominal(&p);
        let (a, b) =
            jacobian_linearize(|s, u, v| pendulum_deriv(&p, s, u, v), &eq.x_star, eq.u_star, 0.02)
                .unwrap();
        let unstable = a
            .clone()
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.norm() > 1.0)
            .count();
        assert_eq!(unstable, 2, "upright-arm equilibrium should be a saddle");

        let qc = DMat::identity(4, 4);
        let rc = DMat::identity(1, 1);
        let k = dare_lqr(&a, &b, &qc, &rc, 1e-12, 10_000).unwrap();
        let acl = &a - &b * &k;
        assert!(spectral_radius(&acl) < 1.0);
    }
}
