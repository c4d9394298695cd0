//! Double-pendulum benchmark dynamics: a two-link arm actuated at the first
//! joint, with the applied torque saturated and process noise entering
//! through the input channel.

use crate::SysError;

pub const STATE_DIM: usize = 4;

#[derive(Clone, Debug)]
pub struct PendulumParams {
    /// Inertial constants of the two links.
    pub theta: [f64; 5],
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Torque saturation limit (N·m).
    pub torque_limit: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            theta: [0.0308, 0.0106, 0.0095, 0.2097, 0.0634],
            gravity: 9.81,
            torque_limit: 5.0,
        }
    }
}

impl PendulumParams {
    /// Denominator θ̃(q₂) = θ₂(θ₁ + θ₂ + 2θ₃ cos q₂) of the acceleration
    /// equations; must stay away from zero over the operating envelope.
    pub fn theta_tilde(&self, q2: f64) -> f64 {
        let [t1, t2, t3, ..] = self.theta;
        t2 * (t1 + t2 + 2.0 * t3 * q2.cos())
    }

    pub fn saturate(&self, torque: f64) -> f64 {
        torque.clamp(-self.torque_limit, self.torque_limit)
    }
}

/// Continuous-time state derivative for state `x = (q₁, q₂, q̇₁, q̇₂)`,
/// commanded torque `u`, and input-channel process noise `v`. The effective
/// torque is `sat(u + v)`.
pub fn pendulum_deriv(
    params: &PendulumParams,
    x: &[f64; 4],
    u: f64,
    v: f64,
) -> Result<[f64; 4], SysError> {
    let [t1, t2, t3, t4, t5] = params.theta;
    let g = params.gravity;
    let (q1, q2, dq1, dq2) = (x[0], x[1], x[2], x[3]);
    let tt = params.theta_tilde(q2);
    if tt.abs() < 1e-12 {
        return Err(SysError::SingularConfiguration { q2 });
    }
    let tau = params.saturate(u + v);
    let (s2, c2) = q2.sin_cos();
    let c1 = q1.cos();
    let c12 = (q1 + q2).cos();

    let drive = tau + t3 * dq2 * dq2 * s2 + 2.0 * t3 * dq1 * dq2 * s2 - t4 * g * c1 - t5 * g * c12;
    let swing = t3 * dq1 * dq1 * s2 + t5 * g * c12;

    let ddq1 = (t2 * drive + swing * (t2 + t3 * c2)) / tt;
    let ddq2 = (-(t2 + t3 * c2) * drive - (t1 + t2 + 2.0 * t3 * c2) * swing) / tt;
    let out = [dq1, dq2, ddq1, ddq2];
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SysError::NonFinite);
    }
    Ok(out)
}

/// Shifted equilibrium of the pendulum. All equilibria with the arm
/// configuration near upright satisfy q₁ + q₂ = π/2 with the torque
/// balancing gravity on the first link.
#[derive(Clone, Debug)]
pub struct EquilibriumShift {
    pub x_star: [f64; 4],
    pub u_star: f64,
}

impl EquilibriumShift {
    pub fn at_first_angle(params: &PendulumParams, q1: f64) -> Self {
        let q2 = std::f64::consts::FRAC_PI_2 - q1;
        let u_star = params.theta[3] * params.gravity * q1.cos();
        Self {
            x_star: [q1, q2, 0.0, 0.0],
            u_star,
        }
    }

    /// The nominal upright-arm equilibrium `x* = (π/2, 0, 0, 0)`, `u* = 0`.
    pub fn nominal(params: &PendulumParams) -> Self {
        Self::at_first_angle(params, std::f64::consts::FRAC_PI_2)
    }
}
