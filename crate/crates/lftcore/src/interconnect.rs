//! Plant/controller interconnection and exact LFT simulation.

use nalgebra::{DMatrix, DVector};

use crate::system::{EventuallyPeriodicLft, LftTimeStep, StaticNslpvController};
use crate::LftError;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// Closed-loop system together with the per-step channel permutation that
/// interleaves plant and controller uncertainty blocks per parameter
/// (plant block first), recorded for traceability.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub system: EventuallyPeriodicLft,
    /// `perm[k][new_channel] = old_channel` in the stacked
    /// (plant, controller) ordering.
    pub perm: Vec<Vec<usize>>,
}

fn permutation_matrix(perm: &[usize]) -> DMat {
    let n = perm.len();
    let mut p = DMat::zeros(n, n);
    for (new, &old) in perm.iter().enumerate() {
        p[(new, old)] = 1.0;
    }
    p
}

/// Close the measurement/control loop between a plant and a static
/// scheduled controller. The closed loop keeps the plant state, has no
/// control or measurement channels left, and its uncertainty channels are
/// the per-parameter interleaving of plant and controller channels.
pub fn close_loop(
    plant: &EventuallyPeriodicLft,
    ctrl: &StaticNslpvController,
) -> Result<ClosedLoop, LftError> {
    if ctrl.n_y() != plant.n_y() || ctrl.n_u() != plant.n_u() {
        return Err(LftError::Dimension {
            what: "controller io".into(),
            got: ctrl.n_y(),
            want: plant.n_y(),
        });
    }
    let h = plant.h.max(ctrl.h_bar);
    let q = plant.q;
    let mut steps = Vec::with_capacity(h + q);
    let mut perms = Vec::with_capacity(h + q);
    for k in 0..h + q {
        let g = plant.at(k);
        let c = ctrl.at(k);
        if c.block_sizes.len() != g.block_sizes.len() {
            return Err(LftError::Dimension {
                what: "controller parameter count".into(),
                got: c.block_sizes.len(),
                want: g.block_sizes.len(),
            });
        }
        let m_g = g.m();
        let m_c = c.m();

        // Static law u = C_p ϑc + D ŷ, ŷ = C2s z + C2p ϑ + D21 d (no direct
        // feedthrough from u to ŷ by construction).
        let dc = &c.d;
        let a_m = &g.a_ss + &g.b_2s * dc * &g.c_2s;
        let b_m1_plant = &g.a_sp + &g.b_2s * dc * &g.c_2p;
        let b_m1_ctrl = &g.b_2s * &c.c_p;
        let b_m2 = &g.b_1s + &g.b_2s * dc * &g.d_21;

        let phi_plant_state = &g.a_ps + &g.b_2p * dc * &g.c_2s;
        let phi_plant_plant = &g.a_pp + &g.b_2p * dc * &g.c_2p;
        let phi_plant_ctrl = &g.b_2p * &c.c_p;
        let phi_plant_d = &g.b_1p + &g.b_2p * dc * &g.d_21;

        let phi_ctrl_state = &c.b_p * &g.c_2s;
        let phi_ctrl_plant = &c.b_p * &g.c_2p;
        let phi_ctrl_ctrl = c.a_pp.clone();
        let phi_ctrl_d = &c.b_p * &g.d_21;

        let e_state = &g.c_1s + &g.d_12 * dc * &g.c_2s;
        let e_plant = &g.c_1p + &g.d_12 * dc * &g.c_2p;
        let e_ctrl = &g.d_12 * &c.c_p;
        let e_d = &g.d_11 + &g.d_12 * dc * &g.d_21;

        // Stacked (plant, controller) uncertainty channels.
        let c_m1 = numlin::vstack(&[phi_plant_state, phi_ctrl_state]);
        let d_m11 = numlin::vstack(&[
            numlin::hstack(&[phi_plant_plant, phi_plant_ctrl]),
            numlin::hstack(&[phi_ctrl_plant, phi_ctrl_ctrl]),
        ]);
        let d_m12 = numlin::vstack(&[phi_plant_d, phi_ctrl_d]);
        let b_m1 = numlin::hstack(&[b_m1_plant, b_m1_ctrl]);

        // Interleave per parameter: plant block i, then controller block i.
        let mut perm = Vec::with_capacity(m_g + m_c);
        let mut off_g = 0usize;
        let mut off_c = 0usize;
        let mut sizes = Vec::new();
        for i in 0..g.block_sizes.len() {
            for r in 0..g.block_sizes[i] {
                perm.push(off_g + r);
            }
            for r in 0..c.block_sizes[i] {
                perm.push(m_g + off_c + r);
            }
            off_g += g.block_sizes[i];
            off_c += c.block_sizes[i];
            sizes.push(g.block_sizes[i] + c.block_sizes[i]);
        }
        let pm = permutation_matrix(&perm);

        let step = LftTimeStep {
            a_ss: a_m,
            a_sp: b_m1 * pm.transpose(),
            a_ps: &pm * c_m1,
            a_pp: &pm * d_m11 * pm.transpose(),
            b_1s: b_m2,
            b_1p: &pm * d_m12,
            b_2s: DMat::zeros(plant.n_state(), 0),
            b_2p: DMat::zeros(m_g + m_c, 0),
            c_1s: e_state,
            c_1p: numlin::hstack(&[e_plant, e_ctrl]) * pm.transpose(),
            c_2s: DMat::zeros(0, plant.n_state()),
            c_2p: DMat::zeros(0, m_g + m_c),
            d_11: e_d,
            d_12: DMat::zeros(plant.n_e(), 0),
            d_21: DMat::zeros(0, plant.n_d()),
            block_sizes: sizes,
        };
        steps.push(step);
        perms.push(perm);
    }
    Ok(ClosedLoop {
        system: EventuallyPeriodicLft::new(h, q, steps)?,
        perm: perms,
    })
}

/// Repeated-scalar uncertainty matrix `diag(δ_i I_{m_i})`.
pub fn delta_matrix(block_sizes: &[usize], delta: &DVec) -> DMat {
    let m: usize = block_sizes.iter().sum();
    let mut diag = DVec::zeros(m);
    let mut off = 0;
    for (i, &sz) in block_sizes.iter().enumerate() {
        for r in 0..sz {
            diag[off + r] = delta[i];
        }
        off += sz;
    }
    DMat::from_diagonal(&diag)
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub states: Vec<DVec>,
    pub perf: Vec<DVec>,
    pub meas: Vec<DVec>,
}

/// Exact simulation of the LFT recursion under given scheduling, disturbance
/// and control trajectories. Scheduling values index the scalar parameters;
/// the uncertainty loop is solved exactly at each step.
pub fn simulate_lft(
    sys: &EventuallyPeriodicLft,
    deltas: &[DVec],
    disturbances: &[DVec],
    controls: Option<&[DVec]>,
    x0: &DVec,
) -> Result<SimOutput, LftError> {
    let horizon = deltas.len().min(disturbances.len());
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut perf = Vec::with_capacity(horizon);
    let mut meas = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let s = sys.at(k);
        let m = s.m();
        let zero_u = DVec::zeros(sys.n_u());
        let u = controls.map(|c| &c[k]).unwrap_or(&zero_u);
        let d = &disturbances[k];
        let theta = if m > 0 {
            let dm = delta_matrix(&s.block_sizes, &deltas[k]);
            let rhs = &dm * (&s.a_ps * &x + &s.b_1p * d + &s.b_2p * u);
            let gram = DMat::identity(m, m) - &dm * &s.a_pp;
            gram.lu()
                .solve(&rhs)
                .ok_or(LftError::IllPosed)?
        } else {
            DVec::zeros(0)
        };
        let e = &s.c_1s * &x + &s.c_1p * &theta + &s.d_11 * d + &s.d_12 * u;
        let y = &s.c_2s * &x + &s.c_2p * &theta + &s.d_21 * d;
        x = &s.a_ss * &x + &s.a_sp * &theta + &s.b_1s * d + &s.b_2s * u;
        states.push(x.clone());
        perf.push(e);
        meas.push(y);
    }
    Ok(SimOutput {
        states,
        perf,
        meas,
    })
}
