//! LPV-to-LFT assembly and scheduling-parameter normalization.

use liftlearn::{InputMode, LiftedLpvModel};
use nalgebra::DMatrix;

use crate::system::{EventuallyPeriodicLft, LftTimeStep};
use crate::LftError;

type DMat = DMatrix<f64>;

#[derive(Clone, Debug)]
pub struct AssembleOptions {
    /// Include the lifted measurement-noise channels (with weighting matrix
    /// `w`); the synthesis view omits them.
    pub include_measurement_noise: bool,
    /// Measurement-noise weighting (n_lift × n_w); required when the noise
    /// channels are included.
    pub w: Option<DMat>,
    /// Bound on the disturbance energy, absorbed into the disturbance input
    /// matrices so the LMI conditions see a unit-norm disturbance.
    pub disturbance_bound: f64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            include_measurement_noise: false,
            w: None,
            disturbance_bound: 1.0,
        }
    }
}

/// Assemble the stationary LFT plant of a (normalized) lifted LPV model with
/// the given performance penalty weights on `[state; input]`.
pub fn assemble_lft(
    model: &LiftedLpvModel,
    penalties: &[f64],
    opts: &AssembleOptions,
) -> Result<EventuallyPeriodicLft, LftError> {
    let n = model.n_lift;
    let n_x = model.n;
    let n_u = model.n_u;
    let n_v = model.n_v;
    let p = model.p;
    if penalties.len() != n_x + n_u {
        return Err(LftError::Dimension {
            what: "penalty vector".into(),
            got: penalties.len(),
            want: n_x + n_u,
        });
    }
    let n_w = if opts.include_measurement_noise {
        let w = opts.w.as_ref().ok_or(LftError::MissingNoiseWeights)?;
        if w.nrows() != n {
            return Err(LftError::Dimension {
                what: "noise weight rows".into(),
                got: w.nrows(),
                want: n,
            });
        }
        w.ncols()
    } else {
        0
    };
    let n_d = n_w + n_v;
    let n_e = n_x + n_u;

    // Per-parameter repetition: each δ_i multiplies the model input channel.
    let (m_i, b1p_block, b2p_block) = match model.input_mode {
        InputMode::Separate => {
            // block input is ũ = [u; v]
            let mi = n_u + n_v;
            let mut b1 = DMat::zeros(mi, n_d);
            // rows [0_{n_u×n_w} 0; 0 I_{n_v}]
            for r in 0..n_v {
                b1[(n_u + r, n_w + r)] = 1.0;
            }
            let mut b2 = DMat::zeros(mi, n_u);
            for r in 0..n_u {
                b2[(r, r)] = 1.0;
            }
            (mi, b1, b2)
        }
        InputMode::Shared => {
            // block input is ū + v (requires n_u == n_v)
            if n_u != n_v {
                return Err(LftError::Dimension {
                    what: "shared-channel noise dim".into(),
                    got: n_v,
                    want: n_u,
                });
            }
            let mi = n_u;
            let mut b1 = DMat::zeros(mi, n_d);
            for r in 0..n_v {
                b1[(r, n_w + r)] = 1.0;
            }
            (mi, DMat::identity(mi, n_u), DMat::identity(mi, n_u))
        }
    };
    let m = p * m_i;

    let mut a_sp = DMat::zeros(n, m);
    for j in 0..p {
        a_sp.view_mut((0, j * m_i), (n, m_i)).copy_from(&model.b[j + 1]);
    }
    // Disturbance side of B₀ (and the control side).
    let (b_2s, b0_noise) = match model.input_mode {
        InputMode::Separate => {
            let b0 = &model.b[0];
            (
                b0.columns(0, n_u).into_owned(),
                b0.columns(n_u, n_v).into_owned(),
            )
        }
        InputMode::Shared => (model.b[0].clone(), model.b[0].clone()),
    };
    let mut b_1s = DMat::zeros(n, n_d);
    b_1s.view_mut((0, n_w), (n, n_v)).copy_from(&b0_noise);
    let mut b_1p = DMat::zeros(m, n_d);
    let mut b_2p = DMat::zeros(m, n_u);
    for j in 0..p {
        b_1p.view_mut((j * m_i, 0), (m_i, n_d)).copy_from(&b1p_block);
        b_2p.view_mut((j * m_i, 0), (m_i, n_u)).copy_from(&b2p_block);
    }

    // Performance output: diag(c) [x̂; u] with x̂ = [I 0] z.
    let mut c_1s = DMat::zeros(n_e, n);
    for r in 0..n_x {
        c_1s[(r, r)] = penalties[r];
    }
    let mut d_12 = DMat::zeros(n_e, n_u);
    for r in 0..n_u {
        d_12[(n_x + r, r)] = penalties[n_x + r];
    }

    let mut d_21 = DMat::zeros(n, n_d);
    if n_w > 0 {
        d_21.view_mut((0, 0), (n, n_w))
            .copy_from(opts.w.as_ref().expect("checked above"));
    }

    let s = opts.disturbance_bound;
    let step = LftTimeStep {
        a_ss: model.a.clone(),
        a_sp,
        a_ps: DMat::zeros(m, n),
        a_pp: DMat::zeros(m, m),
        b_1s: b_1s * s,
        b_1p: b_1p * s,
        b_2s,
        b_2p,
        c_1s,
        c_1p: DMat::zeros(n_e, m),
        c_2s: DMat::identity(n, n),
        c_2p: DMat::zeros(n, m),
        d_11: DMat::zeros(n_e, n_d),
        d_12,
        d_21: d_21 * s,
        block_sizes: vec![m_i; p],
    };
    EventuallyPeriodicLft::stationary(step)
}

/// Rescale the scheduling parameters of a model to the unit box: with
/// centers c_i and radii r_i from its stored bounds, `B₀ ← B₀ + Σ c_i B_i`,
/// `B_i ← r_i B_i`, the scheduling map becomes `(μ − c)/r`, and rate bounds
/// rescale by `1/r_i`. Zero-width parameters are dropped entirely.
pub fn normalize_params(model: &LiftedLpvModel) -> LiftedLpvModel {
    let mut out = model.clone();
    if model.p == 0 {
        return out;
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut new_b = vec![model.b[0].clone()];
    let mut new_bounds = Vec::new();
    let mut new_rates = Vec::new();
    for i in 0..model.p {
        let (lo, hi) = model.bounds[i];
        let c = 0.5 * (hi + lo);
        let r = 0.5 * (hi - lo);
        // Center absorbs into the nominal input matrix either way.
        new_b[0] += &model.b[i + 1] * c;
        if r > 0.0 {
            keep.push(i);
            new_b.push(&model.b[i + 1] * r);
            new_bounds.push((-1.0, 1.0));
            new_rates.push(model.rate_bounds.get(i).copied().unwrap_or(0.0) / r);
        }
    }
    // Scheduling network: rescale the (identity-activation) output layer to
    // (μ(z) − c) / r, keeping only surviving rows.
    let last = out.mu.weights.len() - 1;
    let old_w = model.mu.weights[last].clone();
    let old_b = model.mu.biases[last].clone();
    let mut w = DMat::zeros(keep.len(), old_w.ncols());
    let mut b = nalgebra::DVector::zeros(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        let (lo, hi) = model.bounds[i];
        let c = 0.5 * (hi + lo);
        let r = 0.5 * (hi - lo);
        for col in 0..old_w.ncols() {
            w[(row, col)] = old_w[(i, col)] / r;
        }
        b[row] = (old_b[i] - c) / r;
    }
    out.mu.weights[last] = w;
    out.mu.biases[last] = b;
    *out.mu.widths.last_mut().unwrap() = keep.len();
    out.p = keep.len();
    out.b = new_b;
    out.bounds = new_bounds;
    out.rate_bounds = new_rates;
    out
}
