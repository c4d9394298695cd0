//! Static state-feedback LTI synthesis for the nominal (scheduling-free)
//! plant, jointly solving for the certificate and the gain.

use lftcore::EventuallyPeriodicLft;
use nalgebra::DMatrix;
use numlin::{solve_lmi_program, AffineExpr, LmiProgram, VarShape};

use crate::statefb::inv_sqrt;
use crate::SynthError;
use initset::EllipsoidPair;

type DMat = DMatrix<f64>;

/// Initial-set handling for the LTI synthesis.
#[derive(Clone, Debug)]
pub enum InitialSet {
    /// Two-ellipsoid factor diag(P^{-1/2}, Q^{-1/2}) over the lifted state.
    Pair(EllipsoidPair),
    /// Single ellipsoid on the full state (the linearized-model case):
    /// factor P^{-1/2} with the second scalar fixed to zero.
    Single(DMat),
    /// Known zero initial state: the initial-set terms vanish.
    Zero,
}

#[derive(Clone, Debug)]
pub struct LtiSynthesis {
    pub gain: DMat,
    pub gamma: f64,
    pub r: DMat,
    pub b: f64,
    pub f11: f64,
    pub f12: f64,
    pub f2: f64,
}

/// Solve the LTI synthesis for a plant with no scheduling channels; returns
/// the state-feedback gain `u = K z` and the certified level.
pub fn synthesize_lti(
    plant: &EventuallyPeriodicLft,
    initial: &InitialSet,
    tol: f64,
) -> Result<LtiSynthesis, SynthError> {
    let s = plant.at(0);
    if s.m() != 0 {
        return Err(SynthError::Dimension {
            what: "scheduling channels in LTI synthesis".into(),
            got: s.m(),
            want: 0,
        });
    }
    let n = plant.n_state();
    let n_u = plant.n_u();
    let n_d = plant.n_d();
    let n_e = plant.n_e();

    let mut prog = LmiProgram::new();
    let eps = 1e-7;
    let r = prog.sym("R", n);
    let sgain = prog.var("S", VarShape::Rect(n_u, n));
    let b = prog.scalar("b");
    let f11 = prog.scalar("f11");
    let f12 = prog.scalar("f12");
    let f2 = prog.scalar("f2");
    prog.require_pd("R pd", prog.var_expr(r)).map_err(SynthError::Numlin)?;
    for (id, name) in [(b, "b"), (f11, "f11"), (f2, "f2")] {
        prog.require_scalar_min(&format!("{name} positive"), id, eps)
            .map_err(SynthError::Numlin)?;
    }

    // Main synthesis inequality, negated to a PSD block:
    //   [[-R, A R + B₂ S, B₁, 0],
    //    [ ∗, -R, 0, (C₁ R + D₁₂ S)ᵀ],
    //    [ ∗, ∗, -f₂ I, D₁₁ᵀ],
    //    [ ∗, ∗, ∗, -b I]] ≺ 0.
    {
        let r_e = prog.var_expr(r);
        let s_e = prog.var_expr(sgain);
        let ar_bs = r_e.lmul(&s.a_ss).add(&s_e.lmul(&s.b_2s));
        let cr_ds = r_e.lmul(&s.c_1s).add(&s_e.lmul(&s.d_12));
        let zero = |r: usize, c: usize| AffineExpr::zeros(r, c);
        let row1 = AffineExpr::hstack(&[
            r_e.neg(),
            ar_bs.clone(),
            AffineExpr::constant(s.b_1s.clone()),
            zero(n, n_e),
        ]);
        let row2 = AffineExpr::hstack(&[
            ar_bs.transpose(),
            prog.var_expr(r).neg(),
            zero(n, n_d),
            cr_ds.transpose(),
        ]);
        let row3 = AffineExpr::hstack(&[
            AffineExpr::constant(s.b_1s.transpose()),
            zero(n_d, n),
            prog.scalar_times_identity(f2, n_d).neg(),
            AffineExpr::constant(s.d_11.transpose()),
        ]);
        let row4 = AffineExpr::hstack(&[
            zero(n_e, n),
            cr_ds,
            AffineExpr::constant(s.d_11.clone()),
            prog.scalar_times_identity(b, n_e).neg(),
        ]);
        let block = AffineExpr::vstack(&[row1, row2, row3, row4]);
        prog.require_nd("synthesis", block).map_err(SynthError::Numlin)?;
    }

    // Initial-set condition.
    match initial {
        InitialSet::Pair(pair) => {
            let n_x = pair.p.nrows();
            let gamma_factor =
                numlin::block_diag(&[inv_sqrt(&pair.p)?, inv_sqrt(&pair.q)?]);
            prog.require_scalar_min("f12 positive", f12, eps)
                .map_err(SynthError::Numlin)?;
            let f1 = AffineExpr::block_diag(&[
                prog.scalar_times_identity(f11, n_x),
                prog.scalar_times_identity(f12, n - n_x),
            ]);
            let ge = AffineExpr::constant(gamma_factor);
            let block = AffineExpr::vstack(&[
                AffineExpr::hstack(&[f1, ge.transpose()]),
                AffineExpr::hstack(&[ge, prog.var_expr(r)]),
            ]);
            prog.require_pd("initial set", block).map_err(SynthError::Numlin)?;
        }
        InitialSet::Single(p_matrix) => {
            let gamma_factor = inv_sqrt(p_matrix)?;
            if gamma_factor.nrows() != n {
                return Err(SynthError::Dimension {
                    what: "single-ellipsoid factor".into(),
                    got: gamma_factor.nrows(),
                    want: n,
                });
            }
            let f1 = prog.scalar_times_identity(f11, n);
            let ge = AffineExpr::constant(gamma_factor);
            let block = AffineExpr::vstack(&[
                AffineExpr::hstack(&[f1, ge.transpose()]),
                AffineExpr::hstack(&[ge, prog.var_expr(r)]),
            ]);
            prog.require_pd("initial set", block).map_err(SynthError::Numlin)?;
            // f₁₂ plays no role; pin it at the margin.
            prog.require_scalar_min("f12 floor", f12, eps)
                .map_err(SynthError::Numlin)?;
        }
        InitialSet::Zero => {
            prog.require_scalar_min("f12 floor", f12, eps)
                .map_err(SynthError::Numlin)?;
        }
    }

    for id in [b, f11, f12, f2] {
        prog.objective_scalar(id, 0.5);
    }
    let sol = solve_lmi_program(&prog, tol).map_err(SynthError::Numlin)?;
    if !sol.is_optimal() {
        if sol.status == numlin::SolveStatus::Infeasible {
            return Err(SynthError::Infeasible {
                farkas_improving: sol.farkas.as_ref().map(|f| f.improving).unwrap_or(0.0),
            });
        }
        if sol.kkt.primal > 1e-6 {
            return Err(SynthError::SolverStalled {
                primal: sol.kkt.primal,
                gap: sol.kkt.gap,
            });
        }
    }
    let r_val = sol.value(&prog, r);
    let s_val = sol.value(&prog, sgain);
    let r_inv = r_val
        .clone()
        .try_inverse()
        .ok_or(SynthError::NotPositiveDefinite)?;
    let bv = sol.value_scalar(&prog, b);
    let f11v = sol.value_scalar(&prog, f11);
    let f12v = sol.value_scalar(&prog, f12);
    let f2v = sol.value_scalar(&prog, f2);
    Ok(LtiSynthesis {
        gain: &s_val * r_inv,
        gamma: 0.5 * (bv + f11v + f12v + f2v) * (1.0 + 1e-6),
        r: r_val,
        b: bv,
        f11: f11v,
        f12: f12v,
        f2: f2v,
    })
}
