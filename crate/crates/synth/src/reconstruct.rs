//! Controller reconstruction from a synthesis certificate: one feasibility
//! LMI per step in the controller blocks, solved with a margin and a norm
//! cap, with a retry ladder that re-centers the certificate when the
//! boundary optimum is numerically too fragile.

use lftcore::{ControllerStep, EventuallyPeriodicLft, StaticNslpvController};
use nalgebra::DMatrix;
use numlin::{psd_sqrt, solve_lmi_program, AffineExpr, LmiProgram, VarShape};

use crate::statefb::{synthesize_with_factor, SynthOptions, SynthesisCertificate};
use crate::SynthError;

type DMat = DMatrix<f64>;

#[derive(Clone, Debug)]
pub struct ReconstructOptions {
    pub rank_tol: f64,
    pub tol: f64,
    /// Retry ladder: objective inflation paired with the strictness margin
    /// used to re-solve the synthesis. Boundary optima leave the controller
    /// inequality a sliver, so each rung trades a little level for margin.
    pub retry_ladder: Vec<(f64, f64)>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            tol: 1e-7,
            retry_ladder: vec![
                (1.001, 1e-6),
                (1.01, 1e-5),
                (1.05, 1e-4),
                (1.1, 1e-3),
            ],
        }
    }
}

/// Per-step controller data derived from the certificate.
struct StepData {
    r0_k: DMat,
    r0_next: DMat,
    rbar: DMat,
    sbar: DMat,
    ebar: DMat,
    mc_blocks: Vec<usize>,
}

fn step_data(
    cert: &SynthesisCertificate,
    k: usize,
    rank_tol: f64,
) -> Result<StepData, SynthError> {
    let r0_k = cert.r0[k].clone();
    let r0_next = cert.r0[(k + 1).min(cert.h_bar)].clone();
    let rbar = numlin::block_diag(&cert.r_blocks[k]);
    let sbar = numlin::block_diag(&cert.s_blocks[k]);
    let mut mc_blocks = Vec::new();
    let mut e_blocks = Vec::new();
    for (r_i, s_i) in cert.r_blocks[k].iter().zip(&cert.s_blocks[k]) {
        let s_inv = s_i
            .clone()
            .try_inverse()
            .ok_or(SynthError::NotPositiveDefinite)?;
        let gap = r_i - &s_inv;
        let e_i = psd_sqrt(&gap, rank_tol).map_err(SynthError::Numlin)?;
        mc_blocks.push(e_i.ncols());
        e_blocks.push(e_i);
    }
    // Ē is block diagonal per parameter, matching the channel ordering.
    let m: usize = cert.r_blocks[k].iter().map(|r| r.nrows()).sum();
    let mc: usize = mc_blocks.iter().sum();
    let mut ebar = DMat::zeros(m, mc);
    let (mut ro, mut co) = (0, 0);
    for e_i in &e_blocks {
        ebar.view_mut((ro, co), (e_i.nrows(), e_i.ncols())).copy_from(e_i);
        ro += e_i.nrows();
        co += e_i.ncols();
    }
    Ok(StepData {
        r0_k,
        r0_next,
        rbar,
        sbar,
        ebar,
        mc_blocks,
    })
}

/// Solve the per-step reconstruction LMI for the controller blocks.
fn solve_step(
    plant: &EventuallyPeriodicLft,
    cert: &SynthesisCertificate,
    data: &StepData,
    opts: &ReconstructOptions,
) -> Result<ControllerStep, SynthError> {
    let s = plant.at(0);
    let n = plant.n_state();
    let m = s.m();
    let n_u = plant.n_u();
    let n_d = plant.n_d();
    let n_e = plant.n_e();
    let mc: usize = data.mc_blocks.iter().sum();
    let b = cert.b;
    let f2 = cert.f2;

    // Column layout of the quadratic form:
    // (N, m, mc, N, m, mc, n_d, n_e).
    let dims = [n, m, mc, n, m, mc, n_d, n_e];
    let total: usize = dims.iter().sum();
    let offset = |idx: usize| -> usize { dims[..idx].iter().sum() };

    let place = |rows: &DMat, block: usize, row0: usize, target: &mut DMat| {
        target
            .view_mut((row0, offset(block)), (rows.nrows(), rows.ncols()))
            .copy_from(rows);
    };

    // Left factor multiplying the controller blocks.
    let mut p_mat = DMat::zeros(mc + n_u, total);
    place(&DMat::identity(mc, mc), 2, 0, &mut p_mat);
    place(&s.b_2s.transpose(), 0, mc, &mut p_mat);
    place(&s.b_2p.transpose(), 1, mc, &mut p_mat);
    place(&(s.d_12.transpose() / b.sqrt()), 7, mc, &mut p_mat);

    // Right factor.
    let mut q_mat = DMat::zeros(mc + n, total);
    place(&DMat::identity(mc, mc), 5, 0, &mut q_mat);
    place(&DMat::identity(n, n), 3, mc, &mut q_mat);

    // Constant block of the inequality.
    let r0_inv = data
        .r0_k
        .clone()
        .try_inverse()
        .ok_or(SynthError::NotPositiveDefinite)?;
    let mut h = DMat::zeros(total, total);
    let mut set = |bi: usize, bj: usize, mat: &DMat| {
        let (r0, c0) = (offset(bi), offset(bj));
        h.view_mut((r0, c0), (mat.nrows(), mat.ncols())).copy_from(mat);
        if bi != bj {
            let t = mat.transpose();
            h.view_mut((c0, r0), (t.nrows(), t.ncols())).copy_from(&t);
        }
    };
    set(0, 0, &(-&data.r0_next));
    set(1, 1, &(-&data.rbar));
    set(1, 2, &(-&data.ebar));
    set(0, 3, &s.a_ss);
    set(0, 4, &s.a_sp);
    set(1, 3, &s.a_ps);
    set(1, 4, &s.a_pp);
    set(0, 6, &(&s.b_1s / f2.sqrt()));
    set(1, 6, &(&s.b_1p / f2.sqrt()));
    set(2, 2, &(-DMat::identity(mc, mc)));
    set(3, 3, &(-&r0_inv));
    set(4, 4, &(-&data.sbar));
    set(4, 5, &(&data.sbar * &data.ebar));
    set(3, 7, &(s.c_1s.transpose() / b.sqrt()));
    set(4, 7, &(s.c_1p.transpose() / b.sqrt()));
    set(5, 5, &(-(DMat::identity(mc, mc) + data.ebar.transpose() * &data.sbar * &data.ebar)));
    set(6, 6, &(-DMat::identity(n_d, n_d)));
    set(6, 7, &(s.d_11.transpose() / (b * f2).sqrt()));
    set(7, 7, &(-DMat::identity(n_e, n_e)));

    // Max-margin program in the controller blocks J: maximize the slack of
    // the matrix inequality under a generous fixed norm cap, then verify the
    // result by direct eigenvalue evaluation.
    let mut prog = LmiProgram::new();
    let j_var = prog.var("J", VarShape::Rect(mc + n_u, mc + n));
    let slack = prog.scalar("slack");
    let j_expr = prog.var_expr(j_var);
    let sym_part = j_expr
        .lmul(&p_mat.transpose())
        .rmul(&q_mat)
        .plus_transpose();
    let scale = h.amax().max(1.0);
    let lhs = AffineExpr::constant(h.clone())
        .add(&sym_part)
        .add(&prog.scalar_times_identity(slack, total));
    prog.require_nsd("reconstruction", lhs).map_err(SynthError::Numlin)?;
    prog.require_scalar_min("slack nonnegative", slack, 0.0)
        .map_err(SynthError::Numlin)?;
    // Fixed generous gain cap keeps the maximization bounded.
    let cap = 1e5 * scale;
    let bound = AffineExpr::vstack(&[
        AffineExpr::hstack(&[
            AffineExpr::constant(DMat::identity(mc + n_u, mc + n_u) * cap),
            prog.var_expr(j_var),
        ]),
        AffineExpr::hstack(&[
            prog.var_expr(j_var).transpose(),
            AffineExpr::constant(DMat::identity(mc + n, mc + n) * cap),
        ]),
    ]);
    prog.require_psd("gain bound", bound).map_err(SynthError::Numlin)?;
    prog.objective_scalar(slack, -1.0);
    let sol = solve_lmi_program(&prog, opts.tol).map_err(SynthError::Numlin)?;
    let j = sol.value(&prog, j_var);
    // Accept only a directly verified strict solution.
    let closed = &h + p_mat.transpose() * &j * &q_mat + q_mat.transpose() * j.transpose() * &p_mat;
    if numlin::sym_eig(&closed).0.max() >= 0.0 {
        return Err(SynthError::ReconstructionInfeasible);
    }
    // Split J into the controller blocks.
    let a_pp = j.view((0, 0), (mc, mc)).into_owned();
    let b_p = j.view((0, mc), (mc, n)).into_owned();
    let c_p = j.view((mc, 0), (n_u, mc)).into_owned();
    let d = j.view((mc, mc), (n_u, n)).into_owned();
    Ok(ControllerStep {
        a_pp,
        b_p,
        c_p,
        d,
        block_sizes: data.mc_blocks.clone(),
    })
}

fn reconstruct_from_cert(
    plant: &EventuallyPeriodicLft,
    cert: &SynthesisCertificate,
    opts: &ReconstructOptions,
    bounds: Vec<(f64, f64)>,
) -> Result<StaticNslpvController, SynthError> {
    let mut steps = Vec::with_capacity(cert.h_bar + 1);
    for k in 0..=cert.h_bar {
        let data = step_data(cert, k, opts.rank_tol)?;
        steps.push(solve_step(plant, cert, &data, opts)?);
    }
    Ok(StaticNslpvController {
        h_bar: cert.h_bar,
        steps,
        bounds,
    })
}

/// Reconstruct the scheduled controller from a synthesis certificate. When
/// the per-step LMIs are infeasible at the returned boundary optimum, the
/// synthesis is re-solved as a centered feasibility problem with the
/// objective capped at an inflated level, per the retry ladder.
pub fn reconstruct_controller(
    plant: &EventuallyPeriodicLft,
    cert: &SynthesisCertificate,
    gamma_factor: &DMat,
    first_block: usize,
    opts: &ReconstructOptions,
    bounds: Vec<(f64, f64)>,
) -> Result<(StaticNslpvController, SynthesisCertificate), SynthError> {
    let base = 2.0 * cert.gamma;
    let mut last_err = None;
    // Each rung re-solves the synthesis as a capped feasibility problem
    // with a fatter strictness margin; tighter constraints keep the
    // certificate valid while opening room for the controller inequality.
    for (inflation, margin) in opts.retry_ladder.iter() {
        let centered = synthesize_with_factor(
            plant,
            gamma_factor,
            first_block,
            &SynthOptions {
                tol: opts.tol,
                h_bar: cert.h_bar,
            },
            Some(base * inflation),
            Some(*margin),
        );
        let cert_try = match centered {
            Ok(c) => c,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        match reconstruct_from_cert(plant, &cert_try, opts, bounds.clone()) {
            Ok(ctrl) => {
                let mut cert_out = cert_try;
                // The certified level stays the optimal one; the re-centered
                // solution satisfies the strict inequalities at that level
                // only up to the inflation, so report the inflated bound.
                cert_out.gamma = cert.gamma * inflation * (1.0 + 1e-9);
                return Ok((ctrl, cert_out));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(SynthError::ReconstructionInfeasible))
}
