//! Static state-feedback synthesis for scheduled plants with exactly
//! measurable lifted state: a joint LMI program over per-step certificate
//! matrices and coupling scalars, minimizing the robust performance level.

use initset::EllipsoidPair;
use lftcore::EventuallyPeriodicLft;
use nalgebra::DMatrix;
use numlin::{
    orthonormal_kernel_basis, solve_lmi_program, AffineExpr, LmiProgram, SolveStatus, VarId,
};

use crate::SynthError;

type DMat = DMatrix<f64>;

/// Certificate returned by a successful synthesis: the performance level,
/// coupling scalars, and the per-step matrix sequences.
#[derive(Clone, Debug)]
pub struct SynthesisCertificate {
    pub gamma: f64,
    pub b: f64,
    pub f11: f64,
    pub f12: f64,
    pub f2: f64,
    pub g: f64,
    pub t: f64,
    /// r0[k] for k = 0..=h̄; the wrap uses r0[h̄].
    pub r0: Vec<DMat>,
    /// Per step, per parameter.
    pub r_blocks: Vec<Vec<DMat>>,
    pub s_blocks: Vec<Vec<DMat>>,
    pub h_bar: usize,
}

/// Symmetric inverse square root of a PD matrix.
pub fn inv_sqrt(m: &DMat) -> Result<DMat, SynthError> {
    let (vals, vecs) = numlin::sym_eig(m);
    if vals.min() <= 0.0 {
        return Err(SynthError::NotPositiveDefinite);
    }
    let n = m.nrows();
    let mut out = DMat::zeros(n, n);
    for i in 0..n {
        let v = vecs.column(i);
        out += &v * v.transpose() * (1.0 / vals[i].sqrt());
    }
    Ok(out)
}

/// Initial-set factor `diag(P^{-1/2}, Q^{-1/2})` of an ellipsoid pair.
pub fn initial_set_factor(pair: &EllipsoidPair) -> Result<DMat, SynthError> {
    Ok(numlin::block_diag(&[inv_sqrt(&pair.p)?, inv_sqrt(&pair.q)?]))
}

pub(crate) struct SynthVars {
    pub r0: Vec<VarId>,
    pub r_blocks: Vec<Vec<VarId>>,
    pub s_blocks: Vec<Vec<VarId>>,
    pub b: VarId,
    pub f11: VarId,
    pub f12: VarId,
    pub f2: VarId,
    pub g: VarId,
    pub t: VarId,
}

/// Assemble the synthesis program. When `objective_cap` is given the scalar
/// objective is dropped and `b + f₁₁ + f₁₂ + f₂ ≤ cap` added instead, which
/// re-centers the solution strictly inside the feasible set.
pub(crate) fn build_program(
    plant: &EventuallyPeriodicLft,
    gamma_factor: &DMat,
    first_block: usize,
    h_bar: usize,
    objective_cap: Option<f64>,
    strictness_margin: Option<f64>,
) -> Result<(LmiProgram, SynthVars), SynthError> {
    let s0 = plant.at(0);
    let n = plant.n_state();
    let n_x = first_block;
    if gamma_factor.nrows() != n || n_x > n {
        return Err(SynthError::Dimension {
            what: "initial-set factor rows".into(),
            got: gamma_factor.nrows(),
            want: n,
        });
    }
    let n_d = plant.n_d();
    let n_e = plant.n_e();
    let _p = plant.n_params();
    let sizes = s0.block_sizes.clone();

    // Exactly measurable state is a structural precondition.
    if (s0.c_2s.clone() - DMat::identity(n, n)).amax() > 1e-12
        || s0.c_2p.amax() > 0.0
        || s0.d_21.amax() > 0.0
    {
        return Err(SynthError::StateNotMeasurable);
    }

    let mut prog = LmiProgram::new();
    if let Some(m) = strictness_margin {
        prog.strictness_margin = m;
    }
    let eps = 1e-7;
    let b = prog.scalar("b");
    let f11 = prog.scalar("f11");
    let f12 = prog.scalar("f12");
    let f2 = prog.scalar("f2");
    let g = prog.scalar("g");
    let t = prog.scalar("t");
    for (id, name) in [(b, "b"), (f11, "f11"), (f12, "f12"), (f2, "f2"), (g, "g"), (t, "t")] {
        prog.require_scalar_min(&format!("{name} positive"), id, eps)
            .map_err(SynthError::Numlin)?;
    }

    let mut r0 = Vec::new();
    let mut r_blocks = Vec::new();
    let mut s_blocks = Vec::new();
    for k in 0..=h_bar {
        let rid = prog.sym(&format!("r0_{k}"), n);
        prog.require_pd(&format!("r0_{k} pd"), prog.var_expr(rid))
            .map_err(SynthError::Numlin)?;
        r0.push(rid);
        let mut rk = Vec::new();
        let mut sk = Vec::new();
        for (i, &mi) in sizes.iter().enumerate() {
            let r = prog.sym(&format!("r{}_{k}", i + 1), mi);
            let s = prog.sym(&format!("s{}_{k}", i + 1), mi);
            prog.require_pd(&format!("r{}_{k} pd", i + 1), prog.var_expr(r))
                .map_err(SynthError::Numlin)?;
            prog.require_pd(&format!("s{}_{k} pd", i + 1), prog.var_expr(s))
                .map_err(SynthError::Numlin)?;
            rk.push(r);
            sk.push(s);
        }
        r_blocks.push(rk);
        s_blocks.push(sk);
    }

    // Initial-set condition [[F₁, Γᵀ], [Γ, R₀(0)]] ≻ 0.
    {
        let f1 = AffineExpr::block_diag(&[
            prog.scalar_times_identity(f11, n_x),
            prog.scalar_times_identity(f12, n - n_x),
        ]);
        let gamma_expr = AffineExpr::constant(gamma_factor.clone());
        let block = AffineExpr::vstack(&[
            AffineExpr::hstack(&[f1, gamma_expr.transpose()]),
            AffineExpr::hstack(&[gamma_expr, prog.var_expr(r0[0])]),
        ]);
        prog.require_pd("initial set", block).map_err(SynthError::Numlin)?;
    }

    // Kernel data shared over k (stationary plant):
    // [B₂sᵀ B₂pᵀ D₁₂ᵀ] with n_u rows.
    let outer = numlin::hstack(&[
        s0.b_2s.transpose(),
        s0.b_2p.transpose(),
        s0.d_12.transpose(),
    ]);
    let n_r = orthonormal_kernel_basis(&outer, numlin::DEFAULT_RANK_TOL);
    let h_mat = numlin::vstack(&[
        numlin::hstack(&[s0.a_ss.clone(), s0.a_sp.clone(), s0.b_1s.clone()]),
        numlin::hstack(&[s0.a_ps.clone(), s0.a_pp.clone(), s0.b_1p.clone()]),
        numlin::hstack(&[s0.c_1s.clone(), s0.c_1p.clone(), s0.d_11.clone()]),
    ]);
    let h22 = numlin::vstack(&[
        numlin::hstack(&[s0.a_pp.clone(), s0.b_1p.clone()]),
        numlin::hstack(&[s0.c_1p.clone(), s0.d_11.clone()]),
    ]);
    let h12 = numlin::hstack(&[s0.a_sp.clone(), s0.b_1s.clone()]);

    for k in 0..=h_bar {
        let k_next = (k + 1).min(h_bar);
        let rbar =
            |prog: &LmiProgram| AffineExpr::block_diag(
                &r_blocks[k].iter().map(|id| prog.var_expr(*id)).collect::<Vec<_>>(),
            );
        let sbar =
            |prog: &LmiProgram| AffineExpr::block_diag(
                &s_blocks[k].iter().map(|id| prog.var_expr(*id)).collect::<Vec<_>>(),
            );
        let m = sizes.iter().sum::<usize>();

        // Kernel inequality (skipped when the kernel is empty).
        if n_r.ncols() > 0 {
            let inner = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[k]),
                    rbar(&prog),
                    prog.scalar_times_identity(g, n_d),
                ])
            } else {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[k]),
                    prog.scalar_times_identity(g, n_d),
                ])
            };
            let grown = inner.congruence(&h_mat);
            let shrink = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[k_next]),
                    rbar(&prog),
                    prog.scalar_times_identity(b, n_e),
                ])
            } else {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[k_next]),
                    prog.scalar_times_identity(b, n_e),
                ])
            };
            let expr = grown.sub(&shrink).congruence(&n_r.transpose());
            prog.require_nd(&format!("kernel step {k}"), expr)
                .map_err(SynthError::Numlin)?;
        }

        // Schur-form inequality.
        {
            let lead = if m > 0 {
                AffineExpr::block_diag(&[sbar(&prog), prog.scalar_times_identity(f2, n_d)])
            } else {
                prog.scalar_times_identity(f2, n_d)
            };
            let inner = if m > 0 {
                AffineExpr::block_diag(&[sbar(&prog), prog.scalar_times_identity(t, n_e)])
            } else {
                prog.scalar_times_identity(t, n_e)
            };
            let tl = lead.sub(&inner.congruence(&h22.transpose()));
            let block = AffineExpr::vstack(&[
                AffineExpr::hstack(&[tl, AffineExpr::constant(h12.transpose())]),
                AffineExpr::hstack(&[
                    AffineExpr::constant(h12.clone()),
                    prog.var_expr(r0[k_next]),
                ]),
            ]);
            prog.require_pd(&format!("schur step {k}"), block)
                .map_err(SynthError::Numlin)?;
        }

        // Couplings [[Rᵢ, I], [I, Sᵢ]] ⪰ εI: solved with a margin so the
        // controller channel ranks are generically full.
        for (i, (&rid, &sid)) in r_blocks[k].iter().zip(&s_blocks[k]).enumerate() {
            let mi = sizes[i];
            let block = AffineExpr::vstack(&[
                AffineExpr::hstack(&[prog.var_expr(rid), AffineExpr::identity(mi)]),
                AffineExpr::hstack(&[AffineExpr::identity(mi), prog.var_expr(sid)]),
            ]);
            prog.require_pd(&format!("coupling {}_{k}", i + 1), block)
                .map_err(SynthError::Numlin)?;
        }
    }

    // Scalar couplings [[g, 1], [1, f₂]] ⪰ 0 and [[t, 1], [1, b]] ⪰ 0.
    for (x, y, name) in [(g, f2, "g-f2"), (t, b, "t-b")] {
        let one = AffineExpr::constant(DMat::from_element(1, 1, 1.0));
        let block = AffineExpr::vstack(&[
            AffineExpr::hstack(&[prog.var_expr(x), one.clone()]),
            AffineExpr::hstack(&[one, prog.var_expr(y)]),
        ]);
        prog.require_psd(name, block).map_err(SynthError::Numlin)?;
    }

    match objective_cap {
        Some(cap) => {
            // 2γ_cap − (b + f₁₁ + f₁₂ + f₂) ≥ 0, no objective: the interior
            // point centers the iterate.
            let mut expr = AffineExpr::constant(DMat::from_element(1, 1, cap));
            for id in [b, f11, f12, f2] {
                expr = expr.sub(&prog.var_expr(id));
            }
            prog.require_psd("objective cap", expr)
                .map_err(SynthError::Numlin)?;
        }
        None => {
            for id in [b, f11, f12, f2] {
                prog.objective_scalar(id, 0.5);
            }
        }
    }

    Ok((
        prog,
        SynthVars {
            r0,
            r_blocks,
            s_blocks,
            b,
            f11,
            f12,
            f2,
            g,
            t,
        },
    ))
}

#[derive(Clone, Copy, Debug)]
pub struct SynthOptions {
    pub tol: f64,
    pub h_bar: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            h_bar: 0,
        }
    }
}

/// Solve the synthesis program at minimum performance level.
pub fn synthesize_nslpv(
    plant: &EventuallyPeriodicLft,
    pair: &EllipsoidPair,
    opts: &SynthOptions,
) -> Result<SynthesisCertificate, SynthError> {
    let gamma_factor = initial_set_factor(pair)?;
    synthesize_with_factor(plant, &gamma_factor, pair.p.nrows(), opts, None, None)
}

pub(crate) fn synthesize_with_factor(
    plant: &EventuallyPeriodicLft,
    gamma_factor: &DMat,
    first_block: usize,
    opts: &SynthOptions,
    objective_cap: Option<f64>,
    strictness_margin: Option<f64>,
) -> Result<SynthesisCertificate, SynthError> {
    let (prog, vars) = build_program(
        plant,
        gamma_factor,
        first_block,
        opts.h_bar,
        objective_cap,
        strictness_margin,
    )?;
    let sol = solve_lmi_program(&prog, opts.tol).map_err(SynthError::Numlin)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(SynthError::Infeasible {
                farkas_improving: sol.farkas.as_ref().map(|f| f.improving).unwrap_or(0.0),
            })
        }
        SolveStatus::MaxIterations => {
            // Accept verified near-optimal iterates; the certificate check
            // below remains the arbiter.
            if sol.kkt.primal > 1e-6 {
                return Err(SynthError::SolverStalled {
                    primal: sol.kkt.primal,
                    gap: sol.kkt.gap,
                });
            }
        }
    }
    let b = sol.value_scalar(&prog, vars.b);
    let f11 = sol.value_scalar(&prog, vars.f11);
    let f12 = sol.value_scalar(&prog, vars.f12);
    let f2 = sol.value_scalar(&prog, vars.f2);
    let objective = 0.5 * (b + f11 + f12 + f2);
    Ok(SynthesisCertificate {
        gamma: objective * (1.0 + 1e-6),
        b,
        f11,
        f12,
        f2,
        g: sol.value_scalar(&prog, vars.g),
        t: sol.value_scalar(&prog, vars.t),
        r0: vars.r0.iter().map(|id| sol.value(&prog, *id)).collect(),
        r_blocks: vars
            .r_blocks
            .iter()
            .map(|ks| ks.iter().map(|id| sol.value(&prog, *id)).collect())
            .collect(),
        s_blocks: vars
            .s_blocks
            .iter()
            .map(|ks| ks.iter().map(|id| sol.value(&prog, *id)).collect())
            .collect(),
        h_bar: opts.h_bar,
    })
}
