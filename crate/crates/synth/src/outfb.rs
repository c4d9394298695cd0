//! Feasibility of the dynamic output-feedback synthesis conditions for
//! eventually periodic scheduled plants with partitioned uncertain initial
//! state. Only feasibility and the optimal level are computed; the
//! controller construction itself is out of scope.

use lftcore::EventuallyPeriodicLft;
use nalgebra::DMatrix;
use numlin::{orthonormal_kernel_basis, solve_lmi_program, AffineExpr, LmiProgram};

use crate::SynthError;

type DMat = DMatrix<f64>;

#[derive(Clone, Debug)]
pub struct OutputFeedbackCertificate {
    pub gamma: f64,
    pub b: f64,
    pub f1: Vec<f64>,
    pub f2: f64,
    pub g: f64,
    pub t: f64,
    pub r0: Vec<DMat>,
    pub s0: Vec<DMat>,
}

/// Solve the output-feedback feasibility program for a plant whose initial
/// state is `Γ ξ` with `ξ = (ξ₁ … ξ_a)`, `‖ξ_i‖ ≤ 1`, and `partition`
/// giving the sizes s_i. Returns the certificate at the minimized level, or
/// an infeasibility report.
pub fn output_feedback_feasibility(
    plant: &EventuallyPeriodicLft,
    gamma_factor: &DMat,
    partition: &[usize],
    h_bar: usize,
    tol: f64,
) -> Result<OutputFeedbackCertificate, SynthError> {
    let n = plant.n_state();
    let n_d = plant.n_d();
    let n_e = plant.n_e();
    let q_per = plant.q;
    if h_bar < plant.h {
        return Err(SynthError::Dimension {
            what: "controller horizon".into(),
            got: h_bar,
            want: plant.h,
        });
    }
    let s_total: usize = partition.iter().sum();
    if gamma_factor.nrows() != n || gamma_factor.ncols() != s_total || s_total > n {
        return Err(SynthError::Dimension {
            what: "initial-set factor".into(),
            got: gamma_factor.ncols(),
            want: s_total,
        });
    }

    let steps = h_bar + q_per;
    let mut prog = LmiProgram::new();
    let eps = 1e-7;
    let b = prog.scalar("b");
    let f2 = prog.scalar("f2");
    let g = prog.scalar("g");
    let t = prog.scalar("t");
    let f1: Vec<_> = (0..partition.len())
        .map(|i| prog.scalar(&format!("f1_{}", i + 1)))
        .collect();
    for (id, name) in [(b, "b"), (f2, "f2"), (g, "g"), (t, "t")] {
        prog.require_scalar_min(&format!("{name} positive"), id, eps)
            .map_err(SynthError::Numlin)?;
    }
    for (i, id) in f1.iter().enumerate() {
        prog.require_scalar_min(&format!("f1_{} positive", i + 1), *id, eps)
            .map_err(SynthError::Numlin)?;
    }

    let mut r0 = Vec::new();
    let mut s0 = Vec::new();
    let mut r_blocks = Vec::new();
    let mut s_blocks = Vec::new();
    for k in 0..steps {
        let sizes = &plant.at(k).block_sizes;
        let rid = prog.sym(&format!("r0_{k}"), n);
        let sid = prog.sym(&format!("s0_{k}"), n);
        prog.require_pd(&format!("r0_{k} pd"), prog.var_expr(rid))
            .map_err(SynthError::Numlin)?;
        prog.require_pd(&format!("s0_{k} pd"), prog.var_expr(sid))
            .map_err(SynthError::Numlin)?;
        r0.push(rid);
        s0.push(sid);
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
    // Wrap index for k + 1 = h̄ + q: fold back to h̄.
    let next = |k: usize| -> usize { if k + 1 < steps { k + 1 } else { h_bar } };

    // Initial-state condition Γᵀ S₀(0) Γ ≺ F₁.
    {
        let f1_expr = AffineExpr::block_diag(
            &partition
                .iter()
                .zip(&f1)
                .map(|(&si, id)| prog.scalar_times_identity(*id, si))
                .collect::<Vec<_>>(),
        );
        let lhs = prog.var_expr(s0[0]).congruence(&gamma_factor.transpose());
        prog.require_nd("initial set", lhs.sub(&f1_expr))
            .map_err(SynthError::Numlin)?;
    }

    for k in 0..steps {
        let s = plant.at(k);
        let kn = next(k);
        let h_mat = numlin::vstack(&[
            numlin::hstack(&[s.a_ss.clone(), s.a_sp.clone(), s.b_1s.clone()]),
            numlin::hstack(&[s.a_ps.clone(), s.a_pp.clone(), s.b_1p.clone()]),
            numlin::hstack(&[s.c_1s.clone(), s.c_1p.clone(), s.d_11.clone()]),
        ]);
        let m = s.m();
        let rbar = AffineExpr::block_diag(
            &r_blocks[k].iter().map(|id| prog.var_expr(*id)).collect::<Vec<_>>(),
        );
        let sbar = AffineExpr::block_diag(
            &s_blocks[k].iter().map(|id| prog.var_expr(*id)).collect::<Vec<_>>(),
        );

        // Forward condition in the kernel of [B₂sᵀ B₂pᵀ D₁₂ᵀ].
        let ker_r = orthonormal_kernel_basis(
            &numlin::hstack(&[s.b_2s.transpose(), s.b_2p.transpose(), s.d_12.transpose()]),
            numlin::DEFAULT_RANK_TOL,
        );
        if ker_r.ncols() > 0 {
            let inner = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[k]),
                    rbar.clone(),
                    prog.scalar_times_identity(g, n_d),
                ])
            } else {
                AffineExpr::block_diag(&[prog.var_expr(r0[k]), prog.scalar_times_identity(g, n_d)])
            };
            let shrink = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(r0[kn]),
                    rbar.clone(),
                    prog.scalar_times_identity(b, n_e),
                ])
            } else {
                AffineExpr::block_diag(&[prog.var_expr(r0[kn]), prog.scalar_times_identity(b, n_e)])
            };
            let expr = inner
                .congruence(&h_mat)
                .sub(&shrink)
                .congruence(&ker_r.transpose());
            prog.require_nd(&format!("forward {k}"), expr)
                .map_err(SynthError::Numlin)?;
        }

        // Backward condition in the kernel of [C₂s C₂p D₂₁].
        let ker_s = orthonormal_kernel_basis(
            &numlin::hstack(&[s.c_2s.clone(), s.c_2p.clone(), s.d_21.clone()]),
            numlin::DEFAULT_RANK_TOL,
        );
        if ker_s.ncols() > 0 {
            let inner = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(s0[kn]),
                    sbar.clone(),
                    prog.scalar_times_identity(t, n_e),
                ])
            } else {
                AffineExpr::block_diag(&[prog.var_expr(s0[kn]), prog.scalar_times_identity(t, n_e)])
            };
            let shrink = if m > 0 {
                AffineExpr::block_diag(&[
                    prog.var_expr(s0[k]),
                    sbar.clone(),
                    prog.scalar_times_identity(f2, n_d),
                ])
            } else {
                AffineExpr::block_diag(&[prog.var_expr(s0[k]), prog.scalar_times_identity(f2, n_d)])
            };
            let expr = inner
                .congruence(&h_mat.transpose())
                .sub(&shrink)
                .congruence(&ker_s.transpose());
            prog.require_nd(&format!("backward {k}"), expr)
                .map_err(SynthError::Numlin)?;
        }

        // Couplings for i = 0..p (the state pair included).
        let mut pairs: Vec<(numlin::VarId, numlin::VarId, usize)> =
            vec![(r0[k], s0[k], n)];
        for ((&r, &sv), &mi) in r_blocks[k].iter().zip(&s_blocks[k]).zip(s.block_sizes.iter()) {
            pairs.push((r, sv, mi));
        }
        for (i, (rid, sid, dim)) in pairs.into_iter().enumerate() {
            let block = AffineExpr::vstack(&[
                AffineExpr::hstack(&[prog.var_expr(rid), AffineExpr::identity(dim)]),
                AffineExpr::hstack(&[AffineExpr::identity(dim), prog.var_expr(sid)]),
            ]);
            prog.require_psd(&format!("coupling {i}@{k}"), block)
                .map_err(SynthError::Numlin)?;
        }
    }

    for (x, y, name) in [(g, f2, "g-f2"), (t, b, "t-b")] {
        let one = AffineExpr::constant(DMat::from_element(1, 1, 1.0));
        let block = AffineExpr::vstack(&[
            AffineExpr::hstack(&[prog.var_expr(x), one.clone()]),
            AffineExpr::hstack(&[one, prog.var_expr(y)]),
        ]);
        prog.require_psd(name, block).map_err(SynthError::Numlin)?;
    }

    prog.objective_scalar(b, 0.5);
    prog.objective_scalar(f2, 0.5);
    for id in &f1 {
        prog.objective_scalar(*id, 0.5);
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
    let bv = sol.value_scalar(&prog, b);
    let f2v = sol.value_scalar(&prog, f2);
    let f1v: Vec<f64> = f1.iter().map(|id| sol.value_scalar(&prog, *id)).collect();
    let objective = 0.5 * (bv + f2v + f1v.iter().sum::<f64>());
    Ok(OutputFeedbackCertificate {
        gamma: objective * (1.0 + 1e-6),
        b: bv,
        f1: f1v,
        f2: f2v,
        g: sol.value_scalar(&prog, g),
        t: sol.value_scalar(&prog, t),
        r0: r0.iter().map(|id| sol.value(&prog, *id)).collect(),
        s0: s0.iter().map(|id| sol.value(&prog, *id)).collect(),
    })
}
