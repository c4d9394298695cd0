//! Primal-dual path-following interior-point solver for block-diagonal LMI
//! programs, using Nesterov–Todd scaling and dense factorizations throughout.
//!
//! The program is solved in the form
//!   minimize cᵀx  subject to  F0ℓ + Σ_i x_i Fiℓ ⪰ 0 for every block ℓ,
//! whose Lagrangian dual is
//!   maximize −Σℓ tr(F0ℓ Yℓ)  subject to  Σℓ tr(Fiℓ Yℓ) = c_i, Yℓ ⪰ 0.

use crate::mat::{sym_eig, DMat, DVec};
use crate::program::{unpack_value, LmiProgram, VarId};
use crate::NumlinError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Dual improving-ray certificate of primal infeasibility: `y ⪰ 0` per block
/// with `Σ tr(Fi y) ≈ 0` for every variable and `−Σ tr(F0 y) > 0`.
#[derive(Clone, Debug)]
pub struct FarkasCertificate {
    pub blocks: Vec<DMat>,
    pub improving: f64,
    pub constraint_violation: f64,
}

#[derive(Clone, Debug)]
pub struct LmiSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub farkas: Option<FarkasCertificate>,
}

impl LmiSolution {
    pub fn value(&self, prog: &LmiProgram, id: VarId) -> DMat {
        unpack_value(prog, id, &self.x)
    }

    pub fn value_scalar(&self, prog: &LmiProgram, id: VarId) -> f64 {
        self.value(prog, id)[(0, 0)]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 250,
            step_fraction: 0.98,
        }
    }
}

struct ScaledProblem {
    /// Per block: constant matrix.
    f0: Vec<DMat>,
    /// Per block: sparse list of (param, coefficient).
    fi: Vec<Vec<(usize, DMat)>>,
    dims: Vec<usize>,
    c: Vec<f64>,
    m: usize,
}

impl ScaledProblem {
    fn build(prog: &LmiProgram) -> Self {
        let m = prog.n_params();
        let mut f0 = Vec::new();
        let mut fi = Vec::new();
        let mut dims = Vec::new();
        for b in &prog.blocks {
            let scale = b.expr.magnitude().max(1e-12);
            f0.push(0.5 / scale * (&b.expr.constant + b.expr.constant.transpose()));
            let terms: Vec<(usize, DMat)> = b
                .expr
                .terms
                .iter()
                .map(|(p, c)| (*p, 0.5 / scale * (c + c.transpose())))
                .collect();
            fi.push(terms);
            dims.push(b.expr.nrows);
        }
        Self {
            f0,
            fi,
            dims,
            c: prog.objective.clone(),
            m,
        }
    }

    fn affine(&self, x: &DVec) -> Vec<DMat> {
        self.f0
            .iter()
            .zip(&self.fi)
            .map(|(f0, terms)| {
                let mut a = f0.clone();
                for (p, f) in terms {
                    a += f * x[*p];
                }
                a
            })
            .collect()
    }
}

fn frob_dot(a: &DMat, b: &DMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Some factor `l` with `l·lᵀ = m` for a PD matrix: Cholesky when possible,
/// eigenvalue square root otherwise.
fn pd_factor(m: &DMat) -> DMat {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let (vals, vecs) = sym_eig(m);
    let lmax = vals.max().max(1e-300);
    let n = m.nrows();
    let mut l = DMat::zeros(n, n);
    for i in 0..n {
        l.set_column(i, &(vecs.column(i) * vals[i].max(1e-18 * lmax).sqrt()));
    }
    l
}

/// Inverse Nesterov–Todd scaling `g = w⁻¹` for the pair `(x, y)`, where the
/// scaling point satisfies `w y w = x`. Built from factors `x = l lᵀ`,
/// `y = r rᵀ` and the SVD `rᵀ l = u σ vᵀ` as `g = l⁻ᵀ v σ vᵀ l⁻¹`, which
/// resolves the small singular values to relative accuracy.
fn nt_inverse_scaling(x: &DMat, y: &DMat) -> DMat {
    let l = pd_factor(x);
    let r = pd_factor(y);
    let svd = (r.transpose() * &l).svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let n = x.nrows();
    let mut mid = DMat::zeros(n, n);
    for i in 0..n {
        let row = v_t.row(i).transpose();
        mid += &row * row.transpose() * svd.singular_values[i].max(1e-300);
    }
    let linv = l
        .lu()
        .try_inverse()
        .unwrap_or_else(|| DMat::identity(n, n));
    linv.transpose() * mid * linv
}

/// Largest α in (0, 1] with `x + α dx ⪰ 0`, computed from the minimum
/// eigenvalue of the whitened step. Eigenvalue-based whitening keeps this
/// well defined even when `x` is nearly singular.
fn step_to_boundary(x: &DMat, dx: &DMat) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return 1.0;
    }
    let (vals, vecs) = sym_eig(x);
    let lmax = vals.max().max(1e-300);
    let mut white = DMat::zeros(n, n);
    for i in 0..n {
        let l = vals[i].max(1e-16 * lmax);
        let v = vecs.column(i);
        white += &v * v.transpose() * (1.0 / l.sqrt());
    }
    let s = &white * dx * white.transpose();
    let lam_min = sym_eig(&s).0.min();
    if lam_min >= -1e-14 {
        1.0
    } else {
        (-1.0 / lam_min).min(1.0)
    }
}

/// Project a symmetric matrix onto eigenvalues ≥ rel_floor · λmax; keeps the
/// cone iterates strictly positive definite despite rounding.
fn clamp_pd(m: &mut DMat, rel_floor: f64) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    let (vals, vecs) = sym_eig(m);
    let lmax = vals.max().max(1e-300);
    let floor = rel_floor * lmax;
    if vals.min() >= floor {
        return;
    }
    let mut out = DMat::zeros(n, n);
    for i in 0..n {
        let v = vecs.column(i);
        out += &v * v.transpose() * vals[i].max(floor);
    }
    *m = out;
}

fn solve_spd(m: &DMat, rhs: &DVec) -> Option<DVec> {
    let n = m.nrows();
    let mut ridge = 0.0;
    let base = m.diagonal().amax().max(1e-30);
    for attempt in 0..6 {
        let mm = if ridge == 0.0 {
            m.clone()
        } else {
            m + DMat::identity(n, n) * ridge
        };
        if let Some(ch) = mm.cholesky() {
            let mut x = ch.solve(rhs);
            // Two rounds of iterative refinement recover digits lost to the
            // ill-conditioned late-stage Schur complement.
            for _ in 0..2 {
                let r = rhs - m * &x;
                x += ch.solve(&r);
            }
            return Some(x);
        }
        ridge = base * 1e-14 * 10f64.powi(attempt);
    }
    None
}

/// Solve a block-diagonal LMI program to tolerance `tol`.
pub fn solve_lmi_program(prog: &LmiProgram, tol: f64) -> Result<LmiSolution, NumlinError> {
    solve_with_options(
        prog,
        SolverOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_with_options(
    prog: &LmiProgram,
    opts: SolverOptions,
) -> Result<LmiSolution, NumlinError> {
    if prog.n_params() == 0 && prog.blocks.is_empty() {
        return Err(NumlinError::EmptyProgram);
    }
    let sp = ScaledProblem::build(prog);
    let m = sp.m;
    let n_total: usize = sp.dims.iter().sum();

    // Constant-only program: check each block directly.
    if m == 0 {
        for (f0, _) in sp.f0.iter().zip(&sp.dims) {
            let (vals, vecs) = sym_eig(f0);
            let idx = vals.imin();
            if vals[idx] < -opts.tol {
                let v = vecs.column(idx);
                let cert: Vec<DMat> = sp
                    .f0
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        if std::ptr::eq(f, f0) {
                            &v * v.transpose()
                        } else {
                            DMat::zeros(sp.dims[i], sp.dims[i])
                        }
                    })
                    .collect();
                return Ok(LmiSolution {
                    status: SolveStatus::Infeasible,
                    x: vec![],
                    objective: 0.0,
                    dual_objective: f64::INFINITY,
                    kkt: KktResiduals::default(),
                    iterations: 0,
                    farkas: Some(FarkasCertificate {
                        improving: -frob_dot(f0, &(&v * v.transpose())),
                        constraint_violation: 0.0,
                        blocks: cert,
                    }),
                });
            }
        }
        return Ok(LmiSolution {
            status: SolveStatus::Optimal,
            x: vec![],
            objective: 0.0,
            dual_objective: 0.0,
            kkt: KktResiduals::default(),
            iterations: 0,
            farkas: None,
        });
    }

    // Parameters that never appear in a constraint cannot be pinned down by
    // the interior point; reject if they carry objective weight.
    let mut appears = vec![false; m];
    for terms in &sp.fi {
        for (p, _) in terms {
            appears[*p] = true;
        }
    }
    for p in 0..m {
        if !appears[p] && sp.c[p] != 0.0 {
            return Err(NumlinError::UnboundedVariable(p));
        }
    }

    let init_scale = sp
        .f0
        .iter()
        .fold(1.0f64, |a, f| a.max(f.amax()))
        .max(sp.c.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .sqrt()
        .max(1.0)
        * 10.0;

    let mut x = DVec::zeros(m);
    let mut xs: Vec<DMat> = sp.dims.iter().map(|&d| DMat::identity(d, d) * init_scale).collect();
    let mut ys: Vec<DMat> = sp.dims.iter().map(|&d| DMat::identity(d, d) * init_scale).collect();

    let c_norm = 1.0 + sp.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let f0_norm = 1.0 + sp.f0.iter().fold(0.0f64, |a, f| a.max(f.amax()));

    let mut best: Option<(f64, LmiSolution)> = None;
    let mut iterations = 0;
    let mut since_improvement = 0usize;
    let mut init_measures = (1.0f64, 1.0f64, 1.0f64);

    for iter in 0..opts.max_iter {
        iterations = iter;
        let affine = sp.affine(&x);
        // Residuals.
        let rp: Vec<DMat> = affine.iter().zip(&xs).map(|(a, xb)| a - xb).collect();
        let mut rd = DVec::zeros(m);
        for p in 0..m {
            rd[p] = sp.c[p];
        }
        for (terms, y) in sp.fi.iter().zip(&ys) {
            for (p, f) in terms {
                rd[*p] -= frob_dot(f, y);
            }
        }
        let gap: f64 = xs.iter().zip(&ys).map(|(xb, y)| frob_dot(xb, y)).sum();
        let mu = if n_total > 0 { gap / n_total as f64 } else { 0.0 };

        let primal_obj: f64 = (0..m).map(|p| sp.c[p] * x[p]).sum();
        let dual_obj: f64 = -sp.f0.iter().zip(&ys).map(|(f, y)| frob_dot(f, y)).sum::<f64>();

        let rel_p = rp
            .iter()
            .fold(0.0f64, |a, r| a.max(r.amax()))
            / f0_norm;
        let rel_d = rd.amax() / c_norm;
        let rel_gap = gap.abs() / (1.0 + primal_obj.abs() + dual_obj.abs());

        // Optimality is judged on primal feasibility and the complementarity
        // gap, the quantities the solution contract promises. The dual
        // residual gets a looser allowance: near the boundary its last digits
        // are limited by the Schur-complement conditioning, and it only
        // serves to certify the gap.
        let dual_allow = (100.0 * opts.tol).max(1e-6);
        let score = rel_p
            .max(rel_gap)
            .max(rel_d * (opts.tol / dual_allow));
        let make_solution = |status: SolveStatus| LmiSolution {
            status,
            x: x.iter().copied().collect(),
            objective: primal_obj,
            dual_objective: dual_obj,
            kkt: KktResiduals {
                primal: rel_p,
                dual: rel_d,
                gap: rel_gap,
            },
            iterations: iter,
            farkas: None,
        };
        if best.as_ref().map_or(true, |(s, _)| score < 0.95 * *s) {
            best = Some((score, make_solution(SolveStatus::MaxIterations)));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }

        if rel_p <= opts.tol && rel_d <= dual_allow && rel_gap <= opts.tol {
            return Ok(make_solution(SolveStatus::Optimal));
        }

        // Dual improving-ray test: a verified certificate proves
        // infeasibility. The certificate is rescaled so the improving
        // direction has unit objective; its residual is then the honest
        // relative quality.
        let tr_y: f64 = ys.iter().map(|y| y.trace()).sum();
        let mut ray_promising = false;
        if tr_y > 0.0 {
            let yhat: Vec<DMat> = ys.iter().map(|y| y / tr_y).collect();
            let improving: f64 = -sp.f0.iter().zip(&yhat).map(|(f, y)| frob_dot(f, y)).sum::<f64>();
            let mut viol = 0.0f64;
            let mut acc = vec![0.0; m];
            for (terms, y) in sp.fi.iter().zip(&yhat) {
                for (p, f) in terms {
                    acc[*p] += frob_dot(f, y);
                }
            }
            for v in &acc {
                viol = viol.max(v.abs());
            }
            if std::env::var("NUMLIN_TRACE").is_ok() && improving > 0.0 {
                eprintln!("  ray: tr_y {tr_y:.3e} improving {improving:.3e} viol {viol:.3e}");
            }
            ray_promising = improving > 1e-9 && viol < 1e-2 * improving;
            if improving > 1e-9 && viol < 1e-5 * improving {
                let scale = 1.0 / improving;
                let mut sol = make_solution(SolveStatus::Infeasible);
                sol.farkas = Some(FarkasCertificate {
                    blocks: yhat.iter().map(|y| y * scale).collect(),
                    improving: 1.0,
                    constraint_violation: viol / improving,
                });
                return Ok(sol);
            }
        }
        // Numerical floor: complementarity below machine precision, or a
        // long stretch without progress (and no forming infeasibility ray),
        // means the iterates cannot improve further.
        if mu < 1e-15 * init_scale * init_scale
            || (since_improvement > 12 && !ray_promising)
        {
            break;
        }

        // Nesterov–Todd scaling per block: w y w = x, g = w⁻¹.
        let gs: Vec<DMat> = xs
            .iter()
            .zip(&ys)
            .map(|(xb, y)| nt_inverse_scaling(xb, y))
            .collect();

        // Schur complement M_ij = Σℓ tr(Fi g Fj g); cache g Fj g per block.
        let mut mmat = DMat::zeros(m, m);
        let mut cache: Vec<Vec<(usize, DMat)>> = Vec::with_capacity(sp.dims.len());
        for (terms, g) in sp.fi.iter().zip(&gs) {
            let sand: Vec<(usize, DMat)> = terms.iter().map(|(p, f)| (*p, g * f * g)).collect();
            for (i, (pi, fi)) in terms.iter().enumerate() {
                for (pj, gfg) in sand.iter().skip(i) {
                    let v = frob_dot(fi, gfg);
                    mmat[(*pi, *pj)] += v;
                    if pi != pj {
                        mmat[(*pj, *pi)] += v;
                    }
                }
            }
            cache.push(sand);
        }
        for p in 0..m {
            if !appears[p] {
                mmat[(p, p)] = 1.0;
            }
        }

        let y_inv: Vec<DMat> = ys
            .iter()
            .map(|y| {
                let (vals, vecs) = sym_eig(y);
                let lmax = vals.max().max(1e-300);
                let mut inv = DMat::zeros(y.nrows(), y.ncols());
                for i in 0..y.nrows() {
                    let l = vals[i].max(1e-14 * lmax);
                    let v = vecs.column(i);
                    inv += &v * v.transpose() * (1.0 / l);
                }
                inv
            })
            .collect();

        // Gram system of the coefficient matrices, used to project the
        // computed dual step back onto the Newton trace equations. Unlike the
        // NT-scaled Schur complement its conditioning does not degrade as
        // μ → 0, so dual feasibility keeps contracting at late iterations.
        let mut gram = DMat::zeros(m, m);
        for terms in &sp.fi {
            for (i, (pi, fi)) in terms.iter().enumerate() {
                for (pj, fj) in terms.iter().skip(i) {
                    let v = frob_dot(fi, fj);
                    gram[(*pi, *pj)] += v;
                    if pi != pj {
                        gram[(*pj, *pi)] += v;
                    }
                }
            }
        }
        for p in 0..m {
            if !appears[p] {
                gram[(p, p)] = 1.0;
            }
        }

        // One Newton solve for a given centering σ; reuses the factored M.
        // `second_order` carries the affine direction for Mehrotra's
        // corrector term.
        let direction = |sigma: f64,
                         second_order: Option<(&[DMat], &[DMat])>|
         -> Option<(DVec, Vec<DMat>, Vec<DMat>)> {
            let mut rhs = DVec::zeros(m);
            let mut rcp: Vec<DMat> = Vec::with_capacity(sp.dims.len());
            for l in 0..sp.dims.len() {
                let mut rc = &y_inv[l] * (sigma * mu) - &xs[l];
                if let Some((dxa, dya)) = second_order {
                    let t = &dxa[l] * &dya[l] * &y_inv[l];
                    rc -= 0.5 * (&t + t.transpose());
                }
                let rcl = rc - &rp[l];
                for (p, f) in &sp.fi[l] {
                    rhs[*p] += frob_dot(f, &(&gs[l] * &rcl * &gs[l]));
                }
                rcp.push(rcl);
            }
            for p in 0..m {
                rhs[p] -= rd[p];
            }
            let dx = solve_spd(&mmat, &rhs)?;
            let mut dxs = Vec::with_capacity(sp.dims.len());
            let mut dys = Vec::with_capacity(sp.dims.len());
            for l in 0..sp.dims.len() {
                let mut sum = rp[l].clone();
                let mut fsum = DMat::zeros(sp.dims[l], sp.dims[l]);
                for (p, f) in &sp.fi[l] {
                    sum += f * dx[*p];
                    fsum += f * dx[*p];
                }
                let dy = &gs[l] * (&rcp[l] - fsum) * &gs[l];
                dxs.push(sum);
                dys.push(dy);
            }
            // Project dY onto the trace equations tr(Fi dY) = rd_i, but only
            // when the sandwich computation actually drifted: near the
            // boundary the correction competes with λmin(Y), so a spurious
            // projection would block the dual step.
            let mut err = DVec::zeros(m);
            for p in 0..m {
                err[p] = rd[p];
            }
            for (terms, dy) in sp.fi.iter().zip(&dys) {
                for (p, f) in terms {
                    err[*p] -= frob_dot(f, dy);
                }
            }
            if err.amax() > 1e-9 * c_norm {
                if let Some(delta) = solve_spd(&gram, &err) {
                    for (terms, dy) in sp.fi.iter().zip(dys.iter_mut()) {
                        for (p, f) in terms {
                            *dy += f * delta[*p];
                        }
                    }
                }
            }
            Some((dx, dxs, dys))
        };

        // Predictor (σ = 0) fixes the centering parameter adaptively.
        let (_, pdxs, pdys) = match direction(0.0, None) {
            Some(d) => d,
            None => break,
        };
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for l in 0..sp.dims.len() {
            ap = ap.min(step_to_boundary(&xs[l], &pdxs[l]));
            ad = ad.min(step_to_boundary(&ys[l], &pdys[l]));
        }
        let mut gap_aff = 0.0;
        for l in 0..sp.dims.len() {
            let xa = &xs[l] + &pdxs[l] * (opts.step_fraction * ap);
            let ya = &ys[l] + &pdys[l] * (opts.step_fraction * ad);
            gap_aff += frob_dot(&xa, &ya);
        }
        let mu_aff = gap_aff / n_total.max(1) as f64;
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-8, 0.99);

        // Corrector with Mehrotra's second-order term; fall back to the plain
        // centering direction if the corrector shortens the step too much.
        let corr = direction(sigma, Some((&pdxs, &pdys)));
        let plain = || direction(sigma, None);
        let (dx, dxs, dys) = match corr {
            Some(d) => {
                let mut a = 1.0f64;
                for l in 0..sp.dims.len() {
                    a = a.min(step_to_boundary(&xs[l], &d.1[l]));
                    a = a.min(step_to_boundary(&ys[l], &d.2[l]));
                }
                if a < 0.1 * ap.min(ad) {
                    match plain() {
                        Some(p) => p,
                        None => d,
                    }
                } else {
                    d
                }
            }
            None => match plain() {
                Some(d) => d,
                None => break,
            },
        };
        let mut bp = 1.0f64;
        let mut bd = 1.0f64;
        for l in 0..sp.dims.len() {
            bp = bp.min(step_to_boundary(&xs[l], &dxs[l]));
            bd = bd.min(step_to_boundary(&ys[l], &dys[l]));
        }
        // Step fraction approaches 1 near unit steps so the asymptotic
        // convergence stays fast without crossing the cone boundary.
        let frac = (0.9 + 0.09 * bp.min(bd)).min(opts.step_fraction.max(0.9));
        let mut ap = (frac * bp).min(1.0);
        let mut ad = (frac * bd).min(1.0);

        // Neighborhood safeguard: complementarity must not shrink much faster
        // than the infeasibilities, otherwise late dual progress gets blocked
        // at the cone boundary. Fall back to equal steps when violated.
        let mu_at = |ap: f64, ad: f64| -> f64 {
            let mut g = 0.0;
            for l in 0..sp.dims.len() {
                g += frob_dot(&xs[l], &ys[l])
                    + ap * frob_dot(&dxs[l], &ys[l])
                    + ad * frob_dot(&xs[l], &dys[l])
                    + ap * ad * frob_dot(&dxs[l], &dys[l]);
            }
            g / n_total.max(1) as f64
        };
        if iter == 0 {
            init_measures = (mu.max(1e-300), rel_p.max(1e-300), rel_d.max(1e-300));
        }
        let (mu0, rp0, rd0) = init_measures;
        let res_ratio = ((1.0 - ap) * rel_p / rp0).max((1.0 - ad) * rel_d / rd0);
        if mu_at(ap, ad) < 0.01 * mu0 * res_ratio {
            let a = ap.min(ad);
            ap = a;
            ad = a;
        }
        if std::env::var("NUMLIN_TRACE").is_ok() {
            eprintln!("it {iter} mu {mu:.3e} sigma {sigma:.2e} ap {ap:.3e} ad {ad:.3e} rp {rel_p:.2e} rd {rel_d:.2e} gap {rel_gap:.2e}");
        }
        if ap < 1e-10 && ad < 1e-10 {
            break; // stalled at the cone boundary
        }
        x += dx * ap;
        for l in 0..sp.dims.len() {
            xs[l] += &dxs[l] * ap;
            ys[l] += &dys[l] * ad;
            clamp_pd(&mut xs[l], 1e-16);
            clamp_pd(&mut ys[l], 1e-16);
        }
    }

    let (score, mut sol) = best.expect("at least one iterate recorded");
    sol.iterations = iterations;
    if score <= opts.tol {
        sol.status = SolveStatus::Optimal;
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::AffineExpr;
    use crate::program::VarShape;

    #[test]
    fn psd_forces_scalar_above_one() {
        // minimize x s.t. [[x, 1], [1, x]] ⪰ 0 → x* = 1
        let mut prog = LmiProgram::new();
        let xv = prog.scalar("x");
        let off = AffineExpr::constant(DMat::from_row_slice(2, 2, &[0., 1., 1., 0.]));
        let e = prog.scalar_times_identity(xv, 2).add(&off);
        prog.require_psd("disc", e).unwrap();
        prog.objective_scalar(xv, 1.0);
        let sol = solve_lmi_program(&prog, 1e-8).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.value_scalar(&prog, xv) - 1.0).abs() < 1e-7, "x = {}", sol.value_scalar(&prog, xv));
    }

    #[test]
    fn scalar_lyapunov_has_analytic_optimum() {
        // minimize p s.t. 0.25 p − p + 1 ≤ 0, p ≥ 0 → p* = 4/3
        let mut prog = LmiProgram::new();
        let pv = prog.scalar("p");
        let e = prog
            .var_expr(pv)
            .scale(0.25 - 1.0)
            .add(&AffineExpr::constant(DMat::from_element(1, 1, 1.0)));
        prog.require_nsd("lyap", e).unwrap();
        prog.require_scalar_min("pos", pv, 0.0).unwrap();
        prog.objective_scalar(pv, 1.0);
        let sol = solve_lmi_program(&prog, 1e-8).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.value_scalar(&prog, pv) - 4.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn negative_constant_block_is_infeasible() {
        let mut prog = LmiProgram::new();
        prog.require_psd(
            "neg",
            AffineExpr::constant(DMat::from_element(1, 1, -1.0)),
        )
        .unwrap();
        let sol = solve_lmi_program(&prog, 1e-6).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.farkas.is_some());
    }

    #[test]
    fn infeasible_with_variables_yields_certificate() {
        // x ≥ 1 and x ≤ -1 simultaneously.
        let mut prog = LmiProgram::new();
        let xv = prog.scalar("x");
        prog.require_scalar_min("lo", xv, 1.0).unwrap();
        let e = prog
            .var_expr(xv)
            .neg()
            .sub(&AffineExpr::constant(DMat::from_element(1, 1, 1.0)));
        prog.require_psd("hi", e).unwrap();
        let sol = solve_lmi_program(&prog, 1e-6).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        let cert = sol.farkas.unwrap();
        assert!(cert.improving > 0.0);
        assert!(cert.constraint_violation < 1e-6 * cert.improving);
    }

    #[test]
    fn matrix_variable_trace_objective() {
        // minimize tr(X) s.t. X ⪰ A with A = diag(1, 2): optimum tr = 3.
        let mut prog = LmiProgram::new();
        let xv = prog.var("X", VarShape::Sym(2));
        let a = DMat::from_row_slice(2, 2, &[1., 0., 0., 2.]);
        let e = prog.var_expr(xv).sub(&AffineExpr::constant(a));
        prog.require_psd("dom", e).unwrap();
        prog.objective_trace(xv, &DMat::identity(2, 2), 1.0);
        let sol = solve_lmi_program(&prog, 1e-8).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 3.0).abs() < 1e-6, "objective {}", sol.objective);
    }

    #[test]
    fn empty_program_is_rejected() {
        let prog = LmiProgram::new();
        assert!(matches!(
            solve_lmi_program(&prog, 1e-6),
            Err(NumlinError::EmptyProgram)
        ));
    }
}
