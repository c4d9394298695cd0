use lftcore::{assemble_lft, AssembleOptions, normalize_params};
use initset::EllipsoidPair;
use nalgebra::DMatrix;
use numlin::{orthonormal_kernel_basis, sym_eig, hstack, vstack, block_diag};
type DMat = DMatrix<f64>;

fn main() {
    let (model, _) = liftlearn::load_model(std::path::Path::new("/tmp/exp1/model-0a75ceb4r.lm")).unwrap();
    let norm = normalize_params(&model);
    let plant = assemble_lft(&norm, &[1.0;5], &AssembleOptions { include_measurement_noise: false, w: None, disturbance_bound: 1.0 }).unwrap();
    let pair = EllipsoidPair { p: model.p_matrix.clone(), q: model.q_matrix.clone() };
    let opts = synth::SynthOptions { tol: 1e-7, h_bar: 0 };
    let cert = synth::synthesize_nslpv(&plant, &pair, &opts).unwrap();
    eprintln!("obj sum/2 = {}", 0.5*(cert.b+cert.f11+cert.f12+cert.f2));

    // Rebuild the reconstruction data by hand for k = 0.
    let s = plant.at(0);
    let n = plant.n_state();
    let m = s.m();
    let n_u = plant.n_u();
    let n_d = plant.n_d();
    let n_e = plant.n_e();
    let r0 = &cert.r0[0];
    let rbar = block_diag(&cert.r_blocks[0]);
    let sbar = block_diag(&cert.s_blocks[0]);
    let sinv = sbar.clone().try_inverse().unwrap();
    let ebar = numlin::psd_sqrt(&(&rbar - &sinv), 1e-8).unwrap();
    let mc = ebar.ncols();
    let r0inv = r0.clone().try_inverse().unwrap();
    let b = cert.b; let f2 = cert.f2;
    let dims = [n, m, mc, n, m, mc, n_d, n_e];
    let total: usize = dims.iter().sum();
    let off = |i: usize| -> usize { dims[..i].iter().sum() };
    let mut h = DMat::zeros(total, total);
    let mut set = |bi: usize, bj: usize, mat: DMat, h: &mut DMat| {
        h.view_mut((off(bi), off(bj)), (mat.nrows(), mat.ncols())).copy_from(&mat);
        if bi != bj { let t = mat.transpose(); h.view_mut((off(bj), off(bi)), (t.nrows(), t.ncols())).copy_from(&t); }
    };
    set(0,0, -&cert.r0[0.min(cert.h_bar)], &mut h); // r0(k+1) = r0(0) for h̄=0
    set(1,1, -&rbar, &mut h);
    set(1,2, -&ebar, &mut h);
    set(0,3, s.a_ss.clone(), &mut h);
    set(0,4, s.a_sp.clone(), &mut h);
    set(1,3, s.a_ps.clone(), &mut h);
    set(1,4, s.a_pp.clone(), &mut h);
    set(0,6, &s.b_1s / f2.sqrt(), &mut h);
    set(1,6, &s.b_1p / f2.sqrt(), &mut h);
    set(2,2, -DMat::identity(mc, mc), &mut h);
    set(3,3, -&r0inv, &mut h);
    set(4,4, -&sbar, &mut h);
    set(4,5, &sbar * &ebar, &mut h);
    set(3,7, s.c_1s.transpose() / b.sqrt(), &mut h);
    set(4,7, s.c_1p.transpose() / b.sqrt(), &mut h);
    set(5,5, -(DMat::identity(mc, mc) + ebar.transpose() * &sbar * &ebar), &mut h);
    set(6,6, -DMat::identity(n_d, n_d), &mut h);
    set(6,7, s.d_11.transpose() / (b*f2).sqrt(), &mut h);
    set(7,7, -DMat::identity(n_e, n_e), &mut h);

    let mut p_mat = DMat::zeros(mc + n_u, total);
    p_mat.view_mut((0, off(2)), (mc, mc)).copy_from(&DMat::identity(mc, mc));
    p_mat.view_mut((mc, off(0)), (n_u, n)).copy_from(&s.b_2s.transpose());
    p_mat.view_mut((mc, off(1)), (n_u, m)).copy_from(&s.b_2p.transpose());
    p_mat.view_mut((mc, off(7)), (n_u, n_e)).copy_from(&(s.d_12.transpose() / b.sqrt()));
    let mut q_mat = DMat::zeros(mc + n, total);
    q_mat.view_mut((0, off(5)), (mc, mc)).copy_from(&DMat::identity(mc, mc));
    q_mat.view_mut((mc, off(3)), (n, n)).copy_from(&DMat::identity(n, n));

    let np = orthonormal_kernel_basis(&p_mat, 1e-10);
    let nq = orthonormal_kernel_basis(&q_mat, 1e-10);
    let ep = sym_eig(&(np.transpose() * &h * &np)).0;
    let eq = sym_eig(&(nq.transpose() * &h * &nq)).0;
    eprintln!("elimination checks: max eig P-side {:.4e}, Q-side {:.4e} (need < 0)", ep.max(), eq.max());
    let _ = (hstack, vstack);

    // Solve the reconstruction program directly with diagnostics.
    let mut prog = numlin::LmiProgram::new();
    let j_var = prog.var("J", numlin::VarShape::Rect(mc + n_u, mc + n));
    let tau = prog.scalar("tau");
    let j_expr = prog.var_expr(j_var);
    let sym_part = j_expr.lmul(&p_mat.transpose()).rmul(&q_mat).plus_transpose();
    let lhs = numlin::AffineExpr::constant(h.clone()).add(&sym_part);
    prog.require_nsd("reconstruction", lhs).unwrap();
    let bound = numlin::AffineExpr::vstack(&[
        numlin::AffineExpr::hstack(&[prog.scalar_times_identity(tau, mc + n_u), prog.var_expr(j_var)]),
        numlin::AffineExpr::hstack(&[prog.var_expr(j_var).transpose(), prog.scalar_times_identity(tau, mc + n)]),
    ]);
    prog.require_psd("gain bound", bound).unwrap();
    prog.objective_scalar(tau, 1.0);
    let sol = numlin::solve_lmi_program(&prog, 1e-7).unwrap();
    eprintln!("J solve: status {:?} iters {} kkt {:?}", sol.status, sol.iterations, sol.kkt);
    if sol.farkas.is_some() { eprintln!("  -> claims infeasible, certificate quality {:?}", sol.farkas.as_ref().map(|f| f.constraint_violation)); }
    let j = sol.value(&prog, j_var);
    let back = &h + p_mat.transpose() * &j * &q_mat + q_mat.transpose() * j.transpose() * &p_mat;
    eprintln!("achieved max eig of closed form: {:.4e}", sym_eig(&back).0.max());
}
// extended diagnostics appended by a second main-like function is not possible;
