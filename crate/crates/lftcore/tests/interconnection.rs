//! Extensional correctness of assembly, normalization, and interconnection:
//! every construct is checked against an independent simulation route.

use lftcore::{
    assemble_lft, close_loop, delta_matrix, load_controller, load_lft, normalize_params,
    save_controller, save_lft, simulate_lft, AssembleOptions, ControllerStep,
    EventuallyPeriodicLft, LftTimeStep, StaticNslpvController,
};
use liftlearn::{InputMode, LiftedLpvModel, TrainableModel};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

fn random_lifted_model(rng: &mut StdRng, mode: InputMode, p: usize) -> LiftedLpvModel {
    let mut m = TrainableModel::init(2, 4, p, 1, 1, &[6], mode, 0.02, DMat::identity(2, 2), rng)
        .finish(vec![(-1.0, 1.0); p], vec![0.1; p]);
    m.a = DMat::from_fn(4, 4, |_, _| rng.gen_range(-0.3..0.3));
    let in_dim = m.input_dim();
    for b in &mut m.b {
        *b = DMat::from_fn(4, in_dim, |_, _| rng.gen_range(-0.5..0.5));
    }
    m
}

/// Direct LPV rollout with measurement noise channels ignored.
fn lpv_rollout(model: &LiftedLpvModel, z0: &DVec, deltas: &[DVec], inputs: &[(DVec, DVec)]) -> Vec<DVec> {
    let mut z = z0.clone();
    let mut out = vec![z.clone()];
    for (k, (u, v)) in inputs.iter().enumerate() {
        let ut = liftlearn::model_input(model.input_mode, u, v);
        let mut next = &model.a * &z + &model.b[0] * &ut;
        for j in 0..model.p {
            next += &model.b[j + 1] * &ut * deltas[k][j];
        }
        z = next;
        out.push(z.clone());
    }
    out
}

#[test]
fn lti_model_assembles_without_uncertainty_channels() {
    let mut rng = StdRng::seed_from_u64(1);
    let model = random_lifted_model(&mut rng, InputMode::Separate, 0);
    let g = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    assert_eq!(g.at(0).m(), 0);
    assert_eq!(g.at(0).a_sp.ncols(), 0);
    assert_eq!(g.n_d(), 1); // process noise only in the synthesis view
    assert_eq!(g.n_e(), 3);
}

#[test]
fn performance_output_structure_matches_unit_penalties() {
    let mut rng = StdRng::seed_from_u64(2);
    let model = random_lifted_model(&mut rng, InputMode::Separate, 1);
    let g = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    let s = g.at(0);
    // Top block of C₁s is the projection [I 0]; bottom of D₁₂ is I.
    for r in 0..2 {
        for c in 0..4 {
            let want = if r == c { 1.0 } else { 0.0 };
            assert_eq!(s.c_1s[(r, c)], want);
        }
    }
    assert_eq!(s.d_12[(2, 0)], 1.0);
    assert_eq!(s.c_2s.clone(), DMat::identity(4, 4));
}

#[test]
fn lft_simulation_matches_direct_lpv_rollout() {
    for (seed, mode) in [(3u64, InputMode::Separate), (4, InputMode::Shared)] {
        let mut rng = StdRng::seed_from_u64(seed);
        let model = random_lifted_model(&mut rng, mode, 2);
        let g = assemble_lft(&model, &[1.0; 3], &AssembleOptions::default()).unwrap();
        let steps = 50;
        let deltas: Vec<DVec> = (0..steps)
            .map(|_| DVec::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let inputs: Vec<(DVec, DVec)> = (0..steps)
            .map(|_| {
                (
                    DVec::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)),
                    DVec::from_fn(1, |_, _| rng.gen_range(-0.5..0.5)),
                )
            })
            .collect();
        let z0 = DVec::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let direct = lpv_rollout(&model, &z0, &deltas, &inputs);
        // In the synthesis view d = v and u enters through the control port.
        let ds: Vec<DVec> = inputs.iter().map(|(_, v)| v.clone()).collect();
        let us: Vec<DVec> = inputs.iter().map(|(u, _)| u.clone()).collect();
        let sim = simulate_lft(&g, &deltas, &ds, Some(&us), &z0).unwrap();
        for (a, b) in direct.iter().zip(sim.states.iter()) {
            assert!((a - b).norm() <= 1e-10, "LFT/LPV rollout mismatch");
        }
    }
}

#[test]
fn normalization_preserves_behavior_and_rescales_matrices() {
    let mut rng = StdRng::seed_from_u64(5);
    // Bounds [0, 4]: center 2, radius 2.
    let mut model = random_lifted_model(&mut rng, InputMode::Shared, 1);
    model.bounds = vec![(0.0, 4.0)];
    let norm = normalize_params(&model);
    assert_eq!(norm.bounds, vec![(-1.0, 1.0)]);
    // Rollout equivalence: raw δ in [0,4] maps to normalized (δ−2)/2.
    let steps = 30;
    let raw_deltas: Vec<DVec> = (0..steps)
        .map(|_| DVec::from_fn(1, |_, _| rng.gen_range(0.0..4.0)))
        .collect();
    let norm_deltas: Vec<DVec> = raw_deltas.iter().map(|d| (d - DVec::from_element(1, 2.0)) / 2.0).collect();
    let inputs: Vec<(DVec, DVec)> = (0..steps)
        .map(|_| {
            (
                DVec::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)),
                DVec::from_fn(1, |_, _| rng.gen_range(-0.5..0.5)),
            )
        })
        .collect();
    let z0 = DVec::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
    let a = lpv_rollout(&model, &z0, &raw_deltas, &inputs);
    let b = lpv_rollout(&norm, &z0, &norm_deltas, &inputs);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() <= 1e-10);
    }

    // Symmetric bounds [−2, 2]: input matrix doubles, nominal unchanged.
    let mut sym = random_lifted_model(&mut rng, InputMode::Shared, 1);
    sym.bounds = vec![(-2.0, 2.0)];
    let n2 = normalize_params(&sym);
    assert!((&n2.b[0] - &sym.b[0]).amax() < 1e-14);
    assert!((&n2.b[1] - &sym.b[1] * 2.0).amax() < 1e-14);

    // Degenerate bounds: parameter dropped, center absorbed.
    let mut degen = random_lifted_model(&mut rng, InputMode::Shared, 1);
    degen.bounds = vec![(0.7, 0.7)];
    let n3 = normalize_params(&degen);
    assert_eq!(n3.p, 0);
    assert!((&n3.b[0] - (&degen.b[0] + &degen.b[1] * 0.7)).amax() < 1e-14);
}

fn random_plant(rng: &mut StdRng, p: usize, m_i: usize, n: usize) -> EventuallyPeriodicLft {
    let m = p * m_i;
    let (n_d, n_u, n_e) = (2, 1, 2);
    let mut mk = |r: usize, c: usize, s: f64| DMat::from_fn(r, c, |_, _| rng.gen_range(-s..s));
    let step = LftTimeStep {
        a_ss: mk(n, n, 0.4),
        a_sp: mk(n, m, 0.3),
        a_ps: mk(m, n, 0.3),
        a_pp: mk(m, m, 0.2),
        b_1s: mk(n, n_d, 0.4),
        b_1p: mk(m, n_d, 0.2),
        b_2s: mk(n, n_u, 0.5),
        b_2p: mk(m, n_u, 0.2),
        c_1s: mk(n_e, n, 0.5),
        c_1p: mk(n_e, m, 0.2),
        c_2s: DMat::identity(n, n),
        c_2p: DMat::zeros(n, m),
        d_11: mk(n_e, n_d, 0.2),
        d_12: mk(n_e, n_u, 0.3),
        d_21: DMat::zeros(n, n_d),
        block_sizes: vec![m_i; p],
    };
    EventuallyPeriodicLft::stationary(step).unwrap()
}

fn random_controller(rng: &mut StdRng, p: usize, m_ci: usize, n_y: usize, n_u: usize, h_bar: usize) -> StaticNslpvController {
    let mc = p * m_ci;
    let steps = (0..=h_bar)
        .map(|_| ControllerStep {
            a_pp: DMat::from_fn(mc, mc, |_, _| rng.gen_range(-0.2..0.2)),
            b_p: DMat::from_fn(mc, n_y, |_, _| rng.gen_range(-0.3..0.3)),
            c_p: DMat::from_fn(n_u, mc, |_, _| rng.gen_range(-0.3..0.3)),
            d: DMat::from_fn(n_u, n_y, |_, _| rng.gen_range(-0.3..0.3)),
            block_sizes: vec![m_ci; p],
        })
        .collect();
    StaticNslpvController {
        h_bar,
        steps,
        bounds: vec![(-1.0, 1.0); p],
    }
}

/// Coupled simulation of plant and controller solving the joint uncertainty
/// loop exactly — the independent oracle for `close_loop`.
fn co_simulate(
    g: &EventuallyPeriodicLft,
    k: &StaticNslpvController,
    deltas: &[DVec],
    ds: &[DVec],
    x0: &DVec,
) -> (Vec<DVec>, Vec<DVec>) {
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut perf = Vec::new();
    for step in 0..deltas.len() {
        let s = g.at(step);
        let c = k.at(step);
        let m_g = s.m();
        let m_c = c.m();
        let dm_g = delta_matrix(&s.block_sizes, &deltas[step]);
        let dm_c = delta_matrix(&c.block_sizes, &deltas[step]);
        let d = &ds[step];
        // Unknown w = (ϑ, ϑc); eliminate u and y first:
        //   y = C2s x + C2p ϑ + D21 d
        //   u = C_p ϑc + D y
        //   ϑ = Δ (A_ps x + A_pp ϑ + B1p d + B2p u)
        //   ϑc = Δc (A_pp^c ϑc + B_p y)
        let nn = m_g + m_c;
        let mut lhs = DMat::identity(nn, nn);
        let mut rhs = DVec::zeros(nn);
        // Plant rows.
        let coef_theta = &dm_g * (&s.a_pp + &s.b_2p * &c.d * &s.c_2p);
        let coef_thetac = &dm_g * (&s.b_2p * &c.c_p);
        let base = &dm_g
            * (&s.a_ps * &x
                + &s.b_1p * d
                + &s.b_2p * (&c.d * (&s.c_2s * &x + &s.d_21 * d)));
        for r in 0..m_g {
            for cc in 0..m_g {
                lhs[(r, cc)] -= coef_theta[(r, cc)];
            }
            for cc in 0..m_c {
                lhs[(r, m_g + cc)] -= coef_thetac[(r, cc)];
            }
            rhs[r] = base[r];
        }
        // Controller rows.
        let coef_c_theta = &dm_c * (&c.b_p * &s.c_2p);
        let coef_c_c = &dm_c * &c.a_pp;
        let base_c = &dm_c * (&c.b_p * (&s.c_2s * &x + &s.d_21 * d));
        for r in 0..m_c {
            for cc in 0..m_g {
                lhs[(m_g + r, cc)] -= coef_c_theta[(r, cc)];
            }
            for cc in 0..m_c {
                lhs[(m_g + r, m_g + cc)] -= coef_c_c[(r, cc)];
            }
            rhs[m_g + r] = base_c[r];
        }
        let w = lhs.lu().solve(&rhs).expect("well-posed interconnection");
        let theta = w.rows(0, m_g).into_owned();
        let theta_c = w.rows(m_g, m_c).into_owned();
        let y = &s.c_2s * &x + &s.c_2p * &theta + &s.d_21 * d;
        let u = &c.c_p * &theta_c + &c.d * &y;
        let e = &s.c_1s * &x + &s.c_1p * &theta + &s.d_11 * d + &s.d_12 * &u;
        x = &s.a_ss * &x + &s.a_sp * &theta + &s.b_1s * d + &s.b_2s * &u;
        states.push(x.clone());
        perf.push(e);
    }
    (states, perf)
}

#[test]
fn closed_loop_matches_co_simulation() {
    let mut rng = StdRng::seed_from_u64(6);
    for trial in 0..20 {
        let p = 1 + trial % 2;
        let g = random_plant(&mut rng, p, 2, 3);
        let k = random_controller(&mut rng, p, 1, 3, 1, trial % 3);
        let closed = close_loop(&g, &k).unwrap();
        let steps = 100;
        let deltas: Vec<DVec> = (0..steps)
            .map(|_| DVec::from_fn(p, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let ds: Vec<DVec> = (0..steps)
            .map(|_| DVec::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let x0 = DVec::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let (states, perf) = co_simulate(&g, &k, &deltas, &ds, &x0);
        let sim = simulate_lft(&closed.system, &deltas, &ds, None, &x0).unwrap();
        for (a, b) in states.iter().zip(&sim.states) {
            assert!((a - b).norm() <= 1e-10, "trial {trial}: state mismatch");
        }
        for (a, b) in perf.iter().zip(&sim.perf) {
            assert!((a - b).norm() <= 1e-10, "trial {trial}: output mismatch");
        }
    }
}

#[test]
fn static_gain_closure_matches_textbook_formula() {
    let mut rng = StdRng::seed_from_u64(7);
    let g = random_plant(&mut rng, 1, 2, 3);
    let dk = DMat::from_fn(1, 3, |_, _| rng.gen_range(-0.4..0.4));
    let k = StaticNslpvController {
        h_bar: 0,
        steps: vec![ControllerStep::static_gain(dk.clone(), 1)],
        bounds: vec![(-1.0, 1.0)],
    };
    let closed = close_loop(&g, &k).unwrap();
    let s = g.at(0);
    let m = closed.system.at(0);
    assert!((&m.a_ss - (&s.a_ss + &s.b_2s * &dk * &s.c_2s)).amax() < 1e-14);
    assert!((&m.c_1s - (&s.c_1s + &s.d_12 * &dk * &s.c_2s)).amax() < 1e-14);
    assert_eq!(m.block_sizes, vec![2]); // controller adds no channels
}

#[test]
fn zero_controller_reproduces_open_loop() {
    let mut rng = StdRng::seed_from_u64(8);
    let g = random_plant(&mut rng, 1, 2, 3);
    let k = StaticNslpvController {
        h_bar: 0,
        steps: vec![ControllerStep::static_gain(DMat::zeros(1, 3), 1)],
        bounds: vec![(-1.0, 1.0)],
    };
    let closed = close_loop(&g, &k).unwrap();
    let steps = 40;
    let deltas: Vec<DVec> = (0..steps)
        .map(|_| DVec::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let ds: Vec<DVec> = (0..steps)
        .map(|_| DVec::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let x0 = DVec::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
    let open = simulate_lft(&g, &deltas, &ds, None, &x0).unwrap();
    let clo = simulate_lft(&closed.system, &deltas, &ds, None, &x0).unwrap();
    for (a, b) in open.states.iter().zip(&clo.states) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn controller_evaluation_matches_its_own_lft_recursion() {
    let mut rng = StdRng::seed_from_u64(9);
    let k = random_controller(&mut rng, 2, 2, 3, 1, 1);
    let delta = DVec::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let y = DVec::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
    for step in [0usize, 1, 5] {
        let u = k.eval(step, &delta, &y).unwrap();
        // Oracle: solve the controller loop directly.
        let c = k.at(step);
        let dm = delta_matrix(&c.block_sizes, &delta);
        let mc = c.m();
        let lhs = DMat::identity(mc, mc) - &dm * &c.a_pp;
        let theta = lhs.lu().solve(&(&dm * (&c.b_p * &y))).unwrap();
        let want = &c.c_p * theta + &c.d * &y;
        assert!((u - want).norm() < 1e-12);
    }
    // Zero scheduling collapses to the static gain.
    let u0 = k.eval(0, &DVec::zeros(2), &y).unwrap();
    assert!((u0 - &k.at(0).d * &y).norm() < 1e-14);
}

#[test]
fn accessors_respect_eventual_periodicity() {
    let mut rng = StdRng::seed_from_u64(10);
    let g0 = random_plant(&mut rng, 1, 1, 2);
    let g1 = random_plant(&mut rng, 1, 1, 2);
    let g2 = random_plant(&mut rng, 1, 1, 2);
    let sys = EventuallyPeriodicLft::new(
        1,
        2,
        vec![g0.at(0).clone(), g1.at(0).clone(), g2.at(0).clone()],
    )
    .unwrap();
    for k in 0..20 {
        let expect = if k < 1 {
            0
        } else {
            1 + (k - 1) % 2
        };
        assert_eq!(sys.at(k), &sys.steps[expect], "k = {k}");
    }
}

#[test]
fn lft_and_controller_files_round_trip() {
    let mut rng = StdRng::seed_from_u64(11);
    let g = random_plant(&mut rng, 2, 2, 3);
    let k = random_controller(&mut rng, 2, 1, 3, 1, 2);
    let dir = tempfile::tempdir().unwrap();
    let gp = dir.path().join("plant.lft");
    let kp = dir.path().join("ctl.bin");
    save_lft(&g, &gp, &[("hash".into(), "h1".into())]).unwrap();
    save_controller(&k, &kp, &[]).unwrap();
    let (g2, meta) = load_lft(&gp).unwrap();
    let (k2, _) = load_controller(&kp).unwrap();
    assert_eq!(g, g2);
    assert_eq!(k, k2);
    assert_eq!(meta[0].1, "h1");
    // Byte-identical re-serialization.
    let gp2 = dir.path().join("plant2.lft");
    save_lft(&g2, &gp2, &meta).unwrap();
    assert_eq!(std::fs::read(&gp).unwrap(), std::fs::read(&gp2).unwrap());
}
