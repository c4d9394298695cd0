//! Synthesis validation: infeasibility of uncontrollable unstable plants,
//! cross-method agreement between the scheduled and LTI routes, Monte-Carlo
//! certificate soundness on the closed loop, horizon monotonicity, and the
//! output-feedback feasibility consistency check.

use initset::EllipsoidPair;
use lftcore::{
    assemble_lft, close_loop, simulate_lft, AssembleOptions, EventuallyPeriodicLft, LftTimeStep,
};
use liftlearn::{InputMode, LiftedLpvModel, TrainableModel};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use synth::{
    initial_set_factor, output_feedback_feasibility, reconstruct_controller, synthesize_lti,
    synthesize_nslpv, InitialSet, ReconstructOptions, SynthError, SynthOptions,
};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// Small scheduled plant from a hand-made lifted model (shared channel).
fn small_model(rng: &mut StdRng, p: usize, stable_scale: f64) -> LiftedLpvModel {
    let mut m = TrainableModel::init(
        2,
        3,
        p,
        1,
        1,
        &[4],
        InputMode::Shared,
        0.02,
        DMat::identity(2, 2) * 4.0,
        rng,
    )
    .finish(vec![(-1.0, 1.0); p], vec![0.2; p]);
    m.a = DMat::from_fn(3, 3, |_, _| rng.gen_range(-0.5..0.5)) * stable_scale;
    for b in &mut m.b {
        *b = DMat::from_fn(3, 1, |_, _| rng.gen_range(-0.6..0.6));
    }
    m.q_matrix = DMat::identity(1, 1) * 2.0;
    m
}

fn pair_for(model: &LiftedLpvModel) -> EllipsoidPair {
    EllipsoidPair {
        p: model.p_matrix.clone(),
        q: model.q_matrix.clone(),
    }
}

#[test]
fn uncontrollable_unstable_plant_is_infeasible() {
    // No control authority anywhere and an unstable mode.
    let n = 2;
    let step = LftTimeStep {
        a_ss: DMat::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.4]),
        a_sp: DMat::zeros(n, 0),
        a_ps: DMat::zeros(0, n),
        a_pp: DMat::zeros(0, 0),
        b_1s: DMat::from_row_slice(2, 1, &[1.0, 0.0]),
        b_1p: DMat::zeros(0, 1),
        b_2s: DMat::zeros(2, 1),
        b_2p: DMat::zeros(0, 1),
        c_1s: DMat::identity(2, 2),
        c_1p: DMat::zeros(2, 0),
        c_2s: DMat::identity(2, 2),
        c_2p: DMat::zeros(2, 0),
        d_11: DMat::zeros(2, 1),
        d_12: DMat::zeros(2, 1),
        d_21: DMat::zeros(2, 1),
        block_sizes: vec![],
    };
    let plant = EventuallyPeriodicLft::stationary(step).unwrap();
    let pair = EllipsoidPair {
        p: DMat::identity(1, 1),
        q: DMat::identity(1, 1),
    };
    let res = synthesize_nslpv(&plant, &pair, &SynthOptions::default());
    assert!(
        matches!(res, Err(SynthError::Infeasible { .. })),
        "expected infeasibility, got {res:?}"
    );
}

#[test]
fn scheduled_route_with_no_parameters_matches_lti_route() {
    let mut rng = StdRng::seed_from_u64(41);
    for trial in 0..5 {
        let model = small_model(&mut rng, 0, 1.0);
        let plant = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
        let pair = pair_for(&model);
        let nslpv = synthesize_nslpv(&plant, &pair, &SynthOptions::default()).unwrap();
        let lti = synthesize_lti(&plant, &InitialSet::Pair(pair), 1e-7).unwrap();
        let rel = (nslpv.gamma - lti.gamma).abs() / lti.gamma;
        assert!(
            rel < 0.01,
            "trial {trial}: scheduled {} vs lti {} ({rel:.4})",
            nslpv.gamma,
            lti.gamma
        );
    }
}

#[test]
fn lti_gain_stabilizes_scalar_unstable_plant() {
    // Scalar A = 2, B₀ = 1: any certified design must place |2 + K| < 1.
    let mut rng = StdRng::seed_from_u64(43);
    let mut model = small_model(&mut rng, 0, 1.0);
    model.n = 1;
    model.n_lift = 1;
    model.a = DMat::from_element(1, 1, 2.0);
    model.b = vec![DMat::from_element(1, 1, 1.0)];
    model.p_matrix = DMat::identity(1, 1);
    let plant = assemble_lft(&model, &[1.0, 1.0], &AssembleOptions::default()).unwrap();
    let lti = synthesize_lti(&plant, &InitialSet::Single(DMat::identity(1, 1)), 1e-7).unwrap();
    let acl = 2.0 + lti.gain[(0, 0)];
    assert!(acl.abs() < 1.0, "closed loop unstable: {acl}");
    assert!(lti.gamma.is_finite());
}

/// Monte-Carlo certificate soundness on the closed loop.
fn check_soundness(
    plant: &EventuallyPeriodicLft,
    ctrl: &lftcore::StaticNslpvController,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let closed = close_loop(plant, ctrl).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let p = plant.n_params();
    let n = plant.n_state();
    let n_d = plant.n_d();
    let horizon = 220;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let deltas: Vec<DVec> = (0..horizon)
            .map(|_| DVec::from_fn(p, |_, _| rng.gen_range(-1.0f64..1.0)))
            .collect();
        // Unit-energy disturbance concentrated on a random prefix.
        let support = rng.gen_range(1..40);
        let mut ds: Vec<DVec> = (0..horizon)
            .map(|k| {
                if k < support {
                    DVec::from_fn(n_d, |_, _| rng.gen_range(-1.0f64..1.0))
                } else {
                    DVec::zeros(n_d)
                }
            })
            .collect();
        let energy: f64 = ds.iter().map(|d| d.norm_squared()).sum();
        if energy > 0.0 {
            let s = 1.0 / energy.sqrt();
            for d in &mut ds {
                *d *= s;
            }
        }
        // Initial state on the boundary of the admissible set.
        let xi = DVec::from_fn(n, |_, _| rng.gen_range(-1.0f64..1.0));
        let xi = &xi / xi.norm();
        // x₀ = Γξ with ‖ξᵢ‖ ≤ 1 per partition; the full-ball sample is
        // conservative feasible (each sub-block norm ≤ 1).
        let gamma_factor = initial_set_factor(&EllipsoidPair {
            p: DMat::identity(2, 2) * 0.25_f64.recip(),
            q: DMat::identity(1, 1) / 2.0,
        })
        .unwrap();
        let x0 = &gamma_factor * xi;
        let out = simulate_lft(&closed.system, &deltas, &ds, None, &x0).unwrap();
        let e_energy: f64 = out.perf.iter().map(|e| e.norm_squared()).sum();
        worst = worst.max(e_energy.sqrt());
    }
    worst / gamma
}

#[test]
fn reconstructed_controller_certificate_is_sound() {
    let mut rng = StdRng::seed_from_u64(47);
    let model = small_model(&mut rng, 1, 1.0);
    let plant = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    let pair = pair_for(&model);
    let factor = initial_set_factor(&pair).unwrap();
    let cert = synthesize_nslpv(&plant, &pair, &SynthOptions { h_bar: 1, ..Default::default() })
        .unwrap();
    let (ctrl, cert_used) = reconstruct_controller(
        &plant,
        &cert,
        &factor,
        2,
        &ReconstructOptions::default(),
        model.bounds.clone(),
    )
    .unwrap();
    assert_eq!(ctrl.h_bar, 1);
    // Full-rank controller channels under the margin-solved couplings.
    for step in &ctrl.steps {
        assert_eq!(step.block_sizes, plant.at(0).block_sizes);
    }
    let ratio = check_soundness(&plant, &ctrl, cert_used.gamma, 500, 1234);
    assert!(
        ratio < 1.0,
        "certificate violated: worst ‖e‖/γ = {ratio:.4}"
    );
    eprintln!("soundness margin: worst ‖e‖/γ = {ratio:.4}");
}

#[test]
fn level_is_monotone_in_the_horizon() {
    let mut rng = StdRng::seed_from_u64(53);
    let model = small_model(&mut rng, 1, 1.0);
    let plant = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    let pair = pair_for(&model);
    let g0 = synthesize_nslpv(&plant, &pair, &SynthOptions { h_bar: 0, ..Default::default() })
        .unwrap()
        .gamma;
    let g2 = synthesize_nslpv(&plant, &pair, &SynthOptions { h_bar: 2, ..Default::default() })
        .unwrap()
        .gamma;
    assert!(
        g2 <= g0 * (1.0 + 1e-3),
        "longer horizon must not hurt: γ(0) = {g0}, γ(2) = {g2}"
    );
}

#[test]
fn output_feedback_feasibility_matches_state_feedback_route() {
    let mut rng = StdRng::seed_from_u64(59);
    let model = small_model(&mut rng, 1, 1.0);
    let plant = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    let pair = pair_for(&model);
    let factor = initial_set_factor(&pair).unwrap();
    let sf = synthesize_nslpv(&plant, &pair, &SynthOptions::default()).unwrap();
    let of = output_feedback_feasibility(&plant, &factor, &[2, 1], 0, 1e-7).unwrap();
    let rel = (sf.gamma - of.gamma).abs() / sf.gamma;
    assert!(
        rel < 0.01,
        "state-feedback {} vs output-feedback {} ({rel:.4})",
        sf.gamma,
        of.gamma
    );
}

#[test]
fn degenerate_partition_accepts_single_ellipsoid() {
    let mut rng = StdRng::seed_from_u64(61);
    let model = small_model(&mut rng, 1, 0.9);
    let plant = assemble_lft(&model, &[1.0, 1.0, 1.0], &AssembleOptions::default()).unwrap();
    let gamma_factor = DMat::identity(3, 3) * 0.3;
    let of = output_feedback_feasibility(&plant, &gamma_factor, &[3], 0, 1e-7).unwrap();
    assert!(of.gamma.is_finite());
    assert_eq!(of.f1.len(), 1);
}
