//! Analysis validation: tightness against the frequency-sweep oracle on
//! nominal LTI fixtures, analytic worst cases, well-posedness reporting,
//! augmented-system structure, and the dissipation inequality replayed
//! along trajectories.

use iqc::{
    analyze, build_augmented_step, l2_gain_oracle, signal_iqc_band, well_posed,
    AnalysisOptions, PsiStep, SignalMultiplier, UncertaintyMultiplier, WellPosedness,
};
use lftcore::{simulate_lft, EventuallyPeriodicLft, LftTimeStep};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// Stationary analysis-form system (no control/measurement channels).
#[allow(clippy::too_many_arguments)]
fn analysis_system(
    a: DMat,
    b1: DMat,
    b2: DMat,
    c1: DMat,
    d11: DMat,
    d12: DMat,
    c2: DMat,
    d21: DMat,
    d22: DMat,
    block_sizes: Vec<usize>,
) -> EventuallyPeriodicLft {
    let n = a.nrows();
    let m: usize = block_sizes.iter().sum();
    let n_d = b2.ncols();
    let n_e = c2.nrows();
    let step = LftTimeStep {
        a_ss: a,
        a_sp: b1,
        a_ps: c1,
        a_pp: d11,
        b_1s: b2,
        b_1p: d12,
        b_2s: DMat::zeros(n, 0),
        b_2p: DMat::zeros(m, 0),
        c_1s: c2,
        c_1p: d21,
        c_2s: DMat::zeros(0, n),
        c_2p: DMat::zeros(0, m),
        d_11: d22,
        d_12: DMat::zeros(n_e, 0),
        d_21: DMat::zeros(0, n_d),
        block_sizes,
    };
    EventuallyPeriodicLft::stationary(step).unwrap()
}

fn lti_system(a: DMat, b: DMat, c: DMat, d: DMat) -> EventuallyPeriodicLft {
    let n = a.nrows();
    let n_d = b.ncols();
    let n_e = c.nrows();
    analysis_system(
        a,
        DMat::zeros(n, 0),
        b,
        DMat::zeros(0, n),
        DMat::zeros(0, 0),
        DMat::zeros(0, n_d),
        c,
        DMat::zeros(n_e, 0),
        d,
        vec![],
    )
}

fn analyze_nominal(sys: &EventuallyPeriodicLft) -> f64 {
    let gamma = DMat::zeros(sys.n_state(), 0);
    analyze(
        sys,
        &gamma,
        &[],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::None,
        &AnalysisOptions::default(),
    )
    .unwrap()
    .gamma
}

#[test]
fn nominal_lti_levels_match_the_gain_oracle() {
    let fixtures: Vec<(DMat, DMat, DMat, DMat)> = vec![
        // 1/(z − 0.5) → 2.0
        (
            DMat::from_element(1, 1, 0.5),
            DMat::from_element(1, 1, 1.0),
            DMat::from_element(1, 1, 1.0),
            DMat::zeros(1, 1),
        ),
        // Pure delay → 1.
        (
            DMat::zeros(1, 1),
            DMat::from_element(1, 1, 1.0),
            DMat::from_element(1, 1, 1.0),
            DMat::zeros(1, 1),
        ),
        // Feedthrough-dominated SISO system.
        (
            DMat::from_element(1, 1, -0.3),
            DMat::from_element(1, 1, 0.4),
            DMat::from_element(1, 1, 1.0),
            DMat::from_element(1, 1, 3.0),
        ),
        // Two-state resonance.
        (
            DMat::from_row_slice(2, 2, &[2.0 * 0.9 * 0.7f64.cos(), -0.81, 1.0, 0.0]),
            DMat::from_row_slice(2, 1, &[1.0, 0.0]),
            DMat::from_row_slice(1, 2, &[0.0, 0.5]),
            DMat::zeros(1, 1),
        ),
        // Two-input two-output coupled system.
        (
            DMat::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.4]),
            DMat::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]),
            DMat::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]),
            DMat::zeros(2, 2),
        ),
    ];
    for (i, (a, b, c, d)) in fixtures.iter().enumerate() {
        let t0 = std::time::Instant::now();
        let oracle = l2_gain_oracle(a, b, c, d).unwrap();
        let sys = lti_system(a.clone(), b.clone(), c.clone(), d.clone());
        let level = analyze_nominal(&sys);
        let rel = (level - oracle).abs() / oracle;
        assert!(
            rel <= 0.02,
            "fixture {i}: analysis {level:.5} vs oracle {oracle:.5} ({rel:.4})"
        );
        assert!(
            t0.elapsed().as_secs_f64() < 30.0,
            "fixture {i} exceeded the runtime budget"
        );
        // The level is an upper bound up to solver tolerance.
        assert!(level >= oracle * (1.0 - 2e-3), "level below the true gain");
    }
}

#[test]
fn memoryless_uncertain_gain_is_one() {
    // e = ϑ, φ = d, one scalar uncertainty block: worst case δ ≡ 1 gives
    // unit gain.
    let sys = analysis_system(
        DMat::zeros(0, 0),
        DMat::zeros(0, 1),
        DMat::zeros(0, 1),
        DMat::zeros(1, 0),
        DMat::zeros(1, 1),
        DMat::identity(1, 1),
        DMat::zeros(1, 0),
        DMat::identity(1, 1),
        DMat::zeros(1, 1),
        vec![1],
    );
    let gamma = analyze(
        &sys,
        &DMat::zeros(0, 0),
        &[],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::None,
        &AnalysisOptions::default(),
    )
    .unwrap()
    .gamma;
    assert!(
        (1.0..1.02).contains(&gamma),
        "memoryless worst case must be ≈1, got {gamma}"
    );
}

#[test]
fn pure_initial_condition_level_is_the_factor_norm() {
    // x⁺ = 0, e = x, no disturbances: sup ‖e‖ = σ_max(Γ).
    let gamma_factor = DMat::from_row_slice(2, 2, &[1.2, 0.3, 0.0, 0.4]);
    let sys = lti_system(
        DMat::zeros(2, 2),
        DMat::zeros(2, 1),
        DMat::identity(2, 2),
        DMat::zeros(2, 1),
    );
    let cert = analyze(
        &sys,
        &gamma_factor,
        &[2],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::None,
        &AnalysisOptions::default(),
    )
    .unwrap();
    let want = numlin::sigma_max(&gamma_factor);
    let rel = (cert.gamma - want).abs() / want;
    assert!(rel <= 0.02, "levels: {} vs σmax {} ({rel:.4})", cert.gamma, want);
}

#[test]
fn wellposedness_reporting_follows_the_feedthrough_norm() {
    let mk = |gain: f64| {
        analysis_system(
            DMat::zeros(1, 1),
            DMat::from_element(1, 1, 0.2),
            DMat::from_element(1, 1, 1.0),
            DMat::from_element(1, 1, 0.3),
            DMat::from_element(1, 1, gain),
            DMat::zeros(1, 1),
            DMat::from_element(1, 1, 1.0),
            DMat::zeros(1, 1),
            DMat::zeros(1, 1),
            vec![1],
        )
    };
    assert!(matches!(
        well_posed(&mk(0.0)),
        WellPosedness::Certified { .. }
    ));
    assert!(matches!(
        well_posed(&mk(0.5)),
        WellPosedness::Certified { .. }
    ));
    match well_posed(&mk(1.0)) {
        WellPosedness::UnverifiedWithSamples {
            grid_points_per_axis,
            min_abs_det,
        } => {
            assert_eq!(grid_points_per_axis, 17);
            assert!(min_abs_det < 1e-9, "boundary loop has a singular sample");
        }
        other => panic!("expected sampled verdict, got {other:?}"),
    }
}

#[test]
fn augmented_identity_factor_collapses_to_the_plant() {
    let mut rng = StdRng::seed_from_u64(5);
    let sys = analysis_system(
        DMat::from_fn(2, 2, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::from_fn(2, 1, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::from_fn(2, 1, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::from_fn(1, 2, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::zeros(1, 1),
        DMat::from_fn(1, 1, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::from_fn(1, 2, |_, _| rng.gen_range(-0.4..0.4)),
        DMat::zeros(1, 1),
        DMat::zeros(1, 1),
        vec![1],
    );
    let s = sys.at(0);
    let aug = build_augmented_step(s, &PsiStep::identity(1), None).unwrap();
    assert_eq!(aug.a, s.a_ss);
    // r¹ row equals the φ equation, r² row is the ϑ passthrough.
    assert_eq!(aug.c.row(0).clone_owned(), s.a_ps.row(0).clone_owned());
    assert_eq!(aug.d[(0, 0)], s.a_pp[(0, 0)]);
    assert_eq!(aug.d[(2, 0)], 1.0);
    // d passthrough row.
    assert_eq!(aug.d[(3, 1)], 1.0);
}

#[test]
fn augmented_one_state_filter_matches_hand_expansion() {
    // M: 1 state, 1 uncertainty channel, 1 disturbance, 1 output;
    // Ψ halves are one-state lags on φ and ϑ.
    let sys = analysis_system(
        DMat::from_element(1, 1, 0.5),
        DMat::from_element(1, 1, 0.2),
        DMat::from_element(1, 1, 0.3),
        DMat::from_element(1, 1, 0.7),
        DMat::from_element(1, 1, 0.1),
        DMat::from_element(1, 1, 0.4),
        DMat::from_element(1, 1, 1.0),
        DMat::from_element(1, 1, 0.0),
        DMat::from_element(1, 1, 0.0),
        vec![1],
    );
    let m = iqc::custom_multiplier(
        iqc::LtvFilter::basis_bank(1, 0.6, 2),
        iqc::LtvFilter::basis_bank(1, 0.6, 2),
        DMat::identity(2, 2),
        DMat::zeros(2, 2),
        -DMat::identity(2, 2),
    )
    .unwrap();
    let psi = PsiStep::from_custom(&m, 0);
    let aug = build_augmented_step(sys.at(0), &psi, None).unwrap();
    // State: (x_M, x_ψ1, x_ψ2).
    assert_eq!(aug.n_state, 3);
    // x_ψ1⁺ = 0.6 x_ψ1 + φ = 0.6 x_ψ1 + (0.7 x + 0.1 ϑ + 0.4 d).
    assert_eq!(aug.a[(1, 0)], 0.7);
    assert_eq!(aug.a[(1, 1)], 0.6);
    assert_eq!(aug.b[(1, 0)], 0.1);
    assert_eq!(aug.b[(1, 1)], 0.4);
    // x_ψ2⁺ = 0.6 x_ψ2 + ϑ.
    assert_eq!(aug.a[(2, 2)], 0.6);
    assert_eq!(aug.b[(2, 0)], 1.0);
    // r¹ = (φ; x_ψ1), r² = (ϑ; x_ψ2).
    assert_eq!(aug.c[(0, 0)], 0.7);
    assert_eq!(aug.c[(1, 1)], 1.0);
    assert_eq!(aug.d[(2 + 1, 0)], 1.0); // r² first row: ϑ feedthrough
    assert_eq!(aug.c[(2 + 2, 2)], 1.0); // r² second row: x_ψ2
}

#[test]
fn scrambled_output_rows_break_the_middle_alignment() {
    // Negative structural test: permuting the augmented output rows without
    // permuting the middle matrix changes the quadratic form.
    let sys = analysis_system(
        DMat::from_element(1, 1, 0.5),
        DMat::from_element(1, 1, 0.2),
        DMat::from_element(1, 1, 0.3),
        DMat::from_element(1, 1, 0.7),
        DMat::zeros(1, 1),
        DMat::from_element(1, 1, 0.4),
        DMat::from_element(1, 1, 1.0),
        DMat::zeros(1, 1),
        DMat::zeros(1, 1),
        vec![1],
    );
    let aug = build_augmented_step(sys.at(0), &PsiStep::identity(1), None).unwrap();
    let rows = aug.c.nrows();
    let mut perm = DMat::zeros(rows, rows);
    // Swap the e row and the d row.
    perm[(0, 0)] = 1.0;
    perm[(1, 3)] = 1.0;
    perm[(2, 2)] = 1.0;
    perm[(3, 1)] = 1.0;
    let scrambled = &perm * &aug.c;
    assert_ne!(scrambled, aug.c);
    // A middle matrix built for the canonical order scores the two
    // differently on a generic vector.
    let middle = DMat::from_diagonal(&DVec::from_row_slice(&[1.0, 2.0, -1.0, -0.5]));
    let x = DVec::from_row_slice(&[0.9]);
    let v1 = (&aug.c * &x).transpose() * &middle * (&aug.c * &x);
    let v2 = (&scrambled * &x).transpose() * &middle * (&scrambled * &x);
    assert!((v1[(0, 0)] - v2[(0, 0)]).abs() > 1e-12);
}

#[test]
fn dissipation_inequality_holds_along_trajectories() {
    // Uncertain one-state system with modest coupling; replay the per-step
    // quadratic form of the certificate along simulated trajectories.
    let sys = analysis_system(
        DMat::from_element(1, 1, 0.6),
        DMat::from_element(1, 1, 0.3),
        DMat::from_element(1, 1, 0.5),
        DMat::from_element(1, 1, 0.4),
        DMat::zeros(1, 1),
        DMat::from_element(1, 1, 0.2),
        DMat::from_element(1, 1, 1.0),
        DMat::from_element(1, 1, 0.1),
        DMat::zeros(1, 1),
        vec![1],
    );
    let gamma_factor = DMat::from_element(1, 1, 0.5);
    let cert = analyze(
        &sys,
        &gamma_factor,
        &[1],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::None,
        &AnalysisOptions::default(),
    )
    .unwrap();
    assert!(cert.gamma.is_finite());
    for m in &cert.step_margins {
        assert!(*m > 0.0, "strict margin expected, got {m}");
    }

    // Replay: V(x⁺) − V(x) + r¹ᵀDr¹ − r²ᵀDr² + g eᵀe − f₂ dᵀd ≤ 0.
    // With the static multiplier, r¹ = φ and r² = ϑ. The scaling weights are
    // not exposed directly, so verify the telescoped consequence instead:
    // g‖e‖² ≤ f₂‖d‖² + x₀ᵀX̄x₀ over admissible trajectories.
    let mut rng = StdRng::seed_from_u64(17);
    let x = &cert.x_seq[0];
    for _ in 0..200 {
        let steps = 150;
        let deltas: Vec<DVec> = (0..steps)
            .map(|_| DVec::from_fn(1, |_, _| rng.gen_range(-1.0f64..1.0)))
            .collect();
        let ds: Vec<DVec> = (0..steps)
            .map(|k| {
                if k < 20 {
                    DVec::from_fn(1, |_, _| rng.gen_range(-1.0f64..1.0))
                } else {
                    DVec::zeros(1)
                }
            })
            .collect();
        let x0 = &gamma_factor * DVec::from_element(1, rng.gen_range(-1.0f64..1.0));
        let out = simulate_lft(&sys, &deltas, &ds, None, &x0).unwrap();
        let e2: f64 = out.perf.iter().map(|e| e.norm_squared()).sum();
        let d2: f64 = ds.iter().map(|d| d.norm_squared()).sum();
        let v0 = (x0.transpose() * x.view((0, 0), (1, 1)) * &x0)[(0, 0)];
        assert!(
            cert.g * e2 <= cert.f2 * d2 + v0 + 1e-9,
            "dissipation budget violated"
        );
    }
}

#[test]
fn band_multiplier_never_hurts_the_level() {
    // Adding a valid signal multiplier can only reduce (or keep) γ.
    let sys = lti_system(
        DMat::from_element(1, 1, 0.5),
        DMat::from_element(1, 1, 1.0),
        DMat::from_element(1, 1, 1.0),
        DMat::zeros(1, 1),
    );
    let gamma = DMat::zeros(1, 0);
    let base = analyze(
        &sys,
        &gamma,
        &[],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::None,
        &AnalysisOptions::default(),
    )
    .unwrap()
    .gamma;
    let band = signal_iqc_band(1, 0.95, None, 3).unwrap();
    let with_band = analyze(
        &sys,
        &gamma,
        &[],
        &UncertaintyMultiplier::StaticScaling,
        &SignalMultiplier::Band(band),
        &AnalysisOptions::default(),
    )
    .unwrap()
    .gamma;
    assert!(
        with_band <= base * (1.0 + 1e-6),
        "signal information must not increase the bound: {base} → {with_band}"
    );
}
