//! Closed-loop trajectory generation for learning: LQR-stabilized runs from
//! ellipsoid-sampled initial error states, with a switched-equilibrium
//! fallback for initial states the nominal controller cannot handle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::linearize::{dare_lqr, jacobian_linearize};
use crate::pendulum::{pendulum_deriv, EquilibriumShift, PendulumParams};
use crate::rk4_step;
use crate::SysError;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// One finite-horizon snapshot: states x₀..x_T (error coordinates), inputs
/// u₀..u_{T−1} (commanded torque), and process noise v₀..v_{T−1}.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySnapshot {
    pub x: Vec<DVec>,
    pub u: Vec<DVec>,
    pub v: Vec<DVec>,
    /// Source trajectory index and offset of x₀ within it.
    pub traj: usize,
    pub offset: usize,
}

impl TrajectorySnapshot {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }
}

#[derive(Clone, Debug)]
pub struct DatasetHeader {
    /// Per-coordinate state envelope half-widths (divergence bound).
    pub state_envelope: Vec<f64>,
    pub input_envelope: f64,
    pub noise_envelope: f64,
    pub dt: f64,
    pub snapshot_len: usize,
    /// Initial-state ellipsoid matrix (error coordinates).
    pub p_matrix: DMat,
    pub seed: u64,
    pub train_trajectories: usize,
    pub val_trajectories: usize,
    pub horizon_steps: usize,
    pub measurement_sigma: f64,
    /// LQR weights used by the data-generation controller.
    pub lqr_q: f64,
    pub lqr_r: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub train: Vec<TrajectorySnapshot>,
    pub val: Vec<TrajectorySnapshot>,
}

impl Dataset {
    pub fn all_snapshots(&self) -> impl Iterator<Item = &TrajectorySnapshot> {
        self.train.iter().chain(self.val.iter())
    }

    /// Initial error states of the generated trajectories (offset-0
    /// snapshots), the samples used for ellipsoid refinement.
    pub fn initial_states(&self) -> Vec<DVec> {
        self.all_snapshots()
            .filter(|s| s.offset == 0)
            .map(|s| s.x[0].clone())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct GenerateConfig {
    pub train_trajectories: usize,
    pub val_trajectories: usize,
    /// Total steps per trajectory.
    pub horizon_steps: usize,
    pub dt: f64,
    pub snapshot_len: usize,
    pub snapshot_stride: usize,
    pub measurement_sigma: f64,
    pub process_noise_bound: f64,
    pub seed: u64,
    /// Retries per trajectory before giving up.
    pub retry_budget: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            train_trajectories: 5000,
            val_trajectories: 2000,
            horizon_steps: 50,
            dt: 0.02,
            snapshot_len: 15,
            snapshot_stride: 1,
            measurement_sigma: 0.02,
            process_noise_bound: 0.5,
            seed: 0,
            retry_budget: 20,
        }
    }
}

/// Initial-state ellipsoid for the pendulum benchmark:
/// `P = diag(π/12, π/12, π/18, π/18)⁻²`.
pub fn pendulum_initial_ellipsoid() -> DMat {
    let semi = [
        std::f64::consts::PI / 12.0,
        std::f64::consts::PI / 12.0,
        std::f64::consts::PI / 18.0,
        std::f64::consts::PI / 18.0,
    ];
    DMat::from_diagonal(&DVec::from_iterator(4, semi.iter().map(|s| 1.0 / (s * s))))
}

/// Uniform sample from the ellipsoid `{x : xᵀPx ≤ 1}` via a Gaussian
/// direction and `radius^(1/n)` scaling mapped through `P^(-1/2)`.
pub fn sample_in_ellipsoid<R: Rng>(p: &DMat, rng: &mut R) -> DVec {
    let n = p.nrows();
    let (vals, vecs) = numlin::sym_eig(p);
    let mut dir = DVec::from_fn(n, |_, _| {
        // Box-Muller keeps the dependency surface small and the stream
        // deterministic across platforms.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let norm = dir.norm();
    if norm == 0.0 {
        return DVec::zeros(n);
    }
    dir /= norm;
    let radius: f64 = rng.gen_range(0.0f64..1.0).powf(1.0 / n as f64);
    // x = P^{-1/2} (radius · dir)
    let mut x = DVec::zeros(n);
    for i in 0..n {
        let v = vecs.column(i);
        x += &v * (v.dot(&dir) * radius / vals[i].sqrt());
    }
    x
}

struct LadderController {
    shifts: Vec<EquilibriumShift>,
    gains: Vec<DMat>,
}

impl LadderController {
    fn build(params: &PendulumParams, lqr_q: f64, lqr_r: f64) -> Result<Self, SysError> {
        let mut shifts = Vec::new();
        let mut gains = Vec::new();
        for k in -2i32..=2 {
            let q1 = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 24.0;
            let eq = EquilibriumShift::at_first_angle(params, q1);
            let (a, b) = jacobian_linearize(
                |s, u, v| pendulum_deriv(params, s, u, v),
                &eq.x_star,
                eq.u_star,
                0.02,
            )?;
            let k_gain = dare_lqr(
                &a,
                &b,
                &(DMat::identity(4, 4) * lqr_q),
                &(DMat::identity(1, 1) * lqr_r),
                1e-12,
                50_000,
            )?;
            shifts.push(eq);
            gains.push(k_gain);
        }
        Ok(Self { shifts, gains })
    }

    fn nominal_index(&self) -> usize {
        self.shifts.len() / 2
    }

    fn index_for_error_angle(&self, dq1: f64) -> usize {
        let step = std::f64::consts::PI / 24.0;
        let k = (dq1 / step).round() as i32;
        (k.clamp(-2, 2) + 2) as usize
    }

    /// LQR law about ladder point `idx`, fed the measured error expressed in
    /// nominal-equilibrium coordinates.
    fn control(&self, idx: usize, measured_err: &DVec) -> f64 {
        let eq = &self.shifts[idx];
        let gain = &self.gains[idx];
        let nominal = &self.shifts[self.nominal_index()];
        let mut u = eq.u_star;
        for i in 0..4 {
            let local_err = measured_err[i] + nominal.x_star[i] - eq.x_star[i];
            u -= gain[(0, i)] * local_err;
        }
        u
    }
}

struct RunOutput {
    x: Vec<[f64; 4]>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn run_trajectory(
    params: &PendulumParams,
    ladder: &LadderController,
    envelope: &[f64],
    cfg: &GenerateConfig,
    x0_err: &DVec,
    rng: &mut ChaCha8Rng,
    switched: bool,
) -> Result<Option<RunOutput>, SysError> {
    let nominal = &ladder.shifts[ladder.nominal_index()];
    let mut x_abs = nominal.x_star;
    for i in 0..4 {
        x_abs[i] += x0_err[i];
    }
    let mut xs = Vec::with_capacity(cfg.horizon_steps + 1);
    let mut us = Vec::with_capacity(cfg.horizon_steps);
    let mut vs = Vec::with_capacity(cfg.horizon_steps);
    xs.push(err_of(&x_abs, nominal));

    let mut ladder_idx = if switched {
        ladder.index_for_error_angle(x0_err[0])
    } else {
        ladder.nominal_index()
    };
    let switch_every = 8usize;

    for step in 0..cfg.horizon_steps {
        if switched && step > 0 && step % switch_every == 0 {
            // Walk the target equilibrium toward the nominal one.
            let nom = ladder.nominal_index();
            if ladder_idx > nom {
                ladder_idx -= 1;
            } else if ladder_idx < nom {
                ladder_idx += 1;
            }
        }
        let err = err_of(&x_abs, nominal);
        let measured = DVec::from_fn(4, |i, _| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let gauss = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            err[i] + cfg.measurement_sigma * gauss
        });
        let u_cmd = ladder.control(ladder_idx, &measured);
        let v: f64 = rng.gen_range(-cfg.process_noise_bound..=cfg.process_noise_bound);
        x_abs = rk4_step(
            |s, uu, vv| pendulum_deriv(params, s, uu, vv),
            &x_abs,
            u_cmd,
            v,
            cfg.dt,
        )?;
        let err_next = err_of(&x_abs, nominal);
        for i in 0..4 {
            if err_next[i].abs() > envelope[i] {
                return Ok(None); // diverged
            }
        }
        us.push(u_cmd - nominal.u_star);
        vs.push(v);
        xs.push(err_next);
    }
    Ok(Some(RunOutput {
        x: xs.iter().map(|e| [e[0], e[1], e[2], e[3]]).collect(),
        u: us,
        v: vs,
    }))
}

fn err_of(x_abs: &[f64; 4], eq: &EquilibriumShift) -> DVec {
    DVec::from_fn(4, |i, _| x_abs[i] - eq.x_star[i])
}

/// Generate the pendulum learning dataset: `train + val` trajectories with
/// initial error states sampled uniformly from ε(P), process noise uniform
/// in ±bound on the input channel, and Gaussian measurement noise feeding
/// the data-generation controller only. Runs leaving the envelope are
/// replaced through the switched-equilibrium path, then resampled.
pub fn generate_dataset(
    params: &PendulumParams,
    p_matrix: &DMat,
    cfg: &GenerateConfig,
) -> Result<Dataset, SysError> {
    let lqr_q = 1.0;
    let lqr_r = 1.0;
    let ladder = LadderController::build(params, lqr_q, lqr_r)?;
    let (vals, _) = numlin::sym_eig(p_matrix);
    let envelope: Vec<f64> = (0..4).map(|i| 10.0 / vals[i].sqrt()).collect();
    let total = cfg.train_trajectories + cfg.val_trajectories;

    let runs: Result<Vec<RunOutput>, SysError> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx as u64 + 1);
            for attempt in 0..cfg.retry_budget {
                let x0 = sample_in_ellipsoid(p_matrix, &mut rng);
                // First try the nominal controller, then the switched path
                // from the same initial state.
                if let Some(run) =
                    run_trajectory(params, &ladder, &envelope, cfg, &x0, &mut rng, false)?
                {
                    return Ok(run);
                }
                if let Some(run) =
                    run_trajectory(params, &ladder, &envelope, cfg, &x0, &mut rng, true)?
                {
                    return Ok(run);
                }
                let _ = attempt;
            }
            Err(SysError::RetryBudgetExhausted)
        })
        .collect();
    let runs = runs?;

    let snapshots_of = |range: std::ops::Range<usize>| -> Vec<TrajectorySnapshot> {
        let mut out = Vec::new();
        for t in range {
            let run = &runs[t];
            let last_start = cfg.horizon_steps.saturating_sub(cfg.snapshot_len);
            let mut k = 0;
            while k <= last_start {
                out.push(TrajectorySnapshot {
                    x: (0..=cfg.snapshot_len)
                        .map(|i| DVec::from_row_slice(&run.x[k + i]))
                        .collect(),
                    u: (0..cfg.snapshot_len)
                        .map(|i| DVec::from_element(1, run.u[k + i]))
                        .collect(),
                    v: (0..cfg.snapshot_len)
                        .map(|i| DVec::from_element(1, run.v[k + i]))
                        .collect(),
                    traj: t,
                    offset: k,
                });
                k += cfg.snapshot_stride;
            }
        }
        out
    };

    let header = DatasetHeader {
        state_envelope: envelope,
        input_envelope: params.torque_limit,
        noise_envelope: cfg.process_noise_bound,
        dt: cfg.dt,
        snapshot_len: cfg.snapshot_len,
        p_matrix: p_matrix.clone(),
        seed: cfg.seed,
        train_trajectories: cfg.train_trajectories,
        val_trajectories: cfg.val_trajectories,
        horizon_steps: cfg.horizon_steps,
        measurement_sigma: cfg.measurement_sigma,
        lqr_q,
        lqr_r,
    };
    Ok(Dataset {
        train: snapshots_of(0..cfg.train_trajectories),
        val: snapshots_of(cfg.train_trajectories..total),
        header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenerateConfig {
        GenerateConfig {
            train_trajectories: 5,
            val_trajectories: 2,
            horizon_steps: 25,
            snapshot_len: 10,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_split_match_request() {
        let params = PendulumParams::default();
        let p = pendulum_initial_ellipsoid();
        let ds = generate_dataset(&params, &p, &small_cfg()).unwrap();
        let per_traj = 25 - 10 + 1;
        assert_eq!(ds.train.len(), 5 * per_traj);
        assert_eq!(ds.val.len(), 2 * per_traj);
        assert_eq!(ds.initial_states().len(), 7);
    }

    #[test]
    fn initial_states_lie_in_the_ellipsoid() {
        let params = PendulumParams::default();
        let p = pendulum_initial_ellipsoid();
        let ds = generate_dataset(&params, &p, &small_cfg()).unwrap();
        for x0 in ds.initial_states() {
            let q = (x0.transpose() * &p * &x0)[(0, 0)];
            assert!(q <= 1.0 + 1e-12, "x₀ᵀPx₀ = {q}");
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let params = PendulumParams::default();
        let p = pendulum_initial_ellipsoid();
        let a = generate_dataset(&params, &p, &small_cfg()).unwrap();
        let b = generate_dataset(&params, &p, &small_cfg()).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (s, t) in a.all_snapshots().zip(b.all_snapshots()) {
            assert_eq!(s.x, t.x);
            assert_eq!(s.u, t.u);
            assert_eq!(s.v, t.v);
        }
    }

    #[test]
    fn snapshots_respect_envelope_bounds() {
        let params = PendulumParams::default();
        let p = pendulum_initial_ellipsoid();
        let ds = generate_dataset(&params, &p, &small_cfg()).unwrap();
        for s in ds.all_snapshots() {
            for x in &s.x {
                for i in 0..4 {
                    assert!(x[i].abs() <= ds.header.state_envelope[i]);
                }
            }
            for v in &s.v {
                assert!(v[0].abs() <= ds.header.noise_envelope);
            }
        }
    }

    #[test]
    fn ellipsoid_sampler_is_uniform_in_one_dimension() {
        // For P = I in 1-D the sampler must be uniform on [−1, 1]:
        // Kolmogorov–Smirnov statistic against the uniform CDF.
        let p = DMat::identity(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_in_ellipsoid(&p, &mut rng)[0])
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = (x + 1.0) / 2.0;
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            ks = ks.max((cdf - emp_lo).abs()).max((emp_hi - cdf).abs());
        }
        // 1% critical value ≈ 1.63/√n ≈ 0.0115.
        assert!(ks < 0.0115, "KS statistic {ks}");
    }

    #[test]
    fn ellipsoid_sampler_mean_is_centered() {
        let p = pendulum_initial_ellipsoid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut mean = DVec::zeros(4);
        for _ in 0..n {
            mean += sample_in_ellipsoid(&p, &mut rng);
        }
        mean /= n as f64;
        // Component std ≈ semi-axis/√6; the mean of n samples must be within
        // 3σ/√n.
        for i in 0..4 {
            let semi = 1.0 / p[(i, i)].sqrt();
            let bound = 3.0 * semi / (6.0f64).sqrt() / (n as f64).sqrt();
            assert!(mean[i].abs() < bound, "component {i}: {} ≥ {bound}", mean[i]);
        }
    }
}
