//! Lifted LPV model types: the trainable parameterization (networks, system
//! matrices, ellipsoid parameters) and the finished artifact carrying the
//! realized ellipsoid and estimated scheduling-parameter bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::cayley::CayleyEllipsoid;
use crate::mlp::Mlp;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// How the control and process-noise signals enter the lifted dynamics:
/// stacked as separate channels, or sharing one channel (noise added
/// directly to the commanded input).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    Separate,
    Shared,
}

impl InputMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputMode::Separate => "separate",
            InputMode::Shared => "shared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "separate" => Some(InputMode::Separate),
            "shared" => Some(InputMode::Shared),
            _ => None,
        }
    }
}

/// Trainable lifted-LPV parameterization.
#[derive(Clone, Debug)]
pub struct TrainableModel {
    pub n: usize,
    pub n_lift: usize,
    pub p: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub input_mode: InputMode,
    pub dt: f64,
    /// Lifted transition matrix (n_lift × n_lift).
    pub a: DMat,
    /// Input matrices B₀..B_p (n_lift × model input dim each).
    pub b: Vec<DMat>,
    /// Lifting tail Φ̄ : ℝⁿ → ℝ^{n_lift − n}.
    pub phi: Mlp,
    /// Scheduling map μ : ℝ^{n_lift} → ℝᵖ.
    pub mu: Mlp,
    pub ellipsoid: CayleyEllipsoid,
    /// Initial-state ellipsoid in the original coordinates.
    pub p_matrix: DMat,
}

impl TrainableModel {
    pub fn n_bar(&self) -> usize {
        self.n_lift - self.n
    }

    /// Model input dimension: `n_u + n_v` for separate channels, `n_u` when
    /// noise shares the input channel.
    pub fn input_dim(&self) -> usize {
        match self.input_mode {
            InputMode::Separate => self.n_u + self.n_v,
            InputMode::Shared => self.n_u,
        }
    }

    /// Identity-transition initialization with small random input matrices
    /// and fan-in-scaled network weights.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        n: usize,
        n_lift: usize,
        p: usize,
        n_u: usize,
        n_v: usize,
        hidden: &[usize],
        input_mode: InputMode,
        dt: f64,
        p_matrix: DMat,
        rng: &mut R,
    ) -> Self {
        assert!(n_lift > n, "lifted dimension must exceed the state dimension");
        let n_bar = n_lift - n;
        let mut phi_widths = vec![n];
        phi_widths.extend_from_slice(hidden);
        phi_widths.push(n_bar);
        let mut mu_widths = vec![n_lift];
        mu_widths.extend_from_slice(hidden);
        mu_widths.push(p.max(1));
        let phi = Mlp::new(&phi_widths, rng);
        let mu = if p > 0 {
            Mlp::new(&mu_widths, rng)
        } else {
            Mlp::zeros(&mu_widths)
        };
        let in_dim = match input_mode {
            InputMode::Separate => n_u + n_v,
            InputMode::Shared => n_u,
        };
        let b = (0..=p)
            .map(|_| DMat::from_fn(n_lift, in_dim, |_, _| rng.gen_range(-0.01..0.01)))
            .collect();
        Self {
            n,
            n_lift,
            p,
            n_u,
            n_v,
            input_mode,
            dt,
            a: DMat::identity(n_lift, n_lift),
            b,
            phi,
            mu,
            ellipsoid: CayleyEllipsoid::identity(n_bar),
            p_matrix,
        }
    }

    /// Lift a state: `Φ(x) = [x; Φ̄(x)]`.
    pub fn lift(&self, x: &DVec) -> DVec {
        let tail = self.phi.forward(x);
        let mut z = DVec::zeros(self.n_lift);
        z.rows_mut(0, self.n).copy_from(x);
        z.rows_mut(self.n, self.n_bar()).copy_from(&tail);
        z
    }

    /// Scheduling parameters at a lifted state.
    pub fn schedule(&self, z: &DVec) -> DVec {
        if self.p == 0 {
            return DVec::zeros(0);
        }
        self.mu.forward(z)
    }

    /// Finish into a shipped model with the realized ellipsoid and the given
    /// parameter bounds.
    pub fn finish(&self, bounds: Vec<(f64, f64)>, rate_bounds: Vec<f64>) -> LiftedLpvModel {
        LiftedLpvModel {
            n: self.n,
            n_lift: self.n_lift,
            p: self.p,
            n_u: self.n_u,
            n_v: self.n_v,
            input_mode: self.input_mode,
            dt: self.dt,
            a: self.a.clone(),
            b: self.b.clone(),
            phi: self.phi.clone(),
            mu: self.mu.clone(),
            p_matrix: self.p_matrix.clone(),
            q_matrix: self.ellipsoid.realize(),
            bounds,
            rate_bounds,
            provenance: String::new(),
        }
    }
}

/// Finished lifted LPV model artifact.
#[derive(Clone, Debug)]
pub struct LiftedLpvModel {
    pub n: usize,
    pub n_lift: usize,
    pub p: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub input_mode: InputMode,
    pub dt: f64,
    pub a: DMat,
    pub b: Vec<DMat>,
    pub phi: Mlp,
    pub mu: Mlp,
    pub p_matrix: DMat,
    /// Lifted-component initial-set ellipsoid (n̄ × n̄, positive definite).
    pub q_matrix: DMat,
    /// Per-parameter scheduling bounds (lower, upper).
    pub bounds: Vec<(f64, f64)>,
    /// Per-parameter rate bounds on |δ_{k+1} − δ_k|.
    pub rate_bounds: Vec<f64>,
    /// Free-form provenance note (refinement rounds etc.).
    pub provenance: String,
}

impl LiftedLpvModel {
    pub fn n_bar(&self) -> usize {
        self.n_lift - self.n
    }

    pub fn input_dim(&self) -> usize {
        match self.input_mode {
            InputMode::Separate => self.n_u + self.n_v,
            InputMode::Shared => self.n_u,
        }
    }

    pub fn lift(&self, x: &DVec) -> DVec {
        let tail = self.phi.forward(x);
        let mut z = DVec::zeros(self.n_lift);
        z.rows_mut(0, self.n).copy_from(x);
        z.rows_mut(self.n, self.n_bar()).copy_from(&tail);
        z
    }

    pub fn lift_tail(&self, x: &DVec) -> DVec {
        self.phi.forward(x)
    }

    pub fn schedule(&self, z: &DVec) -> DVec {
        if self.p == 0 {
            return DVec::zeros(0);
        }
        self.mu.forward(z)
    }

    /// Scheduling parameters normalized to the unit box using the stored
    /// bounds; values are clamped to [−1, 1] and out-of-bound events counted.
    pub fn normalized_schedule(&self, z: &DVec, clamp_count: &mut usize) -> DVec {
        let raw = self.schedule(z);
        DVec::from_fn(self.p, |i, _| {
            let (lo, hi) = self.bounds[i];
            let c = 0.5 * (hi + lo);
            let r = 0.5 * (hi - lo);
            let v = if r > 0.0 { (raw[i] - c) / r } else { 0.0 };
            if v.abs() > 1.0 {
                *clamp_count += 1;
            }
            v.clamp(-1.0, 1.0)
        })
    }

    /// One step of the lifted dynamics given a scheduling vector.
    pub fn step(&self, z: &DVec, delta: &DVec, u_tilde: &DVec) -> DVec {
        let mut next = &self.a * z + &self.b[0] * u_tilde;
        for j in 0..self.p {
            next += &self.b[j + 1] * u_tilde * delta[j];
        }
        next
    }
}
