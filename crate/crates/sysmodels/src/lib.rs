//! Benchmark nonlinear dynamics (double pendulum), fixed-step integration,
//! equilibrium shifting, a discrete LQR data-generation controller, and
//! trajectory-snapshot dataset generation.

pub mod datafile;
pub mod dataset;
pub mod integrate;
pub mod linearize;
pub mod pendulum;

pub use datafile::{load_dataset, save_dataset};
pub use dataset::{
    generate_dataset, pendulum_initial_ellipsoid, sample_in_ellipsoid, Dataset, DatasetHeader,
    GenerateConfig, TrajectorySnapshot,
};
pub use integrate::rk4_step;
pub use linearize::{dare_lqr, jacobian_linearize, zoh_discretize};
pub use pendulum::{pendulum_deriv, EquilibriumShift, PendulumParams, STATE_DIM};

#[derive(Debug, thiserror::Error)]
pub enum SysError {
    #[error("singular configuration: θ̃(q₂) below tolerance at q₂ = {q2}")]
    SingularConfiguration { q2: f64 },
    #[error("non-finite value in dynamics evaluation")]
    NonFinite,
    #[error("Riccati recursion failed to converge")]
    RiccatiDiverged,
    #[error("could not produce a bounded trajectory within the retry budget")]
    RetryBudgetExhausted,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format error: {0}")]
    Format(String),
}
