//! Eventually-periodic LFT system algebra: LPV→LFT assembly, scheduling
//! normalization, plant/controller interconnection, and exact simulation.

pub mod assemble;
pub mod files;
pub mod interconnect;
pub mod system;

pub use assemble::{assemble_lft, normalize_params, AssembleOptions};
pub use files::{load_controller, load_lft, save_controller, save_lft};
pub use interconnect::{close_loop, delta_matrix, simulate_lft, ClosedLoop, SimOutput};
pub use system::{ControllerStep, EventuallyPeriodicLft, LftTimeStep, StaticNslpvController};

#[derive(Debug, thiserror::Error)]
pub enum LftError {
    #[error("dimension mismatch in {what}: got {got}, want {want}")]
    Dimension {
        what: String,
        got: usize,
        want: usize,
    },
    #[error("uncertainty loop is ill-posed (I − A·Δ singular)")]
    IllPosed,
    #[error("measurement-noise weighting matrix required but not provided")]
    MissingNoiseWeights,
    #[error("file format error: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
