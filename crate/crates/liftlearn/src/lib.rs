//! Neural lifting function, scheduling map, recurrent rollout of the lifted
//! LPV dynamics, composite loss with reverse-mode gradients, Cayley
//! ellipsoid parameterization, and the Adam training loop.

pub mod cayley;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod modelfile;
pub mod train;

pub use cayley::{CayleyCache, CayleyEllipsoid, CayleyGrads};
pub use loss::{
    batch_loss_and_grads, dyn_loss_only, model_input, rollout, LossValues, LossWeights, ModelGrads,
};
pub use mlp::{Mlp, MlpGrads};
pub use model::{InputMode, LiftedLpvModel, TrainableModel};
pub use modelfile::{load_model, save_model};
pub use train::{
    estimate_param_bounds, grads_to_vec, params_to_vec, set_params_from_vec, train, EpochStats,
    TrainConfig, TrainOutput,
};

#[derive(Debug, thiserror::Error)]
pub enum LiftError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("model file format error: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
