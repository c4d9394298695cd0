//! Library surface of the pipeline workbench CLI: configuration, stages,
//! and reporting, shared by the binary and the test suites.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("synthesis: {0}")]
    Synth(synth::SynthError),
    #[error("analysis: {0}")]
    Iqc(iqc::IqcError),
    #[error("dynamics: {0}")]
    Sys(#[from] sysmodels::SysError),
    #[error("model artifacts: {0}")]
    Lift(#[from] liftlearn::LiftError),
    #[error("system artifacts: {0}")]
    Lft(#[from] lftcore::LftError),
    #[error("ellipsoid refinement: {0}")]
    InitSet(#[from] initset::InitSetError),
    #[error("simulation: {0}")]
    Sim(#[from] simeval::SimEvalError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Exit code: 1 for domain failures, 2 for usage/config errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
