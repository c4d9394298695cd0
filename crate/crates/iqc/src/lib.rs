//! IQC-based robustness analysis: multiplier construction, augmented-system
//! assembly, the robust-performance analysis LMIs, and validation oracles.

pub mod analyze;
pub mod augment;
pub mod filter;
pub mod l2gain;
pub mod multiplier;

pub use analyze::{analyze, well_posed, AnalysisCertificate, AnalysisOptions, WellPosedness};
pub use augment::{analysis_form, build_augmented_step, AugmentedStep, PsiStep};
pub use filter::{FilterStep, LtvFilter};
pub use l2gain::l2_gain_oracle;
pub use multiplier::{
    custom_multiplier, signal_iqc_band, static_scaling_sum, BandMultiplier, CustomMultiplier,
    SignalMultiplier, UncertaintyMultiplier,
};

#[derive(Debug, thiserror::Error)]
pub enum IqcError {
    #[error("linear algebra / solver error: {0}")]
    Numlin(numlin::NumlinError),
    #[error("multiplier filter is not asymptotically stable")]
    UnstableFilter,
    #[error("multiplier sign structure rejected: {what}")]
    SignStructure { what: String },
    #[error("signal-class validation failed at sample {trial} (sum {value:.3e})")]
    ClassValidation { trial: usize, value: f64 },
    #[error("analysis LMIs are infeasible (improving ray {farkas_improving:.3e})")]
    Infeasible { farkas_improving: f64 },
    #[error("solver stalled before tolerance (primal {primal:.2e}, gap {gap:.2e})")]
    SolverStalled { primal: f64, gap: f64 },
    #[error("dimension mismatch: {what}")]
    Dimension { what: String },
}
