//! Controller synthesis by LMI programming: static state-feedback scheduled
//! controllers with reconstruction, static LTI gains, and output-feedback
//! feasibility certificates.

pub mod coupling;
pub mod lti;
pub mod outfb;
pub mod reconstruct;
pub mod statefb;

pub use coupling::{coupled_to_schur, schur_to_coupled, CoupledForm, SchurForm};
pub use lti::{synthesize_lti, InitialSet, LtiSynthesis};
pub use outfb::{output_feedback_feasibility, OutputFeedbackCertificate};
pub use reconstruct::{reconstruct_controller, ReconstructOptions};
pub use statefb::{
    initial_set_factor, inv_sqrt, synthesize_nslpv, SynthOptions, SynthesisCertificate,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("linear algebra / solver error: {0}")]
    Numlin(numlin::NumlinError),
    #[error("synthesis LMIs are infeasible (improving ray {farkas_improving:.3e})")]
    Infeasible { farkas_improving: f64 },
    #[error("solver stalled before reaching tolerance (primal {primal:.2e}, gap {gap:.2e})")]
    SolverStalled { primal: f64, gap: f64 },
    #[error("matrix expected to be positive definite is not")]
    NotPositiveDefinite,
    #[error("plant does not expose an exactly measurable state")]
    StateNotMeasurable,
    #[error("controller reconstruction LMI infeasible after the retry ladder")]
    ReconstructionInfeasible,
    #[error("premise violated: {0}")]
    PremiseViolated(String),
    #[error("dimension mismatch in {what}: got {got}, want {want}")]
    Dimension {
        what: String,
        got: usize,
        want: usize,
    },
}
