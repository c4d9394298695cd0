//! Dense linear algebra utilities and an embedded interior-point solver for
//! LMI programs: linear objective, block-diagonal affine positive-semidefinite
//! constraints over scalar / symmetric / rectangular matrix variables.

pub mod expr;
pub mod mat;
pub mod program;
pub mod sdpa;
pub mod solver;

pub use expr::AffineExpr;
pub use mat::{
    block_diag, hstack, max_abs, min_eig, orthonormal_kernel_basis, psd_sqrt, sigma_max,
    spectral_radius, sym_eig, vstack, DMat, DVec,
};
pub use program::{LmiProgram, VarId, VarShape, DEFAULT_STRICTNESS_MARGIN};
pub use sdpa::{export_sdpa, import_sdpa};
pub use solver::{
    solve_lmi_program, solve_with_options, FarkasCertificate, KktResiduals, LmiSolution,
    SolveStatus, SolverOptions,
};

/// Default relative tolerance used when a kernel or numerical rank is needed.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum NumlinError {
    #[error("constraint block is not symmetric")]
    NotSymmetric,
    #[error("matrix is indefinite beyond tolerance (min eigenvalue {min_eig})")]
    Indefinite { min_eig: f64 },
    #[error("expression references undeclared parameter {0}")]
    UnknownParameter(usize),
    #[error("program has no variables and no constraints")]
    EmptyProgram,
    #[error("variable {0} has objective weight but appears in no constraint")]
    UnboundedVariable(usize),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse failure: {0}")]
    Parse(String),
}
