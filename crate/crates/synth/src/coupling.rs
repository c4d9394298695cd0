//! Equivalence between the coupled form of a certificate pair and its
//! Schur-assembled block form:
//!   (i)  R, S ≻ 0 with [[R, I], [I, S]] ⪰ 0 and XᵀSX ≺ Y
//!   (ii) R ≻ 0 with [[Y, Xᵀ], [X, R]] ≻ 0
//! Converting (ii)→(i) takes S = R⁻¹.

use nalgebra::DMatrix;

use crate::SynthError;

type DMat = DMatrix<f64>;

#[derive(Clone, Debug)]
pub struct CoupledForm {
    pub r: DMat,
    pub s: DMat,
}

#[derive(Clone, Debug)]
pub struct SchurForm {
    pub block: DMat,
}

fn check_pd(m: &DMat, what: &str) -> Result<(), SynthError> {
    if numlin::min_eig(m) <= 0.0 {
        return Err(SynthError::PremiseViolated(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// (i) → (ii): assemble `[[Y, Xᵀ], [X, R]]` after verifying the premises of
/// the coupled form.
pub fn coupled_to_schur(x: &DMat, y: &DMat, form: &CoupledForm) -> Result<SchurForm, SynthError> {
    check_pd(&form.r, "R")?;
    check_pd(&form.s, "S")?;
    let n = form.r.nrows();
    let coupling = numlin::vstack(&[
        numlin::hstack(&[form.r.clone(), DMat::identity(n, n)]),
        numlin::hstack(&[DMat::identity(n, n), form.s.clone()]),
    ]);
    if numlin::min_eig(&coupling) < -1e-9 {
        return Err(SynthError::PremiseViolated(
            "coupling block [[R, I], [I, S]] is not positive semidefinite".into(),
        ));
    }
    let xsx = x.transpose() * &form.s * x;
    if numlin::min_eig(&(y - &xsx)) <= 0.0 {
        return Err(SynthError::PremiseViolated("XᵀSX ≺ Y fails".into()));
    }
    let block = numlin::vstack(&[
        numlin::hstack(&[y.clone(), x.transpose()]),
        numlin::hstack(&[x.clone(), form.r.clone()]),
    ]);
    Ok(SchurForm { block })
}

/// (ii) → (i): extract `R` from the Schur block and return `S = R⁻¹`.
pub fn schur_to_coupled(x: &DMat, y: &DMat, schur: &SchurForm) -> Result<CoupledForm, SynthError> {
    let m = y.nrows();
    let n = schur.block.nrows() - m;
    if numlin::min_eig(&schur.block) <= 0.0 {
        return Err(SynthError::PremiseViolated("Schur block is not positive definite".into()));
    }
    let r = schur.block.view((m, m), (n, n)).into_owned();
    let s = r
        .clone()
        .try_inverse()
        .ok_or_else(|| SynthError::PremiseViolated("R is singular".into()))?;
    let _ = x;
    Ok(CoupledForm { r, s })
}
