//! Augmented analysis system: the uncertain plant stacked with the
//! uncertainty-multiplier filter and the signal-multiplier filter, with
//! outputs ordered (r¹, e, r², d, l).

use lftcore::{EventuallyPeriodicLft, LftTimeStep};
use nalgebra::DMatrix;

use crate::filter::LtvFilter;
use crate::multiplier::CustomMultiplier;
use crate::IqcError;

type DMat = DMatrix<f64>;

/// Combined multiplier filter at one step, with inputs split (φ, ϑ) and
/// outputs split (r¹, r²).
#[derive(Clone, Debug)]
pub struct PsiStep {
    pub a: DMat,
    pub b1: DMat,
    pub b2: DMat,
    pub c1: DMat,
    pub d11: DMat,
    pub d12: DMat,
    pub c2: DMat,
    pub d21: DMat,
    pub d22: DMat,
}

impl PsiStep {
    /// Identity factor on `m` channels: r¹ = φ, r² = ϑ.
    pub fn identity(m: usize) -> Self {
        Self {
            a: DMat::zeros(0, 0),
            b1: DMat::zeros(0, m),
            b2: DMat::zeros(0, m),
            c1: DMat::zeros(m, 0),
            d11: DMat::identity(m, m),
            d12: DMat::zeros(m, m),
            c2: DMat::zeros(m, 0),
            d21: DMat::zeros(m, m),
            d22: DMat::identity(m, m),
        }
    }

    /// Block-diagonal combination of a custom multiplier's two halves at
    /// step k.
    pub fn from_custom(mult: &CustomMultiplier, k: usize) -> Self {
        let f1 = mult.psi1.at(k);
        let f2 = mult.psi2.at(k);
        let (n1, n2) = (f1.a.nrows(), f2.a.nrows());
        let (r1, r2) = (f1.c.nrows(), f2.c.nrows());
        let m1 = f1.b.ncols();
        let m2 = f2.b.ncols();
        let mut b1 = DMat::zeros(n1 + n2, m1);
        b1.view_mut((0, 0), (n1, m1)).copy_from(&f1.b);
        let mut b2 = DMat::zeros(n1 + n2, m2);
        b2.view_mut((n1, 0), (n2, m2)).copy_from(&f2.b);
        let mut c1 = DMat::zeros(r1, n1 + n2);
        c1.view_mut((0, 0), (r1, n1)).copy_from(&f1.c);
        let mut c2 = DMat::zeros(r2, n1 + n2);
        c2.view_mut((0, n1), (r2, n2)).copy_from(&f2.c);
        Self {
            a: numlin::block_diag(&[f1.a.clone(), f2.a.clone()]),
            b1,
            b2,
            c1,
            d11: f1.d.clone(),
            d12: DMat::zeros(r1, m2),
            c2,
            d21: DMat::zeros(r2, m1),
            d22: f2.d.clone(),
        }
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn r1_dim(&self) -> usize {
        self.d11.nrows()
    }

    pub fn r2_dim(&self) -> usize {
        self.d22.nrows()
    }
}

/// Augmented system matrices at one step, with the output row partition
/// (r¹, e, r², d, l).
#[derive(Clone, Debug)]
pub struct AugmentedStep {
    pub a: DMat,
    pub b: DMat,
    pub c: DMat,
    pub d: DMat,
    pub r1: usize,
    pub n_e: usize,
    pub r2: usize,
    pub n_d: usize,
    pub n_l: usize,
    pub n_state: usize,
    pub m: usize,
}

/// Assemble the augmented step from the plant step (in closed-loop form:
/// no control or measurement channels), the multiplier factor, and an
/// optional signal filter.
pub fn build_augmented_step(
    m_step: &LftTimeStep,
    psi: &PsiStep,
    theta: Option<(&LtvFilter, usize)>,
) -> Result<AugmentedStep, IqcError> {
    let n_m = m_step.a_ss.nrows();
    let m = m_step.m();
    let n_d = m_step.b_1s.ncols();
    let n_e = m_step.c_1s.nrows();
    if psi.d11.ncols() != m || psi.d22.ncols() != m {
        return Err(IqcError::Dimension {
            what: "multiplier channel count".into(),
        });
    }
    let (theta_step, n_l) = match theta {
        Some((f, k)) => {
            let s = f.at(k);
            if s.b.ncols() != n_d {
                return Err(IqcError::Dimension {
                    what: "signal filter input".into(),
                });
            }
            (Some(s.clone()), f.n_out())
        }
        None => (None, 0),
    };
    let n_psi = psi.n_state();
    let n_theta = theta_step.as_ref().map(|s| s.a.nrows()).unwrap_or(0);
    let n_l_state = n_m + n_psi + n_theta;

    // A_L, B_L per the augmented interconnection: the multiplier filter is
    // driven by (φ, ϑ) with φ = C_M1 x + D_M11 ϑ + D_M12 d.
    let mut a = DMat::zeros(n_l_state, n_l_state);
    a.view_mut((0, 0), (n_m, n_m)).copy_from(&m_step.a_ss);
    a.view_mut((n_m, 0), (n_psi, n_m))
        .copy_from(&(&psi.b1 * &m_step.a_ps));
    a.view_mut((n_m, n_m), (n_psi, n_psi)).copy_from(&psi.a);
    if let Some(ts) = &theta_step {
        a.view_mut((n_m + n_psi, n_m + n_psi), (n_theta, n_theta))
            .copy_from(&ts.a);
    }

    let mut b = DMat::zeros(n_l_state, m + n_d);
    b.view_mut((0, 0), (n_m, m)).copy_from(&m_step.a_sp);
    b.view_mut((0, m), (n_m, n_d)).copy_from(&m_step.b_1s);
    b.view_mut((n_m, 0), (n_psi, m))
        .copy_from(&(&psi.b1 * &m_step.a_pp + &psi.b2));
    b.view_mut((n_m, m), (n_psi, n_d))
        .copy_from(&(&psi.b1 * &m_step.b_1p));
    if let Some(ts) = &theta_step {
        b.view_mut((n_m + n_psi, m), (n_theta, n_d)).copy_from(&ts.b);
    }

    let r1 = psi.r1_dim();
    let r2 = psi.r2_dim();
    let rows = r1 + n_e + r2 + n_d + n_l;
    let mut c = DMat::zeros(rows, n_l_state);
    let mut d = DMat::zeros(rows, m + n_d);
    // r¹ rows.
    c.view_mut((0, 0), (r1, n_m))
        .copy_from(&(&psi.d11 * &m_step.a_ps));
    c.view_mut((0, n_m), (r1, n_psi)).copy_from(&psi.c1);
    d.view_mut((0, 0), (r1, m))
        .copy_from(&(&psi.d11 * &m_step.a_pp + &psi.d12));
    d.view_mut((0, m), (r1, n_d))
        .copy_from(&(&psi.d11 * &m_step.b_1p));
    // e rows.
    let e0 = r1;
    c.view_mut((e0, 0), (n_e, n_m)).copy_from(&m_step.c_1s);
    d.view_mut((e0, 0), (n_e, m)).copy_from(&m_step.c_1p);
    d.view_mut((e0, m), (n_e, n_d)).copy_from(&m_step.d_11);
    // r² rows.
    let r20 = r1 + n_e;
    c.view_mut((r20, 0), (r2, n_m))
        .copy_from(&(&psi.d21 * &m_step.a_ps));
    c.view_mut((r20, n_m), (r2, n_psi)).copy_from(&psi.c2);
    d.view_mut((r20, 0), (r2, m))
        .copy_from(&(&psi.d21 * &m_step.a_pp + &psi.d22));
    d.view_mut((r20, m), (r2, n_d))
        .copy_from(&(&psi.d21 * &m_step.b_1p));
    // d passthrough rows.
    let d0 = r1 + n_e + r2;
    d.view_mut((d0, m), (n_d, n_d))
        .copy_from(&DMat::identity(n_d, n_d));
    // l rows.
    if let Some(ts) = &theta_step {
        let l0 = d0 + n_d;
        c.view_mut((l0, n_m + n_psi), (n_l, n_theta)).copy_from(&ts.c);
        d.view_mut((l0, m), (n_l, n_d)).copy_from(&ts.d);
    }

    Ok(AugmentedStep {
        a,
        b,
        c,
        d,
        r1,
        n_e,
        r2,
        n_d,
        n_l,
        n_state: n_l_state,
        m,
    })
}

/// Closed-loop plant wrapper asserting the analysis form (no control or
/// measurement channels).
pub fn analysis_form(sys: &EventuallyPeriodicLft) -> Result<(), IqcError> {
    if sys.n_u() != 0 || sys.n_y() != 0 {
        return Err(IqcError::Dimension {
            what: "analysis system must have no open control/measurement channels".into(),
        });
    }
    Ok(())
}
