//! Uncertainty and disturbance multipliers: the default per-step scaling
//! template for repeated unit-bounded scalars, user-supplied filtered
//! multipliers with admissibility checks, and signal multipliers for
//! disturbance classes with empirical validation at registration.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use crate::filter::LtvFilter;
use crate::IqcError;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// Multiplier for the scheduling uncertainty channels.
#[derive(Clone, Debug)]
pub enum UncertaintyMultiplier {
    /// Per-step diagonal scalings with identity filters: `J(k) =
    /// diag(D(k), −D(k))` with `D(k) = diag(d_i(k) I_{m_i})` free positive
    /// decision variables. Valid for repeated scalars bounded by one.
    StaticScaling,
    /// User-supplied block-diagonal filter pair with a fixed middle matrix,
    /// registered through [`custom_multiplier`].
    Custom(CustomMultiplier),
}

/// Filtered multiplier with block-diagonal factor `diag(Ψ₁, Ψ₂)` and fixed
/// middle matrices.
#[derive(Clone, Debug)]
pub struct CustomMultiplier {
    pub psi1: LtvFilter,
    pub psi2: LtvFilter,
    pub j11: DMat,
    pub j12: DMat,
    pub j22: DMat,
}

/// Register a custom multiplier after verifying (a) stability of both filter
/// halves and (b) the sufficient sign structure `J₁₁ ⪰ εI`, `J₂₂ ⪯ −εI`
/// (conservative but easily checkable).
pub fn custom_multiplier(
    psi1: LtvFilter,
    psi2: LtvFilter,
    j11: DMat,
    j12: DMat,
    j22: DMat,
) -> Result<CustomMultiplier, IqcError> {
    if !psi1.is_stable() || !psi2.is_stable() {
        return Err(IqcError::UnstableFilter);
    }
    let eps = 1e-9;
    if j11.nrows() != psi1.n_out() || j22.nrows() != psi2.n_out() {
        return Err(IqcError::Dimension {
            what: "middle matrix".into(),
        });
    }
    if j12.nrows() != j11.nrows() || j12.ncols() != j22.ncols() {
        return Err(IqcError::Dimension {
            what: "cross middle matrix".into(),
        });
    }
    if numlin::min_eig(&j11) < eps {
        return Err(IqcError::SignStructure {
            what: "leading middle block is not positive definite".into(),
        });
    }
    if numlin::min_eig(&(-&j22)) < eps {
        return Err(IqcError::SignStructure {
            what: "trailing middle block is not negative definite".into(),
        });
    }
    Ok(CustomMultiplier {
        psi1,
        psi2,
        j11,
        j12,
        j22,
    })
}

/// Signal multiplier for the disturbance input.
#[derive(Clone, Debug)]
pub enum SignalMultiplier {
    /// Plain ℓ₂ disturbances: no filter, no constraint (always valid).
    None,
    Band(BandMultiplier),
}

impl SignalMultiplier {
    pub fn none() -> Self {
        SignalMultiplier::None
    }
}

/// "Banded white" disturbance multiplier: a first-order basis bank on each
/// disturbance channel with middle matrix `u₀ · U_template`, `u₀ ≥ 0` free.
/// Validity of the template for the declared class is established
/// empirically at registration.
#[derive(Clone, Debug)]
pub struct BandMultiplier {
    pub theta: LtvFilter,
    /// Per-channel template block (basis_len × basis_len).
    pub u_template: DMat,
    pub channels: usize,
    pub pole: f64,
}

/// Build and validate a band multiplier for `channels` unit-variance
/// white-noise-like inputs. `template` defaults to
/// `diag(1, −(1−pole²)/8)`: finite white-noise windows amplify energy
/// through the pole well beyond the stationary ratio, so the default backs
/// off by an empirically sized margin. Registration rejects the multiplier
/// if any of the 10⁴ sampled class members violates the constraint.
pub fn signal_iqc_band(
    channels: usize,
    pole: f64,
    template: Option<DMat>,
    seed: u64,
) -> Result<BandMultiplier, IqcError> {
    if pole.abs() >= 1.0 {
        return Err(IqcError::UnstableFilter);
    }
    let u_template = template.unwrap_or_else(|| {
        let mut t = DMat::zeros(2, 2);
        t[(0, 0)] = 1.0;
        t[(1, 1)] = -(1.0 - pole * pole) / 8.0;
        t
    });
    let basis_len = u_template.nrows();
    let theta = LtvFilter::basis_bank(channels, pole, basis_len);
    let mult = BandMultiplier {
        theta,
        u_template,
        channels,
        pole,
    };
    // Monte-Carlo validation over truncated unit-variance white samples.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 128;
    for trial in 0..10_000 {
        let d: Vec<DVec> = (0..len)
            .map(|_| {
                DVec::from_fn(channels, |_, _| {
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
            })
            .collect();
        let s = mult.constraint_sum(&d);
        if s < 0.0 {
            return Err(IqcError::ClassValidation { trial, value: s });
        }
    }
    Ok(mult)
}

impl BandMultiplier {
    /// Full middle matrix for all channels.
    pub fn u_full(&self) -> DMat {
        numlin::block_diag(&vec![self.u_template.clone(); self.channels])
    }

    /// `Σ_k l_kᵀ U l_k` along a disturbance sequence.
    pub fn constraint_sum(&self, d: &[DVec]) -> f64 {
        let u = self.u_full();
        self.theta
            .run(d)
            .iter()
            .map(|l| (l.transpose() * &u * l)[(0, 0)])
            .sum()
    }
}

/// Direct check of the scaling inequality `Σ φᵀDφ − ϑᵀDϑ ≥ 0` for repeated
/// scalars `ϑ_i = δ_i φ_i` with `|δ_i| ≤ 1` (used by tests and documentation
/// of the default multiplier).
pub fn static_scaling_sum(
    block_sizes: &[usize],
    d_weights: &[f64],
    phis: &[DVec],
    deltas: &[DVec],
) -> f64 {
    let mut total = 0.0;
    for (phi, delta) in phis.iter().zip(deltas) {
        let mut off = 0;
        for (i, &sz) in block_sizes.iter().enumerate() {
            for r in 0..sz {
                let p = phi[off + r];
                let t = delta[i] * p;
                total += d_weights[i] * (p * p - t * t);
            }
            off += sz;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng as _;

    #[test]
    fn static_scaling_sum_is_nonnegative_for_unit_bounded_scalars() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let phis: Vec<DVec> = (0..20)
                .map(|_| DVec::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)))
                .collect();
            let deltas: Vec<DVec> = (0..20)
                .map(|_| DVec::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let s = static_scaling_sum(&[2, 1], &[2.0, 3.0], &phis, &deltas);
            assert!(s >= -1e-12, "scaling sum negative: {s}");
        }
    }

    #[test]
    fn boundary_scheduling_gives_zero_sum() {
        let phis: Vec<DVec> = (0..10)
            .map(|k| DVec::from_fn(2, |i, _| (k + i) as f64 * 0.3 - 1.0))
            .collect();
        let deltas = vec![DVec::from_row_slice(&[1.0, 1.0]); 10];
        let s = static_scaling_sum(&[1, 1], &[5.0, 0.7], &phis, &deltas);
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn custom_multiplier_accepts_identity_scaling() {
        let m = custom_multiplier(
            LtvFilter::identity(2),
            LtvFilter::identity(2),
            DMat::identity(2, 2),
            DMat::zeros(2, 2),
            -DMat::identity(2, 2),
        );
        assert!(m.is_ok());
    }

    #[test]
    fn custom_multiplier_rejects_unit_pole() {
        let res = custom_multiplier(
            LtvFilter::basis_bank(1, 1.0, 2),
            LtvFilter::basis_bank(1, 1.0, 2),
            DMat::identity(2, 2),
            DMat::zeros(2, 2),
            -DMat::identity(2, 2),
        );
        assert!(matches!(res, Err(IqcError::UnstableFilter)));
    }

    #[test]
    fn custom_multiplier_rejects_indefinite_blocks() {
        let res = custom_multiplier(
            LtvFilter::identity(1),
            LtvFilter::identity(1),
            DMat::from_element(1, 1, 0.0),
            DMat::zeros(1, 1),
            -DMat::identity(1, 1),
        );
        assert!(matches!(res, Err(IqcError::SignStructure { .. })));
    }

    #[test]
    fn first_order_bank_with_conforming_signs_is_accepted() {
        let psi1 = LtvFilter::basis_bank(2, 0.5, 2);
        let psi2 = LtvFilter::basis_bank(2, 0.5, 2);
        let m = custom_multiplier(
            psi1,
            psi2,
            DMat::identity(4, 4),
            DMat::zeros(4, 4),
            -DMat::identity(4, 4),
        );
        assert!(m.is_ok());
    }

    #[test]
    fn band_multiplier_validates_on_white_noise() {
        let m = signal_iqc_band(1, 0.95, None, 7).expect("white-noise validation");
        assert_eq!(m.theta.n_out(), 2);
        // Vacuous template is accepted trivially.
        assert!(signal_iqc_band(1, 0.95, Some(DMat::zeros(2, 2)), 7).is_ok());
    }

    #[test]
    fn band_multiplier_rejects_overconfident_template() {
        // Demanding more energy reduction than white noise provides must
        // fail validation: U = diag(1, −5).
        let mut t = DMat::zeros(2, 2);
        t[(0, 0)] = 1.0;
        t[(1, 1)] = -5.0;
        assert!(matches!(
            signal_iqc_band(1, 0.95, Some(t), 7),
            Err(IqcError::ClassValidation { .. })
        ));
    }
}
