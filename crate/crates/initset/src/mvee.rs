//! Centered minimum-volume enclosing ellipsoid via the Khachiyan
//! multiplicative-weights iteration on the symmetrized point set, with a
//! duality-gap certificate and exact containment by post-scaling.

use nalgebra::{DMatrix, DVector};

use crate::InitSetError;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Clone, Debug)]
pub struct MveeResult {
    /// Ellipsoid matrix: every input point satisfies `qᵀ Q q ≤ 1` exactly.
    pub q: DMat,
    /// Khachiyan duality gap `max_i g_i / d − 1` at termination.
    pub gap: f64,
    /// True when a rank-deficient point set required diagonal
    /// regularization.
    pub regularized: bool,
    pub iterations: usize,
}

/// Centered MVEE of `points`, with volume within `(1 + eps_gap)^dim` of
/// optimal. Rank-deficient point sets are regularized by `λI` with
/// `λ = 1e-8 · max‖q_i‖²` and reported as such.
pub fn mvee_centered(points: &[DVec], eps_gap: f64) -> Result<MveeResult, InitSetError> {
    if points.is_empty() {
        return Err(InitSetError::NoPoints);
    }
    let dim = points[0].len();
    assert!(eps_gap > 0.0);
    let n = points.len();
    let d = dim as f64;

    let max_norm2 = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    if max_norm2 == 0.0 {
        // All points at the origin: any tiny ellipsoid works; regularize.
        return Ok(MveeResult {
            q: DMat::identity(dim, dim) * 1e8,
            gap: 0.0,
            regularized: true,
            iterations: 0,
        });
    }
    let lambda = 1e-8 * max_norm2;

    // Design weights over the (symmetrized) points; symmetry is implicit in
    // the centered moment matrix M(u) = Σ u_i q_i q_iᵀ.
    let mut u = vec![1.0 / n as f64; n];
    let mut regularized = false;
    let mut gap = f64::INFINITY;
    let mut iterations = 0usize;
    let max_iters = 100_000;

    while iterations < max_iters {
        iterations += 1;
        let mut moment = DMat::zeros(dim, dim);
        for (w, p) in u.iter().zip(points) {
            if *w > 0.0 {
                moment += p * p.transpose() * *w;
            }
        }
        let inv = match moment.clone().try_inverse() {
            Some(inv) => inv,
            None => {
                regularized = true;
                (moment + DMat::identity(dim, dim) * lambda)
                    .try_inverse()
                    .expect("regularized moment is invertible")
            }
        };
        // Leverage scores g_i = q_iᵀ M(u)⁻¹ q_i; optimality at max g = d.
        let mut g_max = 0.0f64;
        let mut j_max = 0usize;
        for (i, p) in points.iter().enumerate() {
            let g = (p.transpose() * &inv * p)[(0, 0)];
            if g > g_max {
                g_max = g;
                j_max = i;
            }
        }
        gap = g_max / d - 1.0;
        if gap <= eps_gap {
            let mut q = inv / d;
            // Post-scale for exact containment.
            let mut worst = 0.0f64;
            for p in points {
                worst = worst.max((p.transpose() * &q * p)[(0, 0)]);
            }
            if worst > 1.0 {
                q /= worst;
            }
            return Ok(MveeResult {
                q,
                gap: gap.max(0.0),
                regularized,
                iterations,
            });
        }
        // Multiplicative-weights step toward the worst point.
        let step = (g_max / d - 1.0) / (g_max - 1.0);
        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[j_max] += step;
    }
    Err(InitSetError::MveeStalled { gap })
}
