//! Positive-definite ellipsoid matrix parameterized through a spectral
//! decomposition: `Q = V Λ Vᵀ` with `Λ = diag(exp d̄_i)` and `V` the Cayley
//! transform of the skew-symmetric part of a free matrix.

use nalgebra::{DMatrix, DVector};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct CayleyEllipsoid {
    pub d_bar: DVec,
    pub u_free: DMat,
}

#[derive(Clone, Debug)]
pub struct CayleyGrads {
    pub d_bar: DVec,
    pub u_free: DMat,
}

pub struct CayleyCache {
    pub v: DMat,
    pub lambda: DVec,
    /// (I + skew)⁻¹, reused by the backward pass.
    inv_i_plus_skew: DMat,
}

impl CayleyEllipsoid {
    pub fn identity(dim: usize) -> Self {
        Self {
            d_bar: DVec::zeros(dim),
            u_free: DMat::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.d_bar.len()
    }

    /// Realize `Q` together with the cache needed for gradients.
    pub fn realize_with_cache(&self) -> (DMat, CayleyCache) {
        let n = self.dim();
        let skew = &self.u_free - self.u_free.transpose();
        let inv = (DMat::identity(n, n) + &skew)
            .try_inverse()
            .expect("I + skew-symmetric is always invertible");
        let v = (DMat::identity(n, n) - &skew) * &inv;
        let lambda = self.d_bar.map(f64::exp);
        let q = &v * DMat::from_diagonal(&lambda) * v.transpose();
        // Symmetrize away rounding.
        let q = 0.5 * (&q + q.transpose());
        (
            q,
            CayleyCache {
                v,
                lambda,
                inv_i_plus_skew: inv,
            },
        )
    }

    pub fn realize(&self) -> DMat {
        self.realize_with_cache().0
    }

    /// Volume surrogate `exp(−½ Σ d̄_i)`, proportional to `√det(Q⁻¹)`.
    pub fn volume_loss(&self) -> f64 {
        (-0.5 * self.d_bar.sum()).exp()
    }

    /// Backward pass: upstream gradient with respect to `Q` (plus an extra
    /// direct `d_bar` gradient from the volume term) into parameter space.
    pub fn backward(&self, cache: &CayleyCache, upstream_q: &DMat, volume_weight: f64) -> CayleyGrads {
        let n = self.dim();
        let gq = 0.5 * (upstream_q + upstream_q.transpose());
        // Q = V Λ Vᵀ ⇒ ∂L/∂V = (G + Gᵀ) V Λ, ∂L/∂λ_i = (Vᵀ G V)_{ii}.
        let gv = 2.0 * &gq * &cache.v * DMat::from_diagonal(&cache.lambda);
        let vgv = cache.v.transpose() * &gq * &cache.v;
        let mut g_dbar = DVec::zeros(n);
        for i in 0..n {
            g_dbar[i] = vgv[(i, i)] * cache.lambda[i];
        }
        // Volume term: L_vol = exp(−½Σd̄) ⇒ ∂/∂d̄_i = −½ L_vol.
        if volume_weight != 0.0 {
            let lv = self.volume_loss();
            for i in 0..n {
                g_dbar[i] += volume_weight * (-0.5) * lv;
            }
        }
        // V = (I − S)(I + S)⁻¹ with S = U − Uᵀ:
        // dV = −(I + V) dS (I + S)⁻¹, so ∂L/∂S = −(I + V)ᵀ (∂L/∂V) (I + S)⁻ᵀ.
        let gs = -(DMat::identity(n, n) + &cache.v).transpose()
            * &gv
            * cache.inv_i_plus_skew.transpose();
        let gu = &gs - gs.transpose();
        CayleyGrads {
            d_bar: g_dbar,
            u_free: gu,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_parameters_realize_identity() {
        let e = CayleyEllipsoid::identity(4);
        assert!((e.realize() - DMat::identity(4, 4)).amax() < 1e-14);
        assert_eq!(e.volume_loss(), 1.0);
    }

    #[test]
    fn volume_loss_is_analytic_in_d_bar() {
        let mut e = CayleyEllipsoid::identity(3);
        e.d_bar[0] = 2.0;
        assert_relative_eq!(e.volume_loss(), (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn volume_loss_matches_determinant() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut e = CayleyEllipsoid::identity(5);
        e.d_bar = DVec::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        e.u_free = DMat::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let q = e.realize();
        let det_inv_sqrt = (1.0 / q.determinant()).sqrt();
        assert_relative_eq!(e.volume_loss(), det_inv_sqrt, max_relative = 1e-10);
    }

    #[test]
    fn eigenvalues_are_exponentials_of_d_bar() {
        let mut rng = StdRng::seed_from_u64(6);
        let mut e = CayleyEllipsoid::identity(4);
        e.d_bar = DVec::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
        e.u_free = DMat::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let q = e.realize();
        let mut eig: Vec<f64> = numlin::sym_eig(&q).0.iter().copied().collect();
        let mut expd: Vec<f64> = e.d_bar.iter().map(|d| d.exp()).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expd.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in eig.iter().zip(expd.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(12);
        let mut e = CayleyEllipsoid::identity(3);
        e.d_bar = DVec::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        e.u_free = DMat::from_fn(3, 3, |_, _| rng.gen_range(-0.5..0.5));
        // Loss: tr(C Q) + volume_loss for a fixed symmetric C.
        let c0 = DMat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let c = 0.5 * (&c0 + c0.transpose());
        let loss = |e: &CayleyEllipsoid| -> f64 {
            let q = e.realize();
            (0..3)
                .map(|i| (0..3).map(|j| c[(i, j)] * q[(i, j)]).sum::<f64>())
                .sum::<f64>()
                + e.volume_loss()
        };
        let (_, cache) = e.realize_with_cache();
        let g = e.backward(&cache, &c, 1.0);
        let h = 1e-6;
        for i in 0..3 {
            let mut ep = e.clone();
            let mut em = e.clone();
            ep.d_bar[i] += h;
            em.d_bar[i] -= h;
            let fd = (loss(&ep) - loss(&em)) / (2.0 * h);
            assert_relative_eq!(g.d_bar[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
        for r in 0..3 {
            for cidx in 0..3 {
                let mut ep = e.clone();
                let mut em = e.clone();
                ep.u_free[(r, cidx)] += h;
                em.u_free[(r, cidx)] -= h;
                let fd = (loss(&ep) - loss(&em)) / (2.0 * h);
                assert_relative_eq!(g.u_free[(r, cidx)], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn realized_matrix_is_positive_definite(
            seed in 0u64..1000,
            dim in 1usize..6,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut e = CayleyEllipsoid::identity(dim);
            e.d_bar = DVec::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0));
            e.u_free = DMat::from_fn(dim, dim, |_, _| rng.gen_range(-5.0..5.0));
            let q = e.realize();
            let sym_res = (&q - q.transpose()).amax();
            prop_assert!(sym_res < 1e-12);
            prop_assert!(numlin::min_eig(&q) > 0.0);
        }
    }
}
