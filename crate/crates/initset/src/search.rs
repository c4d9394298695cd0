//! Multi-start projected-gradient counterexample search: maximize the
//! lifted-component ellipsoid level Φ̄(x)ᵀQΦ̄(x) over x ∈ ε(P).

use liftlearn::LiftedLpvModel;
use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub restarts: usize,
    pub step: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            step: 1e-2,
            iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub x: DVec,
    pub utility: f64,
}

fn project_to_ellipsoid(x: &DVec, p: &DMat) -> DVec {
    let level = (x.transpose() * p * x)[(0, 0)];
    if level <= 1.0 {
        x.clone()
    } else {
        x / level.sqrt()
    }
}

/// Search for `x` with `xᵀPx ≤ 1` and `Φ̄(x)ᵀQΦ̄(x) > 1`. Absence of a
/// counterexample after the restart budget is a "not found", never a proof
/// of nonexistence.
pub fn counterexample_search(
    model: &LiftedLpvModel,
    q: &DMat,
    cfg: &SearchConfig,
) -> Option<Counterexample> {
    assert!(cfg.restarts >= 1);
    let p = &model.p_matrix;
    let utility = |x: &DVec| -> f64 {
        let phi = model.lift_tail(x);
        (phi.transpose() * q * &phi)[(0, 0)]
    };

    let best = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64 + 1);
            let mut x = sysmodels::sample_in_ellipsoid(p, &mut rng);
            let mut best_local = (utility(&x), x.clone());
            for _ in 0..cfg.iterations {
                let phi = model.lift_tail(&x);
                // ∇ₓ Φ̄ᵀQΦ̄ = 2 J_Φ̄(x)ᵀ Q Φ̄(x), via reverse mode.
                let upstream = 2.0 * q * &phi;
                let grad = model.phi.input_gradient(&x, &upstream);
                x = project_to_ellipsoid(&(&x + cfg.step * grad), p);
                let u = utility(&x);
                if u > best_local.0 {
                    best_local = (u, x.clone());
                }
            }
            (r, best_local.0, best_local.1)
        })
        .reduce_with(|a, b| {
            // Maximum utility; ties break toward the lowest restart index.
            if (b.1, std::cmp::Reverse(b.0)) > (a.1, std::cmp::Reverse(a.0)) {
                b
            } else {
                a
            }
        })?;

    if best.1 > 1.0 + 1e-9 {
        Some(Counterexample {
            x: best.2,
            utility: best.1,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use liftlearn::{InputMode, Mlp, TrainableModel};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    /// Model whose lifting tail is the linear map `Φ̄(x) = L x`.
    fn linear_model(l: DMat) -> LiftedLpvModel {
        let n = l.ncols();
        let n_bar = l.nrows();
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = TrainableModel::init(
            n,
            n + n_bar,
            0,
            1,
            1,
            &[],
            InputMode::Shared,
            0.02,
            DMat::identity(n, n),
            &mut rng,
        )
        .finish(vec![], vec![]);
        m.phi = Mlp {
            widths: vec![n, n_bar],
            weights: vec![l],
            biases: vec![DVec::zeros(n_bar)],
        };
        m
    }

    #[test]
    fn huge_ellipsoid_has_no_counterexample() {
        let model = linear_model(DMat::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.8]));
        let q = DMat::identity(2, 2) * 1e-6;
        assert!(counterexample_search(&model, &q, &SearchConfig::default()).is_none());
    }

    #[test]
    fn linear_case_matches_the_eigenvalue_criterion() {
        // For Φ̄ = Lx and P = I, a counterexample exists iff
        // λmax(LᵀQL) > 1.
        let l = DMat::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.7]);
        let model = linear_model(l.clone());

        // Case 1: Q small enough that λmax < 1.
        let q_small = DMat::identity(2, 2) * 0.5;
        let lam_small = numlin::sym_eig(&(l.transpose() * &q_small * &l)).0.max();
        assert!(lam_small < 1.0);
        assert!(counterexample_search(&model, &q_small, &SearchConfig::default()).is_none());

        // Case 2: Q large enough that λmax > 1.
        let q_big = DMat::identity(2, 2) * 1.4;
        let lam_big = numlin::sym_eig(&(l.transpose() * &q_big * &l)).0.max();
        assert!(lam_big > 1.0);
        let found = counterexample_search(&model, &q_big, &SearchConfig::default())
            .expect("counterexample must exist");
        // The found point is feasible and violating.
        assert!((found.x.transpose() * &model.p_matrix * &found.x)[(0, 0)] <= 1.0 + 1e-12);
        assert!(found.utility > 1.0);
    }

    #[test]
    fn seeded_search_is_deterministic() {
        let model = linear_model(DMat::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.4]));
        let q = DMat::identity(2, 2) * 1.2;
        let a = counterexample_search(&model, &q, &SearchConfig::default()).unwrap();
        let b = counterexample_search(&model, &q, &SearchConfig::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.utility, b.utility);
    }

    #[test]
    fn iterates_stay_inside_the_constraint() {
        let p = DMat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let x = DVec::from_row_slice(&[3.0, 3.0]);
        let proj = project_to_ellipsoid(&x, &p);
        let level = (proj.transpose() * &p * &proj)[(0, 0)];
        assert!((level - 1.0).abs() < 1e-12);
        let inside = DVec::from_row_slice(&[0.1, 0.1]);
        assert_eq!(project_to_ellipsoid(&inside, &p), inside);
    }
}
