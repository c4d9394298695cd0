//! Post-training refinement of the initial-state ellipsoid: centered MVEE
//! over the lifted initial samples, alternated with counterexample search
//! until no violating point is found or the round budget runs out.

pub mod mvee;
pub mod search;

use liftlearn::LiftedLpvModel;
use nalgebra::{DMatrix, DVector};

pub use mvee::{mvee_centered, MveeResult};
pub use search::{counterexample_search, Counterexample, SearchConfig};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Debug, thiserror::Error)]
pub enum InitSetError {
    #[error("no points supplied")]
    NoPoints,
    #[error("multiplicative-weights iteration stalled at gap {gap}")]
    MveeStalled { gap: f64 },
}

/// Original-state / lifted-component ellipsoid pair defining the initial
/// set.
#[derive(Clone, Debug)]
pub struct EllipsoidPair {
    pub p: DMat,
    pub q: DMat,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub pair: EllipsoidPair,
    pub rounds: usize,
    pub sample_count: usize,
    pub gap: f64,
    /// True when the final round's search still produced a counterexample
    /// (round budget exhausted).
    pub exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct RefineConfig {
    pub max_rounds: usize,
    pub eps_gap: f64,
    pub search: SearchConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            eps_gap: 1e-3,
            search: SearchConfig::default(),
        }
    }
}

/// Alternate centered-MVEE fitting over the lifted initial samples (plus any
/// counterexample images found so far) with counterexample search, until the
/// search comes back empty or `max_rounds` is hit.
pub fn refine(
    model: &LiftedLpvModel,
    initial_states: &[DVec],
    cfg: &RefineConfig,
) -> Result<RefineOutcome, InitSetError> {
    assert!(cfg.max_rounds >= 1);
    let mut samples: Vec<DVec> = initial_states
        .iter()
        .filter(|x| (x.transpose() * &model.p_matrix * *x)[(0, 0)] <= 1.0 + 1e-12)
        .map(|x| model.lift_tail(x))
        .collect();
    if samples.is_empty() {
        return Err(InitSetError::NoPoints);
    }
    let mut rounds = 0;
    let mut gap = 0.0;
    let mut q = DMat::identity(model.n_bar(), model.n_bar());
    let mut exhausted = false;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let fit = mvee_centered(&samples, cfg.eps_gap)?;
        q = fit.q;
        gap = fit.gap;
        match counterexample_search(model, &q, &cfg.search) {
            None => {
                exhausted = false;
                break;
            }
            Some(ce) => {
                samples.push(model.lift_tail(&ce.x));
                exhausted = true;
            }
        }
    }
    Ok(RefineOutcome {
        pair: EllipsoidPair {
            p: model.p_matrix.clone(),
            q,
        },
        rounds,
        sample_count: samples.len(),
        gap,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use liftlearn::{InputMode, Mlp, TrainableModel};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

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

    fn dense_samples(rng: &mut StdRng, count: usize) -> Vec<DVec> {
        (0..count)
            .map(|_| sysmodels::sample_in_ellipsoid(&DMat::identity(2, 2), rng))
            .collect()
    }

    #[test]
    fn dense_dataset_converges_in_one_round() {
        // The samples include the exact extreme of the (one-dimensional)
        // lifted image, so the first MVEE is already tight and the search
        // cannot beat it.
        let model = linear_model(DMat::from_row_slice(1, 2, &[0.5, 0.0]));
        let mut rng = StdRng::seed_from_u64(21);
        let mut samples = dense_samples(&mut rng, 50);
        samples.push(DVec::from_row_slice(&[1.0, 0.0]));
        samples.push(DVec::from_row_slice(&[-1.0, 0.0]));
        let out = refine(&model, &samples, &RefineConfig::default()).unwrap();
        assert_eq!(out.rounds, 1);
        assert!(!out.exhausted);
        for x in &samples {
            let im = model.lift_tail(x);
            assert!((im.transpose() * &out.pair.q * &im)[(0, 0)] <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn planted_violation_grows_the_ellipsoid() {
        // Sparse samples leave the long axis of the image uncovered; the
        // search must find it and refinement must expand the ellipsoid.
        let model = linear_model(DMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.2]));
        // Samples only near the short axis direction.
        let samples: Vec<DVec> = (0..40)
            .map(|i| {
                let t = (i as f64 / 39.0) * 2.0 - 1.0;
                DVec::from_row_slice(&[0.05 * t, 0.9 * t])
            })
            .collect();
        let out = refine(
            &model,
            &samples,
            &RefineConfig {
                max_rounds: 6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.rounds <= 6);
        assert!(!out.exhausted, "refinement should terminate via empty search");
        // The worst-case direction x = (1, 0) maps to (2, 0): must now be
        // (approximately) inside.
        let probe = model.lift_tail(&DVec::from_row_slice(&[1.0, 0.0]));
        let level = (probe.transpose() * &out.pair.q * &probe)[(0, 0)];
        assert!(level <= 1.0 + 1e-6, "planted direction remains outside: {level}");
    }

    #[test]
    fn volume_never_shrinks_across_rounds() {
        // Replay the refinement loop manually, tracking det(Q⁻¹).
        let model = linear_model(DMat::from_row_slice(2, 2, &[1.8, 0.3, -0.2, 0.4]));
        let mut rng = StdRng::seed_from_u64(5);
        let mut samples: Vec<DVec> = dense_samples(&mut rng, 6)
            .iter()
            .map(|x| model.lift_tail(x))
            .collect();
        let mut last_vol = 0.0f64;
        for _ in 0..5 {
            let fit = mvee_centered(&samples, 1e-4).unwrap();
            let vol = 1.0 / fit.q.determinant();
            // Exact MVEE volume is monotone in the point set; the iterative
            // fit is optimal within the duality gap, so allow that slack.
            assert!(
                vol >= last_vol * (1.0 - 1e-3),
                "det Q⁻¹ decreased: {last_vol} → {vol}"
            );
            last_vol = vol;
            match counterexample_search(&model, &fit.q, &SearchConfig::default()) {
                None => break,
                Some(ce) => samples.push(model.lift_tail(&ce.x)),
            }
        }
    }
}
