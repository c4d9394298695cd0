//! Adam training loop over trajectory snapshots, with deterministic chunked
//! data-parallel gradient evaluation and scheduling-parameter bound
//! estimation from the learning dataset.

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sysmodels::{Dataset, TrajectorySnapshot};

use crate::loss::{batch_loss_and_grads, dyn_loss_only, model_input, LossWeights, ModelGrads};
use crate::model::TrainableModel;
use crate::LiftError;

type DVec = DVector<f64>;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub seed: u64,
    /// Number of parallel gradient chunks per batch. The chunk layout is
    /// fixed by this value (not by the thread count), so results are
    /// bit-reproducible for a given configuration; 1 forces a fully
    /// sequential evaluation.
    pub chunks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            epochs: 1000,
            batch_size: 512,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 10.0,
            seed: 0,
            chunks: 4,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_dyn: f64,
    pub val_dyn: f64,
    pub train_total: f64,
    pub ell: f64,
    pub vol: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: TrainableModel,
    pub history: Vec<EpochStats>,
    /// True when training aborted on a non-finite loss; the model is the
    /// last finite checkpoint.
    pub aborted: bool,
}

pub fn params_to_vec(m: &TrainableModel) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend(m.a.iter());
    for b in &m.b {
        v.extend(b.iter());
    }
    for w in &m.phi.weights {
        v.extend(w.iter());
    }
    for b in &m.phi.biases {
        v.extend(b.iter());
    }
    for w in &m.mu.weights {
        v.extend(w.iter());
    }
    for b in &m.mu.biases {
        v.extend(b.iter());
    }
    v.extend(m.ellipsoid.d_bar.iter());
    v.extend(m.ellipsoid.u_free.iter());
    v
}

pub fn set_params_from_vec(m: &mut TrainableModel, v: &[f64]) {
    let mut it = v.iter();
    let mut fill = |dst: &mut [f64]| {
        for d in dst {
            *d = *it.next().expect("parameter vector too short");
        }
    };
    fill(m.a.as_mut_slice());
    for b in &mut m.b {
        fill(b.as_mut_slice());
    }
    for w in &mut m.phi.weights {
        fill(w.as_mut_slice());
    }
    for b in &mut m.phi.biases {
        fill(b.as_mut_slice());
    }
    for w in &mut m.mu.weights {
        fill(w.as_mut_slice());
    }
    for b in &mut m.mu.biases {
        fill(b.as_mut_slice());
    }
    fill(m.ellipsoid.d_bar.as_mut_slice());
    fill(m.ellipsoid.u_free.as_mut_slice());
    assert!(it.next().is_none(), "parameter vector too long");
}

pub fn grads_to_vec(g: &ModelGrads) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend(g.a.iter());
    for b in &g.b {
        v.extend(b.iter());
    }
    for w in &g.phi.weights {
        v.extend(w.iter());
    }
    for b in &g.phi.biases {
        v.extend(b.iter());
    }
    for w in &g.mu.weights {
        v.extend(w.iter());
    }
    for b in &g.mu.biases {
        v.extend(b.iter());
    }
    v.extend(g.cayley.d_bar.iter());
    v.extend(g.cayley.u_free.iter());
    v
}

/// Deterministically chunked batch gradient: the batch is split into
/// `chunks` contiguous slices evaluated in parallel and combined in slice
/// order with size weights, which reproduces the single-pass result exactly.
fn chunked_loss_and_grads(
    model: &TrainableModel,
    batch: &[&TrajectorySnapshot],
    w: &LossWeights,
    chunks: usize,
) -> (f64, f64, f64, f64, ModelGrads) {
    let k = chunks.clamp(1, batch.len());
    let chunk_size = batch.len().div_ceil(k);
    let parts: Vec<_> = batch
        .chunks(chunk_size)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|chunk| {
            let (vals, grads) = batch_loss_and_grads(model, chunk, w);
            (chunk.len(), vals, grads)
        })
        .collect();
    let total_len = batch.len() as f64;
    let mut grads = ModelGrads::zeros_like(model);
    let (mut d, mut e, mut v, mut t) = (0.0, 0.0, 0.0, 0.0);
    for (len, vals, mut g) in parts {
        let wgt = len as f64 / total_len;
        g.scale(wgt);
        grads.accumulate(&g);
        d += wgt * vals.dyn_loss;
        e += wgt * vals.ell_loss;
        v += wgt * vals.vol_loss;
        t += wgt * vals.total;
    }
    (d, e, v, t, grads)
}

/// Minimize the composite loss over the training snapshots with Adam.
pub fn train(
    mut model: TrainableModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutput, LiftError> {
    if dataset.train.is_empty() {
        return Err(LiftError::EmptyDataset);
    }
    let n_params = params_to_vec(&model).len();
    let mut adam_m = vec![0.0f64; n_params];
    let mut adam_v = vec![0.0f64; n_params];
    let mut step = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut checkpoint = params_to_vec(&model);

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 0..cfg.epochs {
        // Fisher–Yates shuffle with the deterministic stream.
        for i in (1..order.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let (mut dyn_acc, mut ell_acc, mut vol_acc, mut tot_acc) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrajectorySnapshot> =
                chunk.iter().map(|&i| &dataset.train[i]).collect();
            let (d, e, v, t, grads) =
                chunked_loss_and_grads(&model, &batch, &cfg.weights, cfg.chunks);
            if !t.is_finite() {
                set_params_from_vec(&mut model, &checkpoint);
                return Ok(TrainOutput {
                    model,
                    history,
                    aborted: true,
                });
            }
            dyn_acc += d;
            ell_acc += e;
            vol_acc += v;
            tot_acc += t;
            batches += 1.0;

            let mut g = grads_to_vec(&grads);
            let norm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let s = cfg.grad_clip / norm;
                for x in &mut g {
                    *x *= s;
                }
            }
            step += 1;
            let mut params = params_to_vec(&model);
            let bc1 = 1.0 - cfg.adam_beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.adam_beta2.powi(step as i32);
            for i in 0..n_params {
                adam_m[i] = cfg.adam_beta1 * adam_m[i] + (1.0 - cfg.adam_beta1) * g[i];
                adam_v[i] = cfg.adam_beta2 * adam_v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let mhat = adam_m[i] / bc1;
                let vhat = adam_v[i] / bc2;
                params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
            set_params_from_vec(&mut model, &params);
        }
        checkpoint = params_to_vec(&model);
        let val_dyn = dyn_loss_only(&model, &dataset.val, cfg.weights.rho);
        history.push(EpochStats {
            epoch,
            train_dyn: dyn_acc / batches,
            val_dyn,
            train_total: tot_acc / batches,
            ell: ell_acc / batches,
            vol: vol_acc / batches,
        });
    }
    Ok(TrainOutput {
        model,
        history,
        aborted: false,
    })
}

/// Per-parameter (lower, upper) bounds of μ(Φ(x)) over all dataset states,
/// widened by a 5% margin, and rate bounds from consecutive samples widened
/// the same way.
pub fn estimate_param_bounds(
    model: &TrainableModel,
    dataset: &Dataset,
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let p = model.p;
    if p == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    let mut rate = vec![0.0f64; p];
    for snap in dataset.all_snapshots() {
        let mut prev: Option<DVec> = None;
        for x in &snap.x {
            let delta = model.schedule(&model.lift(x));
            for j in 0..p {
                lo[j] = lo[j].min(delta[j]);
                hi[j] = hi[j].max(delta[j]);
            }
            if let Some(prev) = &prev {
                for j in 0..p {
                    rate[j] = rate[j].max((delta[j] - prev[j]).abs());
                }
            }
            prev = Some(delta);
        }
    }
    let bounds = (0..p)
        .map(|j| {
            let c = 0.5 * (hi[j] + lo[j]);
            let r = 0.5 * (hi[j] - lo[j]) * 1.05;
            (c - r, c + r)
        })
        .collect();
    let rates = rate.iter().map(|r| r * 1.05).collect();
    (bounds, rates)
}

/// Empirical rollout inputs for a snapshot, shared by evaluation paths.
pub fn snapshot_inputs(model: &TrainableModel, snap: &TrajectorySnapshot) -> Vec<DVec> {
    (0..snap.horizon())
        .map(|i| model_input(model.input_mode, &snap.u[i], &snap.v[i]))
        .collect()
}
