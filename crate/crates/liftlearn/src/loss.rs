//! Recurrent rollout of the lifted LPV dynamics over trajectory snapshots,
//! the composite training loss, and its reverse-mode gradients.
//!
//! A batch of snapshots is processed with the batch as the column dimension,
//! so network evaluations and the rollout recursion are matrix products.

use nalgebra::{DMatrix, DVector};
use sysmodels::TrajectorySnapshot;

use crate::cayley::CayleyGrads;
use crate::mlp::MlpGrads;
use crate::model::{InputMode, TrainableModel};

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub kappa: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta1: 1e-4,
            beta2: 1.0,
            rho: 0.9,
            kappa: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LossValues {
    pub dyn_loss: f64,
    pub ell_loss: f64,
    pub vol_loss: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub a: DMat,
    pub b: Vec<DMat>,
    pub phi: MlpGrads,
    pub mu: MlpGrads,
    pub cayley: CayleyGrads,
}

impl ModelGrads {
    pub fn zeros_like(m: &TrainableModel) -> Self {
        Self {
            a: DMat::zeros(m.n_lift, m.n_lift),
            b: m.b.iter().map(|b| DMat::zeros(b.nrows(), b.ncols())).collect(),
            phi: MlpGrads::zeros_like(&m.phi),
            mu: MlpGrads::zeros_like(&m.mu),
            cayley: CayleyGrads {
                d_bar: DVec::zeros(m.n_bar()),
                u_free: DMat::zeros(m.n_bar(), m.n_bar()),
            },
        }
    }

    pub fn accumulate(&mut self, other: &ModelGrads) {
        self.a += &other.a;
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
        self.phi.accumulate(&other.phi);
        self.mu.accumulate(&other.mu);
        self.cayley.d_bar += &other.cayley.d_bar;
        self.cayley.u_free += &other.cayley.u_free;
    }

    pub fn scale(&mut self, s: f64) {
        self.a *= s;
        for b in &mut self.b {
            *b *= s;
        }
        for w in &mut self.phi.weights {
            *w *= s;
        }
        for b in &mut self.phi.biases {
            *b *= s;
        }
        for w in &mut self.mu.weights {
            *w *= s;
        }
        for b in &mut self.mu.biases {
            *b *= s;
        }
        self.cayley.d_bar *= s;
        self.cayley.u_free *= s;
    }
}

/// Model input ũ at one step: `[u; v]` for separate channels, `u + v` for a
/// shared channel.
pub fn model_input(mode: InputMode, u: &DVec, v: &DVec) -> DVec {
    match mode {
        InputMode::Separate => {
            let mut out = DVec::zeros(u.len() + v.len());
            out.rows_mut(0, u.len()).copy_from(u);
            out.rows_mut(u.len(), v.len()).copy_from(v);
            out
        }
        InputMode::Shared => u + v,
    }
}

/// Open-loop rollout of the lifted dynamics from `z0` under the given model
/// inputs; returns the predicted lifted states z₁..z_T.
pub fn rollout(model: &TrainableModel, z0: &DVec, inputs: &[DVec]) -> Vec<DVec> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut z = z0.clone();
    for u in inputs {
        let delta = if model.p > 0 {
            model.mu.forward(&z)
        } else {
            DVec::zeros(0)
        };
        let mut next = &model.a * &z + &model.b[0] * u;
        for j in 0..model.p {
            next += &model.b[j + 1] * u * delta[j];
        }
        z = next;
        out.push(z.clone());
    }
    out
}

/// Forward + reverse pass over a batch of snapshots. Returns the per-batch
/// loss values (already averaged per snapshot, then per batch) and the
/// parameter gradients of the total loss.
pub fn batch_loss_and_grads(
    model: &TrainableModel,
    batch: &[&TrajectorySnapshot],
    w: &LossWeights,
) -> (LossValues, ModelGrads) {
    let s_count = batch.len();
    assert!(s_count > 0);
    let horizon = batch[0].horizon();
    assert!(batch.iter().all(|s| s.horizon() == horizon));
    let n = model.n;
    let n_lift = model.n_lift;
    let n_bar = model.n_bar();
    let sf = s_count as f64;
    let tf = horizon as f64;
    let nf = n_lift as f64;

    // All snapshot states, columns ordered (snapshot s, step i).
    let cols = s_count * (horizon + 1);
    let col_of = |s: usize, i: usize| s * (horizon + 1) + i;
    let mut x_all = DMat::zeros(n, cols);
    for (s, snap) in batch.iter().enumerate() {
        for i in 0..=horizon {
            x_all.view_mut((0, col_of(s, i)), (n, 1)).copy_from(&snap.x[i]);
        }
    }
    let (phi_all, phi_cache) = model.phi.forward_batch(&x_all);

    // Model inputs per step (input_dim × s_count).
    let inputs: Vec<DMat> = (0..horizon)
        .map(|i| {
            let mut m = DMat::zeros(model.input_dim(), s_count);
            for (s, snap) in batch.iter().enumerate() {
                let ut = model_input(model.input_mode, &snap.u[i], &snap.v[i]);
                m.view_mut((0, s), (model.input_dim(), 1)).copy_from(&ut);
            }
            m
        })
        .collect();

    // Rollout with cached lifted states and scheduling evaluations.
    let mut z = DMat::zeros(n_lift, s_count);
    for (s, snap) in batch.iter().enumerate() {
        z.view_mut((0, s), (n, 1)).copy_from(&snap.x[0]);
        for r in 0..n_bar {
            z[(n + r, s)] = phi_all[(r, col_of(s, 0))];
        }
    }
    let mut zs = Vec::with_capacity(horizon + 1);
    let mut deltas = Vec::with_capacity(horizon);
    let mut mu_caches = Vec::with_capacity(horizon);
    zs.push(z.clone());
    for i in 0..horizon {
        let (delta, cache) = if model.p > 0 {
            let (d, c) = model.mu.forward_batch(&z);
            (d, Some(c))
        } else {
            (DMat::zeros(0, s_count), None)
        };
        let mut next = &model.a * &z + &model.b[0] * &inputs[i];
        for j in 0..model.p {
            let mut scaled = &model.b[j + 1] * &inputs[i];
            for (sc, col) in scaled.column_iter_mut().enumerate() {
                let mut col = col;
                col *= delta[(j, sc)];
            }
            next += scaled;
        }
        deltas.push(delta);
        mu_caches.push(cache);
        z = next;
        zs.push(z.clone());
    }

    let (q, q_cache) = model.ellipsoid.realize_with_cache();

    // ---- Loss values ----
    let mut dyn_loss = 0.0;
    for (s, snap) in batch.iter().enumerate() {
        let mut acc = 0.0;
        for i in 1..=horizon {
            let zc = zs[i].column(s);
            let mut err2 = 0.0;
            for r in 0..n {
                let e = snap.x[i][r] - zc[r];
                err2 += e * e;
            }
            for r in 0..n_bar {
                let e = phi_all[(r, col_of(s, i))] - zc[n + r];
                err2 += e * e;
            }
            acc += w.rho.powi(i as i32 - 1) * err2 / nf;
        }
        dyn_loss += acc / tf;
    }
    dyn_loss /= sf;

    let mut ell_loss = 0.0;
    // Hinge activations cached for the backward pass: (col, a_factor, b_val).
    let mut ell_active: Vec<(usize, f64)> = Vec::new();
    for (s, snap) in batch.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..=horizon {
            let x = &snap.x[i];
            let xpx = (x.transpose() * &model.p_matrix * x)[(0, 0)];
            let a = (1.0 + w.kappa - xpx).max(0.0);
            if a <= 0.0 {
                continue;
            }
            let c = col_of(s, i);
            let phi_col = phi_all.column(c);
            let qphi = &q * &phi_col;
            let b = (phi_col.dot(&qphi) - 1.0).max(0.0);
            if b > 0.0 {
                acc += a * b;
                ell_active.push((c, a));
            }
        }
        ell_loss += acc / (tf + 1.0);
    }
    ell_loss /= sf;

    let vol_loss = model.ellipsoid.volume_loss();
    let total = dyn_loss + w.beta1 * ell_loss + w.beta2 * vol_loss;

    // ---- Backward ----
    let mut grads = ModelGrads::zeros_like(model);
    let mut up_phi = DMat::zeros(n_bar, cols);
    let mut gz: Vec<DMat> = (0..=horizon).map(|_| DMat::zeros(n_lift, s_count)).collect();
    let mut dq = DMat::zeros(n_bar, n_bar);

    // Containment hinge.
    let ell_w = w.beta1 / (sf * (tf + 1.0));
    for (c, a) in &ell_active {
        let phi_col = phi_all.column(*c).into_owned();
        let qphi = &q * &phi_col;
        let scale = ell_w * a;
        for r in 0..n_bar {
            up_phi[(r, *c)] += scale * 2.0 * qphi[r];
        }
        dq += scale * &phi_col * phi_col.transpose();
    }

    // Prediction error.
    let dyn_w = 2.0 / (sf * tf * nf);
    for (s, snap) in batch.iter().enumerate() {
        for i in 1..=horizon {
            let zc = zs[i].column(s);
            let rho_w = dyn_w * w.rho.powi(i as i32 - 1);
            for r in 0..n {
                let e = snap.x[i][r] - zc[r];
                gz[i][(r, s)] -= rho_w * e;
            }
            for r in 0..n_bar {
                let e = phi_all[(r, col_of(s, i))] - zc[n + r];
                up_phi[(r, col_of(s, i))] += rho_w * e;
                gz[i][(n + r, s)] -= rho_w * e;
            }
        }
    }

    // Backward through the rollout recursion.
    for i in (0..horizon).rev() {
        let g = gz[i + 1].clone();
        if g.amax() == 0.0 {
            continue;
        }
        grads.a += &g * zs[i].transpose();
        grads.b[0] += &g * inputs[i].transpose();
        let mut d_delta = DMat::zeros(model.p.max(1), s_count);
        for j in 0..model.p {
            let bju = &model.b[j + 1] * &inputs[i];
            let mut scaled_g = g.clone();
            for (sc, col) in scaled_g.column_iter_mut().enumerate() {
                let mut col = col;
                col *= deltas[i][(j, sc)];
            }
            grads.b[j + 1] += scaled_g * inputs[i].transpose();
            for s in 0..s_count {
                d_delta[(j, s)] = bju.column(s).dot(&g.column(s));
            }
        }
        let mut flow = model.a.transpose() * &g;
        if model.p > 0 {
            let cache = mu_caches[i].as_ref().expect("mu cache for p > 0");
            let (mg, dz) = model.mu.backward_batch(cache, &d_delta);
            grads.mu.accumulate(&mg);
            flow += dz;
        }
        gz[i] += flow;
    }

    // Initial lift feeds the tail of z₀.
    for s in 0..s_count {
        for r in 0..n_bar {
            up_phi[(r, col_of(s, 0))] += gz[0][(n + r, s)];
        }
    }

    let (phi_grads, _) = model.phi.backward_batch(&phi_cache, &up_phi);
    grads.phi.accumulate(&phi_grads);
    grads.cayley = model.ellipsoid.backward(&q_cache, &dq, w.beta2);

    (
        LossValues {
            dyn_loss,
            ell_loss,
            vol_loss,
            total,
        },
        grads,
    )
}

/// Prediction loss alone (no gradients), for epoch reporting.
pub fn dyn_loss_only(model: &TrainableModel, snaps: &[TrajectorySnapshot], rho: f64) -> f64 {
    if snaps.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for snap in snaps {
        let z0 = model.lift(&snap.x[0]);
        let inputs: Vec<DVec> = (0..snap.horizon())
            .map(|i| model_input(model.input_mode, &snap.u[i], &snap.v[i]))
            .collect();
        let preds = rollout(model, &z0, &inputs);
        let mut acc = 0.0;
        for (i, z) in preds.iter().enumerate() {
            let target = model.lift(&snap.x[i + 1]);
            let e = target - z;
            acc += rho.powi(i as i32) * e.norm_squared() / model.n_lift as f64;
        }
        total += acc / snap.horizon() as f64;
    }
    total / snaps.len() as f64
}
