//! Minimal feed-forward network with ELU hidden activations and identity
//! output, with batched forward and reverse-mode passes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// input, hidden..., output widths.
    pub widths: Vec<usize>,
    /// weights[l]: widths[l+1] × widths[l].
    pub weights: Vec<DMat>,
    pub biases: Vec<DVec>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub weights: Vec<DMat>,
    pub biases: Vec<DVec>,
}

/// Per-layer activations cached by the forward pass; `act[0]` is the input.
pub struct MlpCache {
    act: Vec<DMat>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_deriv_from_output(y: f64) -> f64 {
    // For y = elu(x): derivative is 1 for x > 0 and e^x = y + 1 otherwise.
    if y > 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

impl Mlp {
    /// Fan-in-scaled uniform initialization.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let bound = 1.0 / (widths[l] as f64).sqrt();
            weights.push(DMat::from_fn(widths[l + 1], widths[l], |_, _| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(DVec::zeros(widths[l + 1]));
        }
        Self {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        let mut m = Self::new(widths, &mut rand::rngs::mock::StepRng::new(0, 0));
        for w in &mut m.weights {
            w.fill(0.0);
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        *self.widths.first().unwrap()
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Batched forward pass: columns of `x` are samples.
    pub fn forward_batch(&self, x: &DMat) -> (DMat, MlpCache) {
        assert_eq!(x.nrows(), self.input_dim(), "input dimension mismatch");
        let mut act = Vec::with_capacity(self.n_layers() + 1);
        act.push(x.clone());
        let mut cur = x.clone();
        for l in 0..self.n_layers() {
            let mut z = &self.weights[l] * &cur;
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            if l + 1 < self.n_layers() {
                z.apply(|v| *v = elu(*v));
            }
            act.push(z.clone());
            cur = z;
        }
        (cur, MlpCache { act })
    }

    pub fn forward(&self, x: &DVec) -> DVec {
        let (y, _) = self.forward_batch(&DMat::from_column_slice(x.len(), 1, x.as_slice()));
        y.column(0).into_owned()
    }

    /// Reverse accumulation through the cached forward pass. Returns the
    /// parameter gradients and the gradient with respect to the input batch.
    pub fn backward_batch(&self, cache: &MlpCache, upstream: &DMat) -> (MlpGrads, DMat) {
        let mut grads = MlpGrads {
            weights: self.weights.iter().map(|w| DMat::zeros(w.nrows(), w.ncols())).collect(),
            biases: self.biases.iter().map(|b| DVec::zeros(b.len())).collect(),
        };
        let mut delta = upstream.clone();
        for l in (0..self.n_layers()).rev() {
            if l + 1 < self.n_layers() {
                // Hidden layer: pass through the ELU derivative, computable
                // from the cached activation value.
                let y = &cache.act[l + 1];
                for (d, yv) in delta.iter_mut().zip(y.iter()) {
                    *d *= elu_deriv_from_output(*yv);
                }
            }
            grads.weights[l] += &delta * cache.act[l].transpose();
            for col in delta.column_iter() {
                grads.biases[l] += col;
            }
            delta = self.weights[l].transpose() * delta;
        }
        (grads, delta)
    }

    /// Jacobian-vector products for a single sample; convenience wrapper for
    /// search routines that need input gradients only.
    pub fn input_gradient(&self, x: &DVec, upstream: &DVec) -> DVec {
        let (_, cache) = self.forward_batch(&DMat::from_column_slice(x.len(), 1, x.as_slice()));
        let up = DMat::from_column_slice(upstream.len(), 1, upstream.as_slice());
        let (_, dx) = self.backward_batch(&cache, &up);
        dx.column(0).into_owned()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

impl MlpGrads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Self {
            weights: m.weights.iter().map(|w| DMat::zeros(w.nrows(), w.ncols())).collect(),
            biases: m.biases.iter().map(|b| DVec::zeros(b.len())).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}
