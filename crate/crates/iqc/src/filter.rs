//! Eventually-periodic LTV filters used as multiplier factors.

use nalgebra::DMatrix;

type DMat = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterStep {
    pub a: DMat,
    pub b: DMat,
    pub c: DMat,
    pub d: DMat,
}

/// `(h, q)`-eventually periodic state-space filter.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvFilter {
    pub h: usize,
    pub q: usize,
    pub steps: Vec<FilterStep>,
}

impl LtvFilter {
    /// Stateless identity filter on `dim` channels.
    pub fn identity(dim: usize) -> Self {
        Self {
            h: 0,
            q: 1,
            steps: vec![FilterStep {
                a: DMat::zeros(0, 0),
                b: DMat::zeros(0, dim),
                c: DMat::zeros(dim, 0),
                d: DMat::identity(dim, dim),
            }],
        }
    }

    /// Empty filter (no inputs, no outputs, no state).
    pub fn empty() -> Self {
        Self::identity(0)
    }

    pub fn stationary(a: DMat, b: DMat, c: DMat, d: DMat) -> Self {
        Self {
            h: 0,
            q: 1,
            steps: vec![FilterStep { a, b, c, d }],
        }
    }

    pub fn at(&self, k: usize) -> &FilterStep {
        let idx = if k < self.h {
            k
        } else {
            self.h + (k - self.h) % self.q
        };
        &self.steps[idx]
    }

    pub fn n_state(&self) -> usize {
        self.steps[0].a.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.steps[0].b.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.steps[0].c.nrows()
    }

    /// Asymptotic stability via the spectral radius of the periodic-part
    /// monodromy matrix.
    pub fn is_stable(&self) -> bool {
        let n = self.n_state();
        if n == 0 {
            return true;
        }
        let mut mono = DMat::identity(n, n);
        for k in 0..self.q {
            mono = &self.at(self.h + k).a * mono;
        }
        numlin::spectral_radius(&mono) < 1.0 - 1e-12
    }

    /// Per-channel bank `[1; 1/(z − pole); …]` of the given basis length on
    /// `channels` parallel scalar inputs. Basis length 1 is the static
    /// passthrough; each extra basis element appends one lagged state.
    pub fn basis_bank(channels: usize, pole: f64, basis_len: usize) -> Self {
        assert!(basis_len >= 1);
        let depth = basis_len - 1;
        let n = channels * depth;
        let mut a = DMat::zeros(n, n);
        let mut b = DMat::zeros(n, channels);
        let mut c = DMat::zeros(channels * basis_len, n);
        let mut d = DMat::zeros(channels * basis_len, channels);
        for ch in 0..channels {
            // Output row 0 of this channel: the input itself.
            d[(ch * basis_len, ch)] = 1.0;
            for l in 0..depth {
                let xs = ch * depth + l;
                a[(xs, xs)] = pole;
                if l == 0 {
                    b[(xs, ch)] = 1.0;
                } else {
                    a[(xs, ch * depth + l - 1)] = 1.0;
                }
                c[(ch * basis_len + l + 1, xs)] = 1.0;
            }
        }
        Self::stationary(a, b, c, d)
    }

    /// Evaluate the filter on an input sequence from zero initial state.
    pub fn run(&self, inputs: &[nalgebra::DVector<f64>]) -> Vec<nalgebra::DVector<f64>> {
        let mut x = nalgebra::DVector::zeros(self.n_state());
        let mut out = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            let s = self.at(k);
            out.push(&s.c * &x + &s.d * u);
            x = &s.a * &x + &s.b * u;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn identity_filter_passes_through() {
        let f = LtvFilter::identity(2);
        let u = vec![DVector::from_row_slice(&[1.0, -2.0])];
        assert_eq!(f.run(&u)[0], u[0]);
        assert!(f.is_stable());
    }

    #[test]
    fn basis_bank_matches_recursion() {
        let f = LtvFilter::basis_bank(1, 0.5, 2);
        assert_eq!(f.n_out(), 2);
        let u: Vec<DVector<f64>> = [1.0, 0.0, 0.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        let y = f.run(&u);
        // First output is the impulse itself; second is the delayed pole
        // response 0, 1, 0.5, …
        assert_eq!(y[0][0], 1.0);
        assert_eq!(y[0][1], 0.0);
        assert_eq!(y[1][1], 1.0);
        assert_eq!(y[2][1], 0.5);
    }

    #[test]
    fn stability_check_detects_unit_pole() {
        let f = LtvFilter::basis_bank(1, 1.0, 2);
        assert!(!f.is_stable());
        assert!(LtvFilter::basis_bank(1, 0.95, 2).is_stable());
    }
}
