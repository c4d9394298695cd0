//! Affine matrix expressions over the scalarized decision variables of an
//! [`crate::LmiProgram`]. Expressions carry a constant part plus one dense
//! coefficient matrix per scalar parameter, so every LMI block is assembled
//! as `C0 + Σ x_i C_i` with all operations staying affine.

use std::collections::BTreeMap;

use crate::mat::{max_abs, DMat};

#[derive(Clone, Debug)]
pub struct AffineExpr {
    pub nrows: usize,
    pub ncols: usize,
    pub constant: DMat,
    /// Parameter index → coefficient matrix. Zero coefficients are dropped.
    pub terms: BTreeMap<usize, DMat>,
}

impl AffineExpr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            constant: DMat::zeros(nrows, ncols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: DMat) -> Self {
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMat::identity(n, n))
    }

    fn insert_term(terms: &mut BTreeMap<usize, DMat>, param: usize, coeff: DMat) {
        if max_abs(&coeff) == 0.0 {
            return;
        }
        match terms.get_mut(&param) {
            Some(c) => {
                *c += coeff;
                if max_abs(c) == 0.0 {
                    terms.remove(&param);
                }
            }
            None => {
                terms.insert(param, coeff);
            }
        }
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = self.clone();
        out.constant += &other.constant;
        for (p, c) in &other.terms {
            Self::insert_term(&mut out.terms, *p, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AffineExpr {
        let mut out = self.clone();
        out.constant *= s;
        if s == 0.0 {
            out.terms.clear();
        } else {
            for c in out.terms.values_mut() {
                *c *= s;
            }
        }
        out
    }

    pub fn neg(&self) -> AffineExpr {
        self.scale(-1.0)
    }

    pub fn transpose(&self) -> AffineExpr {
        let mut out = AffineExpr::zeros(self.ncols, self.nrows);
        out.constant = self.constant.transpose();
        for (p, c) in &self.terms {
            out.terms.insert(*p, c.transpose());
        }
        out
    }

    /// Left multiplication by a constant: `t · self`.
    pub fn lmul(&self, t: &DMat) -> AffineExpr {
        assert_eq!(t.ncols(), self.nrows);
        let mut out = AffineExpr::zeros(t.nrows(), self.ncols);
        out.constant = t * &self.constant;
        for (p, c) in &self.terms {
            Self::insert_term(&mut out.terms, *p, t * c);
        }
        out
    }

    /// Right multiplication by a constant: `self · t`.
    pub fn rmul(&self, t: &DMat) -> AffineExpr {
        assert_eq!(self.ncols, t.nrows());
        let mut out = AffineExpr::zeros(self.nrows, t.ncols());
        out.constant = &self.constant * t;
        for (p, c) in &self.terms {
            Self::insert_term(&mut out.terms, *p, c * t);
        }
        out
    }

    /// Congruence with a constant: `t · self · tᵀ`.
    pub fn congruence(&self, t: &DMat) -> AffineExpr {
        self.lmul(t).rmul(&t.transpose())
    }

    /// `self + selfᵀ`, used to symmetrize products with rectangular variables.
    pub fn plus_transpose(&self) -> AffineExpr {
        self.add(&self.transpose())
    }

    pub fn hstack(parts: &[AffineExpr]) -> AffineExpr {
        assert!(!parts.is_empty());
        let nrows = parts[0].nrows;
        let ncols = parts.iter().map(|p| p.ncols).sum();
        let mut out = AffineExpr::zeros(nrows, ncols);
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.nrows, nrows, "hstack row mismatch");
            out.constant
                .view_mut((0, c0), (nrows, p.ncols))
                .copy_from(&p.constant);
            for (idx, coeff) in &p.terms {
                let mut full = DMat::zeros(nrows, ncols);
                full.view_mut((0, c0), (nrows, p.ncols)).copy_from(coeff);
                Self::insert_term(&mut out.terms, *idx, full);
            }
            c0 += p.ncols;
        }
        out
    }

    pub fn vstack(parts: &[AffineExpr]) -> AffineExpr {
        let t: Vec<AffineExpr> = parts.iter().map(|p| p.transpose()).collect();
        Self::hstack(&t).transpose()
    }

    pub fn block_diag(parts: &[AffineExpr]) -> AffineExpr {
        if parts.is_empty() {
            return AffineExpr::zeros(0, 0);
        }
        let nrows = parts.iter().map(|p| p.nrows).sum();
        let ncols = parts.iter().map(|p| p.ncols).sum();
        let mut out = AffineExpr::zeros(nrows, ncols);
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            out.constant
                .view_mut((r0, c0), (p.nrows, p.ncols))
                .copy_from(&p.constant);
            for (idx, coeff) in &p.terms {
                let mut full = DMat::zeros(nrows, ncols);
                full.view_mut((r0, c0), (p.nrows, p.ncols)).copy_from(coeff);
                Self::insert_term(&mut out.terms, *idx, full);
            }
            r0 += p.nrows;
            c0 += p.ncols;
        }
        out
    }

    /// 2×2 symmetric block assembly `[[a, bᵀ; b, c]]`.
    pub fn sym_block2(a: &AffineExpr, b: &AffineExpr, c: &AffineExpr) -> AffineExpr {
        let top = Self::hstack(&[a.clone(), b.transpose()]);
        let bot = Self::hstack(&[b.clone(), c.clone()]);
        Self::vstack(&[top, bot])
    }

    /// Evaluate the expression at a parameter vector.
    pub fn eval(&self, x: &[f64]) -> DMat {
        let mut out = self.constant.clone();
        for (p, c) in &self.terms {
            out += c * x[*p];
        }
        out
    }

    /// Largest absolute entry over the constant and all coefficients.
    pub fn magnitude(&self) -> f64 {
        let mut m = max_abs(&self.constant);
        for c in self.terms.values() {
            m = m.max(max_abs(c));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_algebra_matches_direct_evaluation() {
        // expr(x) = T (C + x0 B) Tᵀ evaluated two ways
        let c = DMat::from_row_slice(2, 2, &[1., 0., 0., 2.]);
        let b = DMat::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let t = DMat::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.]);
        let mut e = AffineExpr::constant(c.clone());
        AffineExpr::insert_term(&mut e.terms, 0, b.clone());
        let sandwiched = e.congruence(&t);
        let x = [0.7];
        let direct = &t * (c + 0.7 * b) * t.transpose();
        assert!((sandwiched.eval(&x) - direct).amax() < 1e-14);
    }

    #[test]
    fn block_diag_keeps_params() {
        let mut a = AffineExpr::zeros(1, 1);
        AffineExpr::insert_term(&mut a.terms, 3, DMat::from_element(1, 1, 2.0));
        let d = AffineExpr::block_diag(&[a.clone(), AffineExpr::identity(2)]);
        let v = d.eval(&[0., 0., 0., 0.5]);
        assert_eq!(v[(0, 0)], 1.0);
        assert_eq!(v[(1, 1)], 1.0);
        assert_eq!(v[(2, 2)], 1.0);
    }
}
