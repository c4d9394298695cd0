//! Block-diagonal LMI programs: a linear objective over scalar, symmetric, and
//! rectangular matrix variables, subject to affine positive-semidefinite
//! constraints. Strict inequalities are realized as semidefinite inequalities
//! shifted by a margin proportional to the block scale.

use crate::expr::AffineExpr;
use crate::mat::{is_symmetric, DMat};
use crate::NumlinError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    /// Symmetric d×d matrix, parameterized by its upper triangle.
    Sym(usize),
    /// General rows×cols matrix, parameterized entry-wise.
    Rect(usize, usize),
}

impl VarShape {
    pub fn n_params(&self) -> usize {
        match *self {
            VarShape::Scalar => 1,
            VarShape::Sym(d) => d * (d + 1) / 2,
            VarShape::Rect(r, c) => r * c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) struct VarInfo {
    pub name: String,
    pub shape: VarShape,
    pub first_param: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub label: String,
    pub expr: AffineExpr,
}

/// Relative shift used to realize strict inequalities as closed-cone ones.
pub const DEFAULT_STRICTNESS_MARGIN: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct LmiProgram {
    pub(crate) vars: Vec<VarInfo>,
    pub(crate) n_params: usize,
    pub(crate) blocks: Vec<Block>,
    pub(crate) objective: Vec<f64>,
    pub strictness_margin: f64,
}

impl Default for LmiProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProgram {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            n_params: 0,
            blocks: Vec::new(),
            objective: Vec::new(),
            strictness_margin: DEFAULT_STRICTNESS_MARGIN,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn var(&mut self, name: &str, shape: VarShape) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarInfo {
            name: name.to_string(),
            shape,
            first_param: self.n_params,
        });
        self.n_params += shape.n_params();
        self.objective.resize(self.n_params, 0.0);
        id
    }

    pub fn scalar(&mut self, name: &str) -> VarId {
        self.var(name, VarShape::Scalar)
    }

    pub fn sym(&mut self, name: &str, dim: usize) -> VarId {
        self.var(name, VarShape::Sym(dim))
    }

    pub fn rect(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.var(name, VarShape::Rect(rows, cols))
    }

    /// Affine expression representing a declared variable.
    pub fn var_expr(&self, id: VarId) -> AffineExpr {
        let info = &self.vars[id.0];
        let p0 = info.first_param;
        match info.shape {
            VarShape::Scalar => {
                let mut e = AffineExpr::zeros(1, 1);
                e.terms.insert(p0, DMat::from_element(1, 1, 1.0));
                e
            }
            VarShape::Sym(d) => {
                let mut e = AffineExpr::zeros(d, d);
                let mut p = p0;
                for i in 0..d {
                    for j in i..d {
                        let mut basis = DMat::zeros(d, d);
                        basis[(i, j)] = 1.0;
                        basis[(j, i)] = 1.0;
                        e.terms.insert(p, basis);
                        p += 1;
                    }
                }
                e
            }
            VarShape::Rect(r, c) => {
                let mut e = AffineExpr::zeros(r, c);
                let mut p = p0;
                for i in 0..r {
                    for j in 0..c {
                        let mut basis = DMat::zeros(r, c);
                        basis[(i, j)] = 1.0;
                        e.terms.insert(p, basis);
                        p += 1;
                    }
                }
                e
            }
        }
    }

    /// Scalar variable as a 1×1 expression scaled to an n×n multiple of the
    /// identity: `x · I_n`.
    pub fn scalar_times_identity(&self, id: VarId, n: usize) -> AffineExpr {
        self.scalar_times_matrix(id, DMat::identity(n, n))
    }

    /// Scalar variable times a fixed matrix: `x · M`.
    pub fn scalar_times_matrix(&self, id: VarId, m: DMat) -> AffineExpr {
        let info = &self.vars[id.0];
        assert!(matches!(info.shape, VarShape::Scalar));
        let mut e = AffineExpr::zeros(m.nrows(), m.ncols());
        if crate::mat::max_abs(&m) != 0.0 {
            e.terms.insert(info.first_param, m);
        }
        e
    }

    /// Constrain `expr ⪰ 0`. The expression must be symmetric for every
    /// variable assignment.
    pub fn require_psd(&mut self, label: &str, expr: AffineExpr) -> Result<(), NumlinError> {
        if expr.nrows != expr.ncols {
            return Err(NumlinError::NotSymmetric);
        }
        if !is_symmetric(&expr.constant, 1e-9)
            || expr.terms.values().any(|c| !is_symmetric(c, 1e-9))
        {
            return Err(NumlinError::NotSymmetric);
        }
        for p in expr.terms.keys() {
            if *p >= self.n_params {
                return Err(NumlinError::UnknownParameter(*p));
            }
        }
        self.blocks.push(Block {
            label: label.to_string(),
            expr,
        });
        Ok(())
    }

    /// Constrain `expr ≻ 0`, realized as `expr − ε·scale·I ⪰ 0`.
    pub fn require_pd(&mut self, label: &str, expr: AffineExpr) -> Result<(), NumlinError> {
        let scale = expr.magnitude().max(1.0);
        let shift = AffineExpr::constant(
            DMat::identity(expr.nrows, expr.ncols) * (self.strictness_margin * scale),
        );
        self.require_psd(label, expr.sub(&shift))
    }

    /// Constrain `expr ⪯ 0`.
    pub fn require_nsd(&mut self, label: &str, expr: AffineExpr) -> Result<(), NumlinError> {
        self.require_psd(label, expr.neg())
    }

    /// Constrain `expr ≺ 0`.
    pub fn require_nd(&mut self, label: &str, expr: AffineExpr) -> Result<(), NumlinError> {
        self.require_pd(label, expr.neg())
    }

    /// Constrain a scalar variable to `x ≥ lo`.
    pub fn require_scalar_min(&mut self, label: &str, id: VarId, lo: f64) -> Result<(), NumlinError> {
        let e = self
            .var_expr(id)
            .sub(&AffineExpr::constant(DMat::from_element(1, 1, lo)));
        self.require_psd(label, e)
    }

    /// Add `w · x` to the minimized objective for a scalar variable.
    pub fn objective_scalar(&mut self, id: VarId, w: f64) {
        let info = &self.vars[id.0];
        assert!(matches!(info.shape, VarShape::Scalar));
        self.objective[info.first_param] += w;
    }

    /// Add `w · tr(C X)` to the minimized objective for a matrix variable.
    pub fn objective_trace(&mut self, id: VarId, c: &DMat, w: f64) {
        let e = self.var_expr(id);
        for (p, coeff) in &e.terms {
            let mut acc = 0.0;
            for i in 0..coeff.nrows() {
                for j in 0..coeff.ncols() {
                    acc += c[(i, j)] * coeff[(i, j)];
                }
            }
            self.objective[*p] += w * acc;
        }
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.vars[id.0].name
    }

    /// Evaluate every constraint block at a parameter vector, in the order
    /// the blocks were added. Used by soundness checks.
    pub fn eval_blocks(&self, x: &[f64]) -> Vec<DMat> {
        self.blocks.iter().map(|b| b.expr.eval(x)).collect()
    }

    pub fn block_labels(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.label.as_str()).collect()
    }

    /// Linear objective value at a parameter vector.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub(crate) fn param_range(&self, id: VarId) -> (usize, VarShape) {
        let info = &self.vars[id.0];
        (info.first_param, info.shape)
    }
}

/// Extract structured values from a scalarized solution vector.
pub fn unpack_value(prog: &LmiProgram, id: VarId, x: &[f64]) -> DMat {
    let (p0, shape) = prog.param_range(id);
    match shape {
        VarShape::Scalar => DMat::from_element(1, 1, x[p0]),
        VarShape::Sym(d) => {
            let mut m = DMat::zeros(d, d);
            let mut p = p0;
            for i in 0..d {
                for j in i..d {
                    m[(i, j)] = x[p];
                    m[(j, i)] = x[p];
                    p += 1;
                }
            }
            m
        }
        VarShape::Rect(r, c) => {
            let mut m = DMat::zeros(r, c);
            let mut p = p0;
            for i in 0..r {
                for j in 0..c {
                    m[(i, j)] = x[p];
                    p += 1;
                }
            }
            m
        }
    }
}
