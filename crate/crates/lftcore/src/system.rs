//! Eventually-periodic LFT system and static gain-scheduled controller
//! types.

use nalgebra::{DMatrix, DVector};

use crate::LftError;

type DMat = DMatrix<f64>;
type DVec = DVector<f64>;

/// State-space matrices of the nominal system at one time step, partitioned
/// by (state, uncertainty, disturbance, control) inputs and
/// (state, uncertainty, performance, measurement) outputs. The
/// measurement-from-control feedthrough is structurally zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LftTimeStep {
    pub a_ss: DMat,
    pub a_sp: DMat,
    pub a_ps: DMat,
    pub a_pp: DMat,
    pub b_1s: DMat,
    pub b_1p: DMat,
    pub b_2s: DMat,
    pub b_2p: DMat,
    pub c_1s: DMat,
    pub c_1p: DMat,
    pub c_2s: DMat,
    pub c_2p: DMat,
    pub d_11: DMat,
    pub d_12: DMat,
    pub d_21: DMat,
    /// Repetition counts m_i of each scalar scheduling parameter.
    pub block_sizes: Vec<usize>,
}

impl LftTimeStep {
    pub fn m(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), LftError> {
        let n = self.a_ss.nrows();
        let m = self.m();
        let n_d = self.b_1s.ncols();
        let n_u = self.b_2s.ncols();
        let n_e = self.c_1s.nrows();
        let n_y = self.c_2s.nrows();
        let checks = [
            (self.a_ss.ncols(), n, "a_ss cols"),
            (self.a_sp.nrows(), n, "a_sp rows"),
            (self.a_sp.ncols(), m, "a_sp cols"),
            (self.a_ps.nrows(), m, "a_ps rows"),
            (self.a_ps.ncols(), n, "a_ps cols"),
            (self.a_pp.nrows(), m, "a_pp rows"),
            (self.a_pp.ncols(), m, "a_pp cols"),
            (self.b_1s.nrows(), n, "b_1s rows"),
            (self.b_1p.nrows(), m, "b_1p rows"),
            (self.b_1p.ncols(), n_d, "b_1p cols"),
            (self.b_2s.nrows(), n, "b_2s rows"),
            (self.b_2p.nrows(), m, "b_2p rows"),
            (self.b_2p.ncols(), n_u, "b_2p cols"),
            (self.c_1s.ncols(), n, "c_1s cols"),
            (self.c_1p.nrows(), n_e, "c_1p rows"),
            (self.c_1p.ncols(), m, "c_1p cols"),
            (self.c_2s.ncols(), n, "c_2s cols"),
            (self.c_2p.nrows(), n_y, "c_2p rows"),
            (self.c_2p.ncols(), m, "c_2p cols"),
            (self.d_11.nrows(), n_e, "d_11 rows"),
            (self.d_11.ncols(), n_d, "d_11 cols"),
            (self.d_12.nrows(), n_e, "d_12 rows"),
            (self.d_12.ncols(), n_u, "d_12 cols"),
            (self.d_21.nrows(), n_y, "d_21 rows"),
            (self.d_21.ncols(), n_d, "d_21 cols"),
        ];
        for (got, want, what) in checks {
            if got != want {
                return Err(LftError::Dimension {
                    what: what.to_string(),
                    got,
                    want,
                });
            }
        }
        Ok(())
    }
}

/// `(h, q)`-eventually periodic LFT plant: matrices for k in 0..h+q, with
/// every accessor folding larger k back into the periodic tail.
#[derive(Clone, Debug, PartialEq)]
pub struct EventuallyPeriodicLft {
    pub h: usize,
    pub q: usize,
    pub steps: Vec<LftTimeStep>,
}

impl EventuallyPeriodicLft {
    pub fn stationary(step: LftTimeStep) -> Result<Self, LftError> {
        step.validate()?;
        Ok(Self {
            h: 0,
            q: 1,
            steps: vec![step],
        })
    }

    pub fn new(h: usize, q: usize, steps: Vec<LftTimeStep>) -> Result<Self, LftError> {
        assert!(q >= 1);
        if steps.len() != h + q {
            return Err(LftError::Dimension {
                what: "step count".into(),
                got: steps.len(),
                want: h + q,
            });
        }
        for s in &steps {
            s.validate()?;
        }
        Ok(Self { h, q, steps })
    }

    /// Fold a time index into the stored range.
    pub fn fold(&self, k: usize) -> usize {
        if k < self.h {
            k
        } else {
            self.h + (k - self.h) % self.q
        }
    }

    pub fn at(&self, k: usize) -> &LftTimeStep {
        &self.steps[self.fold(k)]
    }

    pub fn n_state(&self) -> usize {
        self.steps[0].a_ss.nrows()
    }

    pub fn n_d(&self) -> usize {
        self.steps[0].b_1s.ncols()
    }

    pub fn n_e(&self) -> usize {
        self.steps[0].c_1s.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.steps[0].b_2s.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.steps[0].c_2s.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.steps[0].block_sizes.len()
    }
}

/// Static gain-scheduled controller blocks at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerStep {
    pub a_pp: DMat,
    pub b_p: DMat,
    pub c_p: DMat,
    pub d: DMat,
    pub block_sizes: Vec<usize>,
}

impl ControllerStep {
    pub fn m(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Pure static gain (no scheduling channels).
    pub fn static_gain(d: DMat, p: usize) -> Self {
        let n_y = d.ncols();
        let n_u = d.nrows();
        Self {
            a_pp: DMat::zeros(0, 0),
            b_p: DMat::zeros(0, n_y),
            c_p: DMat::zeros(n_u, 0),
            d,
            block_sizes: vec![0; p],
        }
    }
}

/// `(h̄, 1)`-eventually periodic static scheduled controller.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticNslpvController {
    pub h_bar: usize,
    /// Steps for k = 0..h̄ (inclusive); k beyond h̄ reuses the last entry.
    pub steps: Vec<ControllerStep>,
    /// Scheduling-parameter bounds of the plant the controller was designed
    /// for; used to check normalization metadata at run time.
    pub bounds: Vec<(f64, f64)>,
}

impl StaticNslpvController {
    pub fn at(&self, k: usize) -> &ControllerStep {
        &self.steps[k.min(self.h_bar)]
    }

    pub fn n_u(&self) -> usize {
        self.steps[0].d.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.steps[0].d.ncols()
    }

    /// Scheduled control law `u = (D + C_p Δc (I − A_pp Δc)⁻¹ B_p) y` with
    /// `Δc = diag(δ_i I)` at the block sizes of step k.
    pub fn eval(&self, k: usize, delta: &DVec, y: &DVec) -> Result<DVec, LftError> {
        let step = self.at(k);
        let mc = step.m();
        if mc == 0 {
            return Ok(&step.d * y);
        }
        let mut diag = DVec::zeros(mc);
        let mut off = 0;
        for (i, &sz) in step.block_sizes.iter().enumerate() {
            for r in 0..sz {
                diag[off + r] = delta[i];
            }
            off += sz;
        }
        let delta_c = DMat::from_diagonal(&diag);
        let gram = DMat::identity(mc, mc) - &step.a_pp * &delta_c;
        let inv = gram.clone().try_inverse().ok_or(LftError::IllPosed)?;
        // Guard near-singular loops the inverse may have glossed over.
        if (&gram * &inv - DMat::identity(mc, mc)).amax() > 1e-10 {
            return Err(LftError::IllPosed);
        }
        Ok((&step.d + &step.c_p * &delta_c * inv * &step.b_p) * y)
    }
}
