//! Frequency-sweep ℓ₂-gain oracle for stable LTI systems, used to validate
//! the analysis LMIs on nominal fixtures.

use nalgebra::DMatrix;

use crate::IqcError;

type DMat = DMatrix<f64>;

/// σ_max of the transfer matrix `C (e^{jω} I − A)⁻¹ B + D`, computed through
/// the real embedding of the complex solve.
fn gain_at(a: &DMat, b: &DMat, c: &DMat, d: &DMat, omega: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return numlin::sigma_max(d);
    }
    let (cw, sw) = (omega.cos(), omega.sin());
    // Real embedding of e^{jω} I − A.
    let mut e = DMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        e[(i, i)] = cw;
        e[(i, n + i)] = -sw;
        e[(n + i, i)] = sw;
        e[(n + i, n + i)] = cw;
    }
    for i in 0..n {
        for j in 0..n {
            e[(i, j)] -= a[(i, j)];
            e[(n + i, n + j)] -= a[(i, j)];
        }
    }
    let mut b_emb = DMat::zeros(2 * n, b.ncols());
    b_emb.view_mut((0, 0), (n, b.ncols())).copy_from(b);
    let x = e.lu().solve(&b_emb).expect("stable system, off-unit-circle solve");
    // T = C x_real + D + j C x_imag; embed as [[Re, −Im], [Im, Re]].
    let re = c * x.view((0, 0), (n, b.ncols())) + d;
    let im = c * x.view((n, 0), (n, b.ncols()));
    let t = numlin::vstack(&[
        numlin::hstack(&[re.clone(), -&im]),
        numlin::hstack(&[im, re]),
    ]);
    numlin::sigma_max(&t)
}

/// Peak gain over a 4096-point frequency grid with local refinement near
/// the peak; accurate to roughly 0.1% for smooth resonances.
pub fn l2_gain_oracle(a: &DMat, b: &DMat, c: &DMat, d: &DMat) -> Result<f64, IqcError> {
    if numlin::spectral_radius(a) >= 1.0 {
        return Err(IqcError::UnstableFilter);
    }
    let coarse = 4096usize;
    let mut best_w = 0.0f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=coarse {
        let w = std::f64::consts::PI * i as f64 / coarse as f64;
        let g = gain_at(a, b, c, d, w);
        if g > best {
            best = g;
            best_w = w;
        }
    }
    let mut lo = (best_w - std::f64::consts::PI / coarse as f64).max(0.0);
    let mut hi = (best_w + std::f64::consts::PI / coarse as f64).min(std::f64::consts::PI);
    for _ in 0..4 {
        let mut local_best_w = best_w;
        for i in 0..=64 {
            let w = lo + (hi - lo) * i as f64 / 64.0;
            let g = gain_at(a, b, c, d, w);
            if g > best {
                best = g;
                local_best_w = w;
            }
        }
        let span = (hi - lo) / 32.0;
        lo = (local_best_w - span).max(0.0);
        hi = (local_best_w + span).min(std::f64::consts::PI);
        best_w = local_best_w;
    }
    Ok(best)
}
