//! Dense matrix helpers shared across the workspace.

use nalgebra::{DMatrix, DVector};

pub type DMat = DMatrix<f64>;
pub type DVec = DVector<f64>;

use crate::NumlinError;

/// Block-diagonal augmentation of dense matrices.
pub fn block_diag(blocks: &[DMat]) -> DMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Horizontal concatenation. All blocks must share a row count.
pub fn hstack(blocks: &[DMat]) -> DMat {
    assert!(!blocks.is_empty());
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation. All blocks must share a column count.
pub fn vstack(blocks: &[DMat]) -> DMat {
    assert!(!blocks.is_empty());
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Eigendecomposition of a symmetric matrix; returns (eigenvalues, eigenvectors)
/// with `m ≈ V diag(λ) Vᵀ` and orthonormal columns in `V`.
pub fn sym_eig(m: &DMat) -> (DVec, DMat) {
    debug_assert_eq!(m.nrows(), m.ncols());
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn min_eig(m: &DMat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eig(m).0.min()
}

pub fn max_abs(m: &DMat) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

pub fn is_symmetric(m: &DMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Orthonormal basis of the kernel of `m`: returns `n` with `m·n ≈ 0`,
/// `nᵀn = I`, spanning all directions whose singular value is at most
/// `rank_tol · σ_max`.
///
/// A full-rank matrix yields a matrix with zero columns.
pub fn orthonormal_kernel_basis(m: &DMat, rank_tol: f64) -> DMat {
    let cols = m.ncols();
    if cols == 0 {
        return DMat::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMat::identity(cols, cols);
    }
    let svd = m.clone().svd(false, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return DMat::identity(cols, cols);
    }
    let cut = rank_tol * sigma_max;
    let v_t = svd.v_t.expect("svd requested right vectors");
    // Rows of v_t with σ above the cut span the row space; the kernel is its
    // orthogonal complement, extracted from the projector's eigenvectors so
    // the basis stays orthonormal even when the thin SVD returns fewer right
    // vectors than columns.
    let mut proj = DMat::identity(cols, cols);
    let mut rank = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cut {
            rank += 1;
            let row = v_t.row(i);
            let v = row.transpose();
            proj -= &v * v.transpose();
        }
    }
    let kdim = cols - rank;
    if kdim == 0 {
        return DMat::zeros(cols, 0);
    }
    let (vals, vecs) = sym_eig(&proj);
    let mut idx: Vec<usize> = (0..cols).collect();
    idx.sort_by(|a, b| vals[*b].partial_cmp(&vals[*a]).unwrap());
    let mut n = DMat::zeros(cols, kdim);
    for (k, &i) in idx.iter().take(kdim).enumerate() {
        n.set_column(k, &vecs.column(i));
    }
    n
}

/// Factor `x ≈ e·eᵀ` for a symmetric PSD matrix, keeping eigenvalues above
/// `rank_tol · λ_max`; the column count of `e` is the numerical rank.
pub fn psd_sqrt(x: &DMat, rank_tol: f64) -> Result<DMat, NumlinError> {
    let n = x.nrows();
    if n == 0 {
        return Ok(DMat::zeros(0, 0));
    }
    if !is_symmetric(x, 1e-10) {
        return Err(NumlinError::NotSymmetric);
    }
    let (vals, vecs) = sym_eig(x);
    let lam_max = vals.max().max(0.0);
    let floor = -rank_tol * lam_max.max(1.0);
    if vals.min() < floor {
        return Err(NumlinError::Indefinite {
            min_eig: vals.min(),
        });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > rank_tol * lam_max).collect();
    let mut e = DMat::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        e.set_column(k, &(vecs.column(i) * vals[i].sqrt()));
    }
    Ok(e)
}

/// Spectral radius of a general square matrix (complex eigenvalues included).
pub fn spectral_radius(m: &DMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |a, z| a.max(z.norm()))
}

/// Largest singular value.
pub fn sigma_max(m: &DMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}
