//! Sparse SDPA text export/import for LMI programs (debugging interop).
//!
//! SDPA's convention is `min cᵀx s.t. Σ x_i F_i − F0 ⪰ 0`; our constraints
//! are `C0 + Σ x_i C_i ⪰ 0`, so `F0 = −C0` on export and vice versa.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::expr::AffineExpr;
use crate::mat::DMat;
use crate::program::LmiProgram;
use crate::NumlinError;

pub fn export_sdpa(prog: &LmiProgram, path: &Path) -> Result<(), NumlinError> {
    if prog.n_params() == 0 {
        return Err(NumlinError::EmptyProgram);
    }
    let mut out = String::new();
    out.push_str(&format!("{}\n", prog.n_params()));
    out.push_str(&format!("{}\n", prog.blocks.len()));
    let sizes: Vec<String> = prog
        .blocks
        .iter()
        .map(|b| b.expr.nrows.to_string())
        .collect();
    out.push_str(&format!("{}\n", sizes.join(" ")));
    let c: Vec<String> = prog.objective.iter().map(|v| format!("{v}")).collect();
    out.push_str(&format!("{}\n", c.join(" ")));
    for (bi, b) in prog.blocks.iter().enumerate() {
        // matno 0 carries F0 = −constant.
        for i in 0..b.expr.nrows {
            for j in i..b.expr.ncols {
                let v = -b.expr.constant[(i, j)];
                if v != 0.0 {
                    out.push_str(&format!("0 {} {} {} {v}\n", bi + 1, i + 1, j + 1));
                }
            }
        }
        for (p, coeff) in &b.expr.terms {
            for i in 0..coeff.nrows() {
                for j in i..coeff.ncols() {
                    let v = coeff[(i, j)];
                    if v != 0.0 {
                        out.push_str(&format!("{} {} {} {} {v}\n", p + 1, bi + 1, i + 1, j + 1));
                    }
                }
            }
        }
    }
    std::fs::write(path, out).map_err(NumlinError::Io)
}

/// Re-import a sparse SDPA file as an LMI program with anonymous scalar
/// variables. Block sizes and coefficients round-trip bit-exactly for values
/// whose decimal form is exact.
pub fn import_sdpa(path: &Path) -> Result<LmiProgram, NumlinError> {
    let file = std::fs::File::open(path).map_err(NumlinError::Io)?;
    let reader = BufReader::new(file);
    let mut lines = reader
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(NumlinError::Io)?
        .into_iter()
        .filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('*') && !t.starts_with('"')
        });

    let parse_err = || NumlinError::Parse("malformed SDPA file".into());
    let m: usize = lines.next().ok_or_else(parse_err)?.trim().parse().map_err(|_| parse_err())?;
    let nblocks: usize = lines.next().ok_or_else(parse_err)?.trim().parse().map_err(|_| parse_err())?;
    let sizes: Vec<usize> = lines
        .next()
        .ok_or_else(parse_err)?
        .split_whitespace()
        .map(|t| t.trim_matches(|c| c == '(' || c == ')' || c == ',' || c == '{' || c == '}'))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().map(|v| v.unsigned_abs() as usize))
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err())?;
    if sizes.len() != nblocks {
        return Err(parse_err());
    }
    let c: Vec<f64> = lines
        .next()
        .ok_or_else(parse_err)?
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err())?;
    if c.len() != m {
        return Err(parse_err());
    }

    let mut prog = LmiProgram::new();
    let mut ids = Vec::with_capacity(m);
    for i in 0..m {
        ids.push(prog.scalar(&format!("x{i}")));
    }
    let mut constants: Vec<DMat> = sizes.iter().map(|&d| DMat::zeros(d, d)).collect();
    let mut coeffs: Vec<Vec<DMat>> = sizes
        .iter()
        .map(|&d| (0..m).map(|_| DMat::zeros(d, d)).collect())
        .collect();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(parse_err());
        }
        let matno: usize = toks[0].parse().map_err(|_| parse_err())?;
        let blk: usize = toks[1].parse::<usize>().map_err(|_| parse_err())? - 1;
        let i: usize = toks[2].parse::<usize>().map_err(|_| parse_err())? - 1;
        let j: usize = toks[3].parse::<usize>().map_err(|_| parse_err())? - 1;
        let v: f64 = toks[4].parse().map_err(|_| parse_err())?;
        if blk >= nblocks || i >= sizes[blk] || j >= sizes[blk] {
            return Err(parse_err());
        }
        if matno == 0 {
            constants[blk][(i, j)] = -v;
            constants[blk][(j, i)] = -v;
        } else {
            coeffs[blk][matno - 1][(i, j)] = v;
            coeffs[blk][matno - 1][(j, i)] = v;
        }
    }
    for (bi, cst) in constants.into_iter().enumerate() {
        // Scalar variables were declared in order, so parameter index == p.
        let mut e = AffineExpr::constant(cst);
        for (p, coeff) in coeffs[bi].iter().enumerate() {
            if coeff.amax() != 0.0 {
                e.terms.insert(p, coeff.clone());
            }
        }
        prog.require_psd(&format!("block{bi}"), e)?;
    }
    for (p, id) in ids.iter().enumerate() {
        prog.objective_scalar(*id, c[p]);
    }
    Ok(prog)
}
