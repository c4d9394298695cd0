//! Versioned model artifact: text header (dimensions, bounds, provenance,
//! checksum) followed by dense tensors as little-endian f64, in declared
//! order. The checksum guards the binary payload against corruption.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::mlp::Mlp;
use crate::model::{InputMode, LiftedLpvModel};
use crate::LiftError;

type DMat = DMatrix<f64>;

const MAGIC: &str = "LPVMODEL";
const VERSION: u32 = 1;

fn tensor_bytes(tensors: &[(&str, &DMat)]) -> Vec<u8> {
    let mut bytes = Vec::new();
    for (_, t) in tensors {
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

fn collect_tensors(model: &LiftedLpvModel) -> Vec<(String, DMat)> {
    let mut out = Vec::new();
    out.push(("a".to_string(), model.a.clone()));
    for (i, b) in model.b.iter().enumerate() {
        out.push((format!("b{i}"), b.clone()));
    }
    out.push(("p_matrix".to_string(), model.p_matrix.clone()));
    out.push(("q_matrix".to_string(), model.q_matrix.clone()));
    for (l, w) in model.phi.weights.iter().enumerate() {
        out.push((format!("phi_w{l}"), w.clone()));
        let b = &model.phi.biases[l];
        out.push((
            format!("phi_b{l}"),
            DMat::from_column_slice(b.len(), 1, b.as_slice()),
        ));
    }
    for (l, w) in model.mu.weights.iter().enumerate() {
        out.push((format!("mu_w{l}"), w.clone()));
        let b = &model.mu.biases[l];
        out.push((
            format!("mu_b{l}"),
            DMat::from_column_slice(b.len(), 1, b.as_slice()),
        ));
    }
    out
}

/// Write the model with optional extra metadata key/value pairs (stored
/// verbatim, in order).
pub fn save_model(
    model: &LiftedLpvModel,
    path: &Path,
    extra_meta: &[(String, String)],
) -> Result<(), LiftError> {
    let tensors = collect_tensors(model);
    let refs: Vec<(&str, &DMat)> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let payload = tensor_bytes(&refs);
    let checksum = hex(&Sha256::digest(&payload));

    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MAGIC} v{VERSION}")?;
    writeln!(w, "checksum: {checksum}")?;
    writeln!(w, "n: {}", model.n)?;
    writeln!(w, "n_lift: {}", model.n_lift)?;
    writeln!(w, "p: {}", model.p)?;
    writeln!(w, "n_u: {}", model.n_u)?;
    writeln!(w, "n_v: {}", model.n_v)?;
    writeln!(w, "input_mode: {}", model.input_mode.as_str())?;
    writeln!(w, "dt: {}", model.dt)?;
    writeln!(
        w,
        "phi_widths: {}",
        model
            .phi
            .widths
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(
        w,
        "mu_widths: {}",
        model
            .mu
            .widths
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(
        w,
        "bounds: {}",
        model
            .bounds
            .iter()
            .map(|(l, h)| format!("{l} {h}"))
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(
        w,
        "rate_bounds: {}",
        model
            .rate_bounds
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(w, "provenance: {}", model.provenance.replace('\n', " "))?;
    for (k, v) in extra_meta {
        writeln!(w, "meta.{k}: {v}")?;
    }
    for (name, t) in &tensors {
        writeln!(w, "tensor: {name} {} {}", t.nrows(), t.ncols())?;
    }
    writeln!(w, "binary: {}", payload.len())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(LiftedLpvModel, Vec<(String, String)>), LiftError> {
    let bytes = std::fs::read(path)?;
    let marker = b"binary: ";
    let mark_pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| LiftError::Format("missing binary marker".into()))?;
    let line_end = bytes[mark_pos..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LiftError::Format("unterminated binary marker".into()))?
        + mark_pos
        + 1;
    let head = std::str::from_utf8(&bytes[..line_end])
        .map_err(|_| LiftError::Format("header is not utf-8".into()))?;
    if !head.starts_with(MAGIC) {
        return Err(LiftError::Format("bad magic".into()));
    }
    let mut fields: HashMap<String, String> = HashMap::new();
    let mut tensor_decls: Vec<(String, usize, usize)> = Vec::new();
    let mut meta: Vec<(String, String)> = Vec::new();
    for line in head.lines().skip(1) {
        let Some((k, v)) = line.split_once(':') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k == "tensor" {
            let toks: Vec<&str> = v.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(LiftError::Format("bad tensor declaration".into()));
            }
            tensor_decls.push((
                toks[0].to_string(),
                toks[1].parse().map_err(|_| LiftError::Format("tensor rows".into()))?,
                toks[2].parse().map_err(|_| LiftError::Format("tensor cols".into()))?,
            ));
        } else if let Some(mk) = k.strip_prefix("meta.") {
            meta.push((mk.to_string(), v.to_string()));
        } else {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&str, LiftError> {
        fields
            .get(k)
            .map(|s| s.as_str())
            .ok_or_else(|| LiftError::Format(format!("missing field {k}")))
    };
    let payload = &bytes[line_end..];
    let declared: usize = get("binary").unwrap_or("0").parse().unwrap_or(0);
    // "binary" was parsed from the header map only if formatted as a field;
    // recover from the marker line directly.
    let declared = if declared == 0 {
        head.lines()
            .last()
            .and_then(|l| l.strip_prefix("binary: "))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(payload.len())
    } else {
        declared
    };
    if payload.len() != declared {
        return Err(LiftError::Format(format!(
            "payload length {} != declared {declared}",
            payload.len()
        )));
    }
    let checksum = hex(&Sha256::digest(payload));
    if checksum != get("checksum")? {
        return Err(LiftError::ChecksumMismatch);
    }

    let parse_usize = |k: &str| -> Result<usize, LiftError> {
        get(k)?
            .parse()
            .map_err(|_| LiftError::Format(format!("bad integer in {k}")))
    };
    let n = parse_usize("n")?;
    let n_lift = parse_usize("n_lift")?;
    let p = parse_usize("p")?;
    let phi_widths: Vec<usize> = get("phi_widths")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| LiftError::Format("phi_widths".into())))
        .collect::<Result<_, _>>()?;
    let mu_widths: Vec<usize> = get("mu_widths")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| LiftError::Format("mu_widths".into())))
        .collect::<Result<_, _>>()?;
    let bounds_vals: Vec<f64> = get("bounds")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| LiftError::Format("bounds".into())))
        .collect::<Result<_, _>>()?;
    if bounds_vals.len() != 2 * p {
        return Err(LiftError::Format("bounds length".into()));
    }
    let rate_bounds: Vec<f64> = get("rate_bounds")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| LiftError::Format("rate_bounds".into())))
        .collect::<Result<_, _>>()?;

    // Read tensors in declared order.
    let mut offset = 0usize;
    let mut tensors: HashMap<String, DMat> = HashMap::new();
    for (name, rows, cols) in &tensor_decls {
        let count = rows * cols;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let b: [u8; 8] = payload[offset + 8 * i..offset + 8 * i + 8]
                .try_into()
                .map_err(|_| LiftError::Format("payload truncated".into()))?;
            data.push(f64::from_le_bytes(b));
        }
        offset += count * 8;
        tensors.insert(name.clone(), DMat::from_iterator(*rows, *cols, data));
    }
    let take = |tensors: &mut HashMap<String, DMat>, name: &str| -> Result<DMat, LiftError> {
        tensors
            .remove(name)
            .ok_or_else(|| LiftError::Format(format!("missing tensor {name}")))
    };

    let mut tensors = tensors;
    let a = take(&mut tensors, "a")?;
    let b: Vec<DMat> = (0..=p)
        .map(|i| take(&mut tensors, &format!("b{i}")))
        .collect::<Result<_, _>>()?;
    let p_matrix = take(&mut tensors, "p_matrix")?;
    let q_matrix = take(&mut tensors, "q_matrix")?;
    let read_net = |tensors: &mut HashMap<String, DMat>,
                    prefix: &str,
                    widths: &[usize]|
     -> Result<Mlp, LiftError> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            weights.push(take(tensors, &format!("{prefix}_w{l}"))?);
            let bt = take(tensors, &format!("{prefix}_b{l}"))?;
            biases.push(DVector::from_column_slice(bt.as_slice()));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    };
    let phi = read_net(&mut tensors, "phi", &phi_widths)?;
    let mu = read_net(&mut tensors, "mu", &mu_widths)?;

    let model = LiftedLpvModel {
        n,
        n_lift,
        p,
        n_u: parse_usize("n_u")?,
        n_v: parse_usize("n_v")?,
        input_mode: InputMode::parse(get("input_mode")?)
            .ok_or_else(|| LiftError::Format("input_mode".into()))?,
        dt: get("dt")?
            .parse()
            .map_err(|_| LiftError::Format("dt".into()))?,
        a,
        b,
        phi,
        mu,
        p_matrix,
        q_matrix,
        bounds: bounds_vals.chunks(2).map(|c| (c[0], c[1])).collect(),
        rate_bounds,
        provenance: get("provenance").unwrap_or("").to_string(),
    };
    Ok((model, meta))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
