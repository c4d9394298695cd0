//! Versioned file containers for LFT systems and controllers: a text header
//! with per-step matrix declarations followed by a little-endian f64
//! payload.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::system::{ControllerStep, EventuallyPeriodicLft, LftTimeStep, StaticNslpvController};
use crate::LftError;

type DMat = DMatrix<f64>;

fn push_tensor(payload: &mut Vec<u8>, decls: &mut Vec<String>, name: &str, t: &DMat) {
    decls.push(format!("tensor: {name} {} {}", t.nrows(), t.ncols()));
    for v in t.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
}

struct Container {
    fields: HashMap<String, String>,
    meta: Vec<(String, String)>,
    tensors: HashMap<String, DMat>,
}

fn read_container(path: &Path, magic: &str) -> Result<Container, LftError> {
    let bytes = std::fs::read(path)?;
    let marker = b"binary: ";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| LftError::Format("missing binary marker".into()))?;
    let line_end = bytes[pos..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LftError::Format("unterminated binary marker".into()))?
        + pos
        + 1;
    let head = std::str::from_utf8(&bytes[..line_end])
        .map_err(|_| LftError::Format("header not utf-8".into()))?;
    if !head.starts_with(magic) {
        return Err(LftError::Format(format!("expected {magic} file")));
    }
    let mut fields = HashMap::new();
    let mut meta = Vec::new();
    let mut decls: Vec<(String, usize, usize)> = Vec::new();
    for line in head.lines().skip(1) {
        let Some((k, v)) = line.split_once(':') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k == "tensor" {
            let toks: Vec<&str> = v.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(LftError::Format("bad tensor declaration".into()));
            }
            decls.push((
                toks[0].into(),
                toks[1].parse().map_err(|_| LftError::Format("rows".into()))?,
                toks[2].parse().map_err(|_| LftError::Format("cols".into()))?,
            ));
        } else if let Some(mk) = k.strip_prefix("meta.") {
            meta.push((mk.to_string(), v.to_string()));
        } else {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let payload = &bytes[line_end..];
    let mut tensors = HashMap::new();
    let mut off = 0usize;
    for (name, r, c) in decls {
        let need = r * c * 8;
        if off + need > payload.len() {
            return Err(LftError::Format("payload truncated".into()));
        }
        let data: Vec<f64> = (0..r * c)
            .map(|i| {
                f64::from_le_bytes(payload[off + 8 * i..off + 8 * i + 8].try_into().unwrap())
            })
            .collect();
        off += need;
        tensors.insert(name, DMat::from_iterator(r, c, data));
    }
    Ok(Container {
        fields,
        meta,
        tensors,
    })
}

pub fn save_lft(
    sys: &EventuallyPeriodicLft,
    path: &Path,
    extra_meta: &[(String, String)],
) -> Result<(), LftError> {
    let mut payload = Vec::new();
    let mut decls = Vec::new();
    for (k, s) in sys.steps.iter().enumerate() {
        for (name, t) in [
            ("a_ss", &s.a_ss),
            ("a_sp", &s.a_sp),
            ("a_ps", &s.a_ps),
            ("a_pp", &s.a_pp),
            ("b_1s", &s.b_1s),
            ("b_1p", &s.b_1p),
            ("b_2s", &s.b_2s),
            ("b_2p", &s.b_2p),
            ("c_1s", &s.c_1s),
            ("c_1p", &s.c_1p),
            ("c_2s", &s.c_2s),
            ("c_2p", &s.c_2p),
            ("d_11", &s.d_11),
            ("d_12", &s.d_12),
            ("d_21", &s.d_21),
        ] {
            push_tensor(&mut payload, &mut decls, &format!("k{k}.{name}"), t);
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "LPVLFT v1")?;
    writeln!(w, "h: {}", sys.h)?;
    writeln!(w, "q: {}", sys.q)?;
    for (k, s) in sys.steps.iter().enumerate() {
        writeln!(
            w,
            "blocks{k}: {}",
            s.block_sizes
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
    }
    for (k, v) in extra_meta {
        writeln!(w, "meta.{k}: {v}")?;
    }
    for d in &decls {
        writeln!(w, "{d}")?;
    }
    writeln!(w, "binary: {}", payload.len())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn load_lft(path: &Path) -> Result<(EventuallyPeriodicLft, Vec<(String, String)>), LftError> {
    let mut c = read_container(path, "LPVLFT")?;
    let geti = |f: &HashMap<String, String>, k: &str| -> Result<usize, LftError> {
        f.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| LftError::Format(format!("missing {k}")))
    };
    let h = geti(&c.fields, "h")?;
    let q = geti(&c.fields, "q")?;
    let mut steps = Vec::new();
    for k in 0..h + q {
        let blocks: Vec<usize> = c
            .fields
            .get(&format!("blocks{k}"))
            .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
            .unwrap_or_default();
        let mut take = |name: &str| -> Result<DMat, LftError> {
            c.tensors
                .remove(&format!("k{k}.{name}"))
                .ok_or_else(|| LftError::Format(format!("missing tensor k{k}.{name}")))
        };
        steps.push(LftTimeStep {
            a_ss: take("a_ss")?,
            a_sp: take("a_sp")?,
            a_ps: take("a_ps")?,
            a_pp: take("a_pp")?,
            b_1s: take("b_1s")?,
            b_1p: take("b_1p")?,
            b_2s: take("b_2s")?,
            b_2p: take("b_2p")?,
            c_1s: take("c_1s")?,
            c_1p: take("c_1p")?,
            c_2s: take("c_2s")?,
            c_2p: take("c_2p")?,
            d_11: take("d_11")?,
            d_12: take("d_12")?,
            d_21: take("d_21")?,
            block_sizes: blocks,
        });
    }
    Ok((EventuallyPeriodicLft::new(h, q, steps)?, c.meta))
}

pub fn save_controller(
    ctrl: &StaticNslpvController,
    path: &Path,
    extra_meta: &[(String, String)],
) -> Result<(), LftError> {
    let mut payload = Vec::new();
    let mut decls = Vec::new();
    for (k, s) in ctrl.steps.iter().enumerate() {
        push_tensor(&mut payload, &mut decls, &format!("k{k}.a_pp"), &s.a_pp);
        push_tensor(&mut payload, &mut decls, &format!("k{k}.b_p"), &s.b_p);
        push_tensor(&mut payload, &mut decls, &format!("k{k}.c_p"), &s.c_p);
        push_tensor(&mut payload, &mut decls, &format!("k{k}.d"), &s.d);
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "LPVCTL v1")?;
    writeln!(w, "h_bar: {}", ctrl.h_bar)?;
    for (k, s) in ctrl.steps.iter().enumerate() {
        writeln!(
            w,
            "blocks{k}: {}",
            s.block_sizes
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
    }
    writeln!(
        w,
        "bounds: {}",
        ctrl.bounds
            .iter()
            .map(|(l, h)| format!("{l} {h}"))
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    for (k, v) in extra_meta {
        writeln!(w, "meta.{k}: {v}")?;
    }
    for d in &decls {
        writeln!(w, "{d}")?;
    }
    writeln!(w, "binary: {}", payload.len())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn load_controller(
    path: &Path,
) -> Result<(StaticNslpvController, Vec<(String, String)>), LftError> {
    let mut c = read_container(path, "LPVCTL")?;
    let h_bar: usize = c
        .fields
        .get("h_bar")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LftError::Format("missing h_bar".into()))?;
    let bounds: Vec<f64> = c
        .fields
        .get("bounds")
        .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    let mut steps = Vec::new();
    for k in 0..=h_bar {
        let blocks: Vec<usize> = c
            .fields
            .get(&format!("blocks{k}"))
            .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
            .unwrap_or_default();
        let mut take = |name: &str| -> Result<DMat, LftError> {
            c.tensors
                .remove(&format!("k{k}.{name}"))
                .ok_or_else(|| LftError::Format(format!("missing tensor k{k}.{name}")))
        };
        steps.push(ControllerStep {
            a_pp: take("a_pp")?,
            b_p: take("b_p")?,
            c_p: take("c_p")?,
            d: take("d")?,
            block_sizes: blocks,
        });
    }
    Ok((
        StaticNslpvController {
            h_bar,
            steps,
            bounds: bounds.chunks(2).map(|c| (c[0], c[1])).collect(),
        },
        c.meta,
    ))
}
