//! Dataset file format: a text header followed by little-endian f64 snapshot
//! records, plus a human-readable manifest written alongside.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, DatasetHeader, TrajectorySnapshot};
use crate::SysError;

const MAGIC: &str = "LPVDATA";
const VERSION: u32 = 1;

fn write_f64s<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), SysError> {
    let h = &ds.header;
    let n = h.p_matrix.nrows();
    let n_u = ds
        .train
        .first()
        .or(ds.val.first())
        .map(|s| s.u[0].len())
        .unwrap_or(1);
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MAGIC} v{VERSION}")?;
    writeln!(w, "state_dim: {n}")?;
    writeln!(w, "input_dim: {n_u}")?;
    writeln!(w, "noise_dim: 1")?;
    writeln!(w, "dt: {}", h.dt)?;
    writeln!(w, "snapshot_len: {}", h.snapshot_len)?;
    writeln!(w, "horizon_steps: {}", h.horizon_steps)?;
    writeln!(w, "seed: {}", h.seed)?;
    writeln!(w, "train_trajectories: {}", h.train_trajectories)?;
    writeln!(w, "val_trajectories: {}", h.val_trajectories)?;
    writeln!(w, "train_snapshots: {}", ds.train.len())?;
    writeln!(w, "val_snapshots: {}", ds.val.len())?;
    writeln!(w, "measurement_sigma: {}", h.measurement_sigma)?;
    writeln!(w, "lqr_q: {}", h.lqr_q)?;
    writeln!(w, "lqr_r: {}", h.lqr_r)?;
    writeln!(
        w,
        "state_envelope: {}",
        h.state_envelope
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(w, "input_envelope: {}", h.input_envelope)?;
    writeln!(w, "noise_envelope: {}", h.noise_envelope)?;
    writeln!(
        w,
        "p_matrix: {}",
        h.p_matrix
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(w, "binary:")?;
    for s in ds.train.iter().chain(ds.val.iter()) {
        write_f64s(&mut w, [s.traj as f64, s.offset as f64].into_iter())?;
        for x in &s.x {
            write_f64s(&mut w, x.iter().copied())?;
        }
        for u in &s.u {
            write_f64s(&mut w, u.iter().copied())?;
        }
        for v in &s.v {
            write_f64s(&mut w, v.iter().copied())?;
        }
    }
    w.flush()?;

    let manifest = path.with_extension("manifest.txt");
    std::fs::write(
        manifest,
        format!(
            "dataset: {}\ntrajectories: {} train + {} val\nsnapshots: {} train + {} val\n\
             snapshot length: {}\ndt: {} s\nseed: {}\n",
            path.display(),
            h.train_trajectories,
            h.val_trajectories,
            ds.train.len(),
            ds.val.len(),
            h.snapshot_len,
            h.dt,
            h.seed
        ),
    )?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, SysError> {
    let bytes = std::fs::read(path)?;
    let header_end = bytes
        .windows(8)
        .position(|w| w == b"binary:\n")
        .ok_or_else(|| SysError::Format("missing binary marker".into()))?
        + 8;
    let head = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| SysError::Format("header is not utf-8".into()))?;
    let mut fields = std::collections::HashMap::new();
    for line in head.lines().skip(1) {
        if let Some((k, v)) = line.split_once(':') {
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if !head.starts_with(MAGIC) {
        return Err(SysError::Format("bad magic".into()));
    }
    let get = |k: &str| -> Result<&str, SysError> {
        fields
            .get(k)
            .map(|s| s.as_str())
            .ok_or_else(|| SysError::Format(format!("missing field {k}")))
    };
    let parse = |k: &str| -> Result<f64, SysError> {
        get(k)?
            .parse()
            .map_err(|_| SysError::Format(format!("bad number in {k}")))
    };
    let n = parse("state_dim")? as usize;
    let n_u = parse("input_dim")? as usize;
    let n_v = parse("noise_dim")? as usize;
    let snapshot_len = parse("snapshot_len")? as usize;
    let train_snapshots = parse("train_snapshots")? as usize;
    let val_snapshots = parse("val_snapshots")? as usize;
    let envelope: Vec<f64> = get("state_envelope")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| SysError::Format("envelope".into())))
        .collect::<Result<_, _>>()?;
    let p_vals: Vec<f64> = get("p_matrix")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| SysError::Format("p_matrix".into())))
        .collect::<Result<_, _>>()?;
    if p_vals.len() != n * n {
        return Err(SysError::Format("p_matrix size".into()));
    }
    let header = DatasetHeader {
        state_envelope: envelope,
        input_envelope: parse("input_envelope")?,
        noise_envelope: parse("noise_envelope")?,
        dt: parse("dt")?,
        snapshot_len,
        p_matrix: DMatrix::from_iterator(n, n, p_vals),
        seed: parse("seed")? as u64,
        train_trajectories: parse("train_trajectories")? as usize,
        val_trajectories: parse("val_trajectories")? as usize,
        horizon_steps: parse("horizon_steps")? as usize,
        measurement_sigma: parse("measurement_sigma")?,
        lqr_q: parse("lqr_q")?,
        lqr_r: parse("lqr_r")?,
    };

    let rec_f64s = 2 + (snapshot_len + 1) * n + snapshot_len * n_u + snapshot_len * n_v;
    let mut body = &bytes[header_end..];
    let expect = (train_snapshots + val_snapshots) * rec_f64s * 8;
    if body.len() != expect {
        return Err(SysError::Format(format!(
            "payload size {} != expected {expect}",
            body.len()
        )));
    }
    let mut read_f64 = || -> f64 {
        let mut b = [0u8; 8];
        body.read_exact(&mut b).expect("length checked");
        f64::from_le_bytes(b)
    };
    let mut all = Vec::with_capacity(train_snapshots + val_snapshots);
    for _ in 0..train_snapshots + val_snapshots {
        let traj = read_f64() as usize;
        let offset = read_f64() as usize;
        let x = (0..=snapshot_len)
            .map(|_| DVector::from_fn(n, |_, _| read_f64()))
            .collect();
        let u = (0..snapshot_len)
            .map(|_| DVector::from_fn(n_u, |_, _| read_f64()))
            .collect();
        let v = (0..snapshot_len)
            .map(|_| DVector::from_fn(n_v, |_, _| read_f64()))
            .collect();
        all.push(TrajectorySnapshot {
            x,
            u,
            v,
            traj,
            offset,
        });
    }
    let val = all.split_off(train_snapshots);
    Ok(Dataset {
        header,
        train: all,
        val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, pendulum_initial_ellipsoid, GenerateConfig};
    use crate::pendulum::PendulumParams;

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let cfg = GenerateConfig {
            train_trajectories: 3,
            val_trajectories: 1,
            horizon_steps: 15,
            snapshot_len: 5,
            seed: 11,
            ..Default::default()
        };
        let ds = generate_dataset(
            &PendulumParams::default(),
            &pendulum_initial_ellipsoid(),
            &cfg,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        save_dataset(&ds, &path).unwrap();
        let re = load_dataset(&path).unwrap();
        assert_eq!(ds.train.len(), re.train.len());
        assert_eq!(ds.val.len(), re.val.len());
        for (a, b) in ds.all_snapshots().zip(re.all_snapshots()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.u, b.u);
            assert_eq!(a.v, b.v);
            assert_eq!(a.traj, b.traj);
            assert_eq!(a.offset, b.offset);
        }
        // Re-serialization is byte-identical.
        let path2 = dir.path().join("ds2.bin");
        save_dataset(&re, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
