//! Pipeline report: headline numbers gathered from the artifacts of one
//! experiment directory, refusing to mix configuration hashes unless forced.

use std::path::Path;

use crate::pipeline::read_kv;
use crate::CliError;

#[derive(Debug, Default)]
pub struct Report {
    pub config_hash: Option<String>,
    pub train_dyn: Option<f64>,
    pub val_dyn: Option<f64>,
    pub q_volume: Option<f64>,
    pub gamma_synth: Option<f64>,
    pub gamma_analysis: Option<f64>,
    pub gamma_sim: Option<f64>,
    pub successes: Option<(usize, usize)>,
    pub tuned_penalties: Option<Vec<f64>>,
}

fn note_hash(
    hash: &mut Option<String>,
    found: &str,
    force: bool,
    what: &Path,
) -> Result<(), CliError> {
    match hash {
        None => *hash = Some(found.to_string()),
        Some(h) if h == found => {}
        Some(h) => {
            if !force {
                return Err(CliError::Domain(format!(
                    "artifact {} carries config hash {found}, expected {h}; rerun or pass --force",
                    what.display()
                )));
            }
        }
    }
    Ok(())
}

pub fn gather(dir: &Path, force: bool) -> Result<Report, CliError> {
    let mut report = Report::default();
    let mut found_any = false;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if name.starts_with("model-") && name.ends_with(".lm") {
            found_any = true;
            let (model, meta) = liftlearn::load_model(&path)?;
            for (k, v) in &meta {
                match k.as_str() {
                    "config_hash" => note_hash(&mut report.config_hash, v, force, &path)?,
                    "train_dyn" => report.train_dyn = v.parse().ok(),
                    "val_dyn" => report.val_dyn = v.parse().ok(),
                    _ => {}
                }
            }
            // √det(Q⁻¹): the ellipsoid volume surrogate.
            let det = model.q_matrix.determinant();
            if det > 0.0 {
                report.q_volume = Some((1.0 / det).sqrt());
            }
        } else if name.starts_with("ctl-") && name.ends_with(".ctl") {
            found_any = true;
            let (_, meta) = lftcore::load_controller(&path)?;
            for (k, v) in &meta {
                match k.as_str() {
                    "config_hash" => note_hash(&mut report.config_hash, v, force, &path)?,
                    "gamma" => report.gamma_synth = v.parse().ok(),
                    _ => {}
                }
            }
        } else if name.starts_with("analysis-") {
            found_any = true;
            for (k, v) in read_kv(&path)? {
                match k.as_str() {
                    "config_hash" => note_hash(&mut report.config_hash, &v, force, &path)?,
                    "gamma" => report.gamma_analysis = v.parse().ok(),
                    _ => {}
                }
            }
        } else if name.starts_with("simulation-") {
            found_any = true;
            let mut runs = None;
            let mut succ = None;
            for (k, v) in read_kv(&path)? {
                match k.as_str() {
                    "config_hash" => note_hash(&mut report.config_hash, &v, force, &path)?,
                    "gamma_sim" => report.gamma_sim = v.parse().ok(),
                    "runs" => runs = v.parse().ok(),
                    "successes" => succ = v.parse().ok(),
                    _ => {}
                }
            }
            if let (Some(r), Some(s)) = (runs, succ) {
                report.successes = Some((s, r));
            }
        } else if name.starts_with("tuning-") {
            found_any = true;
            for (k, v) in read_kv(&path)? {
                match k.as_str() {
                    "config_hash" => note_hash(&mut report.config_hash, &v, force, &path)?,
                    "final_c" => {
                        report.tuned_penalties =
                            v.split_whitespace().map(|t| t.parse().ok()).collect()
                    }
                    _ => {}
                }
            }
        }
    }
    if !found_any {
        return Err(CliError::Domain(format!(
            "no artifacts found in {}",
            dir.display()
        )));
    }
    Ok(report)
}

pub fn render(report: &Report) -> String {
    let fmt_opt = |v: &Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "—".into());
    let mut out = String::new();
    out.push_str("pipeline report\n===============\n");
    if let Some(h) = &report.config_hash {
        out.push_str(&format!("config hash:        {h}\n"));
    }
    out.push_str(&format!("prediction loss:    train {}  val {}\n", fmt_opt(&report.train_dyn), fmt_opt(&report.val_dyn)));
    out.push_str(&format!("ellipsoid volume:   sqrt(det Q^-1) = {}\n", report.q_volume.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "—".into())));
    out.push_str(&format!("synthesis level:    {}\n", fmt_opt(&report.gamma_synth)));
    out.push_str(&format!("analysis level:     {}\n", fmt_opt(&report.gamma_analysis)));
    out.push_str(&format!("simulation level:   {}\n", fmt_opt(&report.gamma_sim)));
    if let Some((s, r)) = report.successes {
        out.push_str(&format!("simulation success: {s}/{r}\n"));
    }
    if let Some(c) = &report.tuned_penalties {
        out.push_str(&format!(
            "tuned penalties:    [{}]\n",
            c.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ));
    }
    out
}
