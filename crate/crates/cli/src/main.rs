use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpvcli::{config::PipelineConfig, pipeline, report, CliError};

#[derive(Parser)]
#[command(
    name = "lpvlift",
    about = "Lifted LPV control workbench: learn, synthesize, certify, simulate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the randomness seeds of all stages.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the closed-loop learning dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the lifted model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset artifact produced by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Refine the lifted initial-set ellipsoid on the trained model.
    RefineQ {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Controller synthesis.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Robust-performance analysis of a closed loop.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Analysis-in-the-loop penalty tuning.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Closed-loop nonlinear simulation campaign.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        controller: PathBuf,
    },
    /// Summarize the artifacts of an experiment directory.
    Report {
        /// Experiment directory.
        #[arg(long, default_value = "out")]
        dir: PathBuf,
        /// Allow mixing artifacts from different configurations.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// Scheduled state-feedback synthesis with reconstruction.
    Nslpv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Finite-horizon length of the controller.
        #[arg(long)]
        hbar: Option<usize>,
    },
    /// Static LTI gain on the nominal view.
    Lti {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Output-feedback feasibility certificate (no construction).
    Outfb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hbar: Option<usize>,
    },
}

fn load_cfg(common: &Common) -> Result<PipelineConfig, CliError> {
    if common.threads > 0 {
        let _ = rayon_pool(common.threads);
    }
    PipelineConfig::load(common.config.as_deref(), common.seed)
}

fn rayon_pool(threads: usize) -> Result<(), CliError> {
    // Build once; later calls fail silently if a pool exists, which is fine.
    let _ = std::env::var("RAYON_NUM_THREADS");
    std::env::set_var("RAYON_NUM_THREADS", threads.to_string());
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_cfg(&common)?;
            let path = pipeline::gen_data(&cfg, &common.out)?;
            println!("dataset written to {}", path.display());
        }
        Command::Train { common, data } => {
            let cfg = load_cfg(&common)?;
            let path = pipeline::train(&cfg, &data, &common.out)?;
            println!("model written to {}", path.display());
        }
        Command::RefineQ {
            common,
            model,
            data,
        } => {
            let cfg = load_cfg(&common)?;
            let path = pipeline::refine_q(&cfg, &model, &data, &common.out)?;
            println!("refined model written to {}", path.display());
        }
        Command::Synth { kind } => match kind {
            SynthKind::Nslpv {
                common,
                model,
                hbar,
            } => {
                let mut cfg = load_cfg(&common)?;
                if let Some(h) = hbar {
                    cfg.synth.hbar = h;
                }
                let (path, gamma) = pipeline::synth_scheduled(&cfg, &model, &common.out)?;
                println!("controller written to {} (level {gamma:.6})", path.display());
            }
            SynthKind::Lti { common, model } => {
                let cfg = load_cfg(&common)?;
                let (path, gamma) = pipeline::synth_lti(&cfg, &model, &common.out)?;
                println!("controller written to {} (level {gamma:.6})", path.display());
            }
            SynthKind::Outfb {
                common,
                model,
                hbar,
            } => {
                let mut cfg = load_cfg(&common)?;
                if let Some(h) = hbar {
                    cfg.synth.hbar = h;
                }
                let (path, gamma) = pipeline::synth_output_feedback(&cfg, &model, &common.out)?;
                println!("feasibility written to {} (level {gamma:.6})", path.display());
            }
        },
        Command::Analyze {
            common,
            model,
            controller,
            data,
        } => {
            let cfg = load_cfg(&common)?;
            let (path, gamma) = pipeline::analyze(&cfg, &model, &controller, &data, &common.out)?;
            println!("analysis written to {} (level {gamma:.6})", path.display());
        }
        Command::Tune {
            common,
            model,
            data,
        } => {
            let cfg = load_cfg(&common)?;
            let (path, c, gamma) = pipeline::tune_weights(&cfg, &model, &data, &common.out)?;
            println!(
                "tuning written to {} (level {gamma:.6}, weights [{}])",
                path.display(),
                c.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
            );
        }
        Command::Simulate {
            common,
            model,
            controller,
        } => {
            let cfg = load_cfg(&common)?;
            let (path, summary) = pipeline::simulate(&cfg, &model, &controller, &common.out)?;
            println!(
                "simulation written to {} ({}/{} runs in envelope, empirical level {:.6})",
                path.display(),
                summary.successes,
                summary.traces.len(),
                summary.gamma_sim
            );
        }
        Command::Report { dir, force } => {
            let rep = report::gather(&dir, force)?;
            print!("{}", report::render(&rep));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
