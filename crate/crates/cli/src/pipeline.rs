//! Pipeline stages behind the command-line surface: each stage reads its
//! inputs from artifact files, runs one module of the workbench, and writes
//! artifacts plus the effective configuration next to them.

use std::path::{Path, PathBuf};

use initset::{EllipsoidPair, RefineConfig, SearchConfig};
use lftcore::{
    assemble_lft, close_loop, normalize_params, AssembleOptions, ControllerStep,
    StaticNslpvController,
};
use liftlearn::{InputMode, LiftedLpvModel, TrainConfig, TrainableModel};
use nalgebra::DMatrix;
use rand::SeedableRng;
use sysmodels::{pendulum_initial_ellipsoid, Dataset, GenerateConfig, PendulumParams};

use crate::config::PipelineConfig;
use crate::CliError;

type DMat = DMatrix<f64>;

pub struct StagePaths {
    pub out_dir: PathBuf,
    pub config_hash: String,
}

impl StagePaths {
    pub fn new(out_dir: &Path, cfg: &PipelineConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)?;
        let hash = cfg.hash();
        std::fs::write(
            out_dir.join(format!("effective-config-{hash}.txt")),
            cfg.effective_text(),
        )?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            config_hash: hash,
        })
    }

    pub fn dataset(&self) -> PathBuf {
        self.out_dir.join(format!("dataset-{}.lpd", self.config_hash))
    }

    pub fn model(&self, refined: bool) -> PathBuf {
        if refined {
            self.out_dir.join(format!("model-{}r.lm", self.config_hash))
        } else {
            self.out_dir.join(format!("model-{}.lm", self.config_hash))
        }
    }

    pub fn controller(&self, kind: &str, hbar: usize) -> PathBuf {
        self.out_dir
            .join(format!("ctl-{}-{kind}{hbar}.ctl", self.config_hash))
    }

    pub fn analysis(&self) -> PathBuf {
        self.out_dir.join(format!("analysis-{}.txt", self.config_hash))
    }

    pub fn simulation(&self) -> PathBuf {
        self.out_dir.join(format!("simulation-{}.txt", self.config_hash))
    }

    pub fn traces(&self) -> PathBuf {
        self.out_dir.join(format!("traces-{}.csv", self.config_hash))
    }

    pub fn tuning(&self) -> PathBuf {
        self.out_dir.join(format!("tuning-{}.log", self.config_hash))
    }

    pub fn feasibility(&self) -> PathBuf {
        self.out_dir
            .join(format!("feasibility-{}.txt", self.config_hash))
    }
}

pub fn gen_data(cfg: &PipelineConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let gen = GenerateConfig {
        train_trajectories: cfg.data.train_trajectories,
        val_trajectories: cfg.data.val_trajectories,
        horizon_steps: cfg.data.horizon_steps,
        dt: cfg.data.dt,
        snapshot_len: cfg.data.snapshot_len,
        snapshot_stride: cfg.data.snapshot_stride,
        measurement_sigma: cfg.data.measurement_sigma,
        process_noise_bound: cfg.data.process_noise_bound,
        seed: cfg.data.seed,
        retry_budget: 40,
    };
    let dataset = sysmodels::generate_dataset(
        &PendulumParams::default(),
        &pendulum_initial_ellipsoid(),
        &gen,
    )?;
    let path = paths.dataset();
    sysmodels::save_dataset(&dataset, &path)?;
    Ok(path)
}

pub fn train(
    cfg: &PipelineConfig,
    dataset_path: &Path,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let dataset = sysmodels::load_dataset(dataset_path)?;
    let input_mode = InputMode::parse(&cfg.model.input_mode)
        .ok_or_else(|| CliError::Config(format!("unknown input_mode {}", cfg.model.input_mode)))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let init = TrainableModel::init(
        4,
        cfg.model.n_lift,
        cfg.model.scheduling_dims,
        1,
        1,
        &cfg.model.hidden,
        input_mode,
        dataset.header.dt,
        dataset.header.p_matrix.clone(),
        &mut rng,
    );
    let tc = TrainConfig {
        weights: liftlearn::LossWeights {
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            rho: cfg.train.rho,
            kappa: cfg.train.kappa,
        },
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        grad_clip: cfg.train.grad_clip,
        seed: cfg.train.seed,
        chunks: cfg.train.chunks,
        ..Default::default()
    };
    let out = liftlearn::train(init, &dataset, &tc)?;
    if out.aborted {
        return Err(CliError::Domain("training aborted on non-finite loss".into()));
    }
    let (bounds, rates) = liftlearn::estimate_param_bounds(&out.model, &dataset);
    let model = out.model.finish(bounds, rates);
    let last = out.history.last().ok_or_else(|| CliError::Domain("no epochs".into()))?;
    let ell_final = last.ell;
    let meta = vec![
        ("config_hash".to_string(), paths.config_hash.clone()),
        ("train_dyn".to_string(), last.train_dyn.to_string()),
        ("val_dyn".to_string(), last.val_dyn.to_string()),
        ("ell_loss".to_string(), ell_final.to_string()),
        ("vol_loss".to_string(), last.vol.to_string()),
        ("epochs".to_string(), cfg.train.epochs.to_string()),
    ];
    let path = paths.model(false);
    liftlearn::save_model(&model, &path, &meta)?;
    Ok(path)
}

pub fn refine_q(
    cfg: &PipelineConfig,
    model_path: &Path,
    dataset_path: &Path,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (mut model, mut meta) = liftlearn::load_model(model_path)?;
    let dataset = sysmodels::load_dataset(dataset_path)?;
    let rc = RefineConfig {
        max_rounds: cfg.refine.max_rounds,
        eps_gap: cfg.refine.eps_gap,
        search: SearchConfig {
            restarts: cfg.refine.restarts,
            step: cfg.refine.step,
            iterations: cfg.refine.iterations,
            seed: cfg.refine.seed,
        },
    };
    let outcome = initset::refine(&model, &dataset.initial_states(), &rc)?;
    model.q_matrix = outcome.pair.q;
    model.provenance = format!(
        "refined: rounds={} samples={} gap={:.3e} exhausted={}",
        outcome.rounds, outcome.sample_count, outcome.gap, outcome.exhausted
    );
    meta.retain(|(k, _)| k != "config_hash");
    meta.insert(0, ("config_hash".to_string(), paths.config_hash.clone()));
    let path = paths.model(true);
    liftlearn::save_model(&model, &path, &meta)?;
    Ok(path)
}

/// Normalized synthesis inputs shared by the synthesis and tuning stages.
pub struct SynthesisSetup {
    pub normalized: LiftedLpvModel,
    pub pair: EllipsoidPair,
    pub gamma_factor: DMat,
    pub original_bounds: Vec<(f64, f64)>,
}

pub fn synthesis_setup(model: &LiftedLpvModel) -> Result<SynthesisSetup, CliError> {
    let normalized = normalize_params(model);
    let pair = EllipsoidPair {
        p: model.p_matrix.clone(),
        q: model.q_matrix.clone(),
    };
    let gamma_factor = synth::initial_set_factor(&pair).map_err(CliError::Synth)?;
    Ok(SynthesisSetup {
        normalized,
        pair,
        gamma_factor,
        original_bounds: model.bounds.clone(),
    })
}

pub fn synth_scheduled(
    cfg: &PipelineConfig,
    model_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, f64), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let setup = synthesis_setup(&model)?;
    let plant = assemble_lft(
        &setup.normalized,
        &cfg.synth.penalties,
        &AssembleOptions {
            include_measurement_noise: false,
            w: None,
            disturbance_bound: cfg.synth.disturbance_bound,
        },
    )?;
    let opts = synth::SynthOptions {
        tol: cfg.synth.tol,
        h_bar: cfg.synth.hbar,
    };
    let cert = synth::synthesize_nslpv(&plant, &setup.pair, &opts).map_err(CliError::Synth)?;
    let (ctrl, cert_used) = synth::reconstruct_controller(
        &plant,
        &cert,
        &setup.gamma_factor,
        model.n,
        &synth::ReconstructOptions {
            tol: cfg.synth.tol,
            ..Default::default()
        },
        setup.original_bounds,
    )
    .map_err(CliError::Synth)?;
    let path = paths.controller("nslpv", cfg.synth.hbar);
    lftcore::save_controller(
        &ctrl,
        &path,
        &[
            ("config_hash".to_string(), paths.config_hash.clone()),
            ("gamma".to_string(), cert_used.gamma.to_string()),
            ("kind".to_string(), "scheduled".to_string()),
            ("hbar".to_string(), cfg.synth.hbar.to_string()),
        ],
    )?;
    Ok((path, cert_used.gamma))
}

pub fn synth_lti(
    cfg: &PipelineConfig,
    model_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, f64), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let setup = synthesis_setup(&model)?;
    // Nominal view: the scheduled channels dropped after normalization.
    let mut nominal = setup.normalized.clone();
    nominal.p = 0;
    nominal.b.truncate(1);
    nominal.bounds.clear();
    nominal.rate_bounds.clear();
    let plant = assemble_lft(
        &nominal,
        &cfg.synth.penalties,
        &AssembleOptions {
            include_measurement_noise: false,
            w: None,
            disturbance_bound: cfg.synth.disturbance_bound,
        },
    )?;
    let lti = synth::synthesize_lti(
        &plant,
        &synth::InitialSet::Pair(setup.pair.clone()),
        cfg.synth.tol,
    )
    .map_err(CliError::Synth)?;
    let ctrl = StaticNslpvController {
        h_bar: 0,
        steps: vec![ControllerStep::static_gain(
            lti.gain.clone(),
            setup.normalized.p,
        )],
        bounds: setup.original_bounds,
    };
    let path = paths.controller("lti", 0);
    lftcore::save_controller(
        &ctrl,
        &path,
        &[
            ("config_hash".to_string(), paths.config_hash.clone()),
            ("gamma".to_string(), lti.gamma.to_string()),
            ("kind".to_string(), "lti".to_string()),
        ],
    )?;
    Ok((path, lti.gamma))
}

pub fn synth_output_feedback(
    cfg: &PipelineConfig,
    model_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, f64), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let setup = synthesis_setup(&model)?;
    let plant = assemble_lft(
        &setup.normalized,
        &cfg.synth.penalties,
        &AssembleOptions {
            include_measurement_noise: false,
            w: None,
            disturbance_bound: cfg.synth.disturbance_bound,
        },
    )?;
    let cert = synth::output_feedback_feasibility(
        &plant,
        &setup.gamma_factor,
        &[model.n, model.n_bar()],
        cfg.synth.hbar,
        cfg.synth.tol,
    )
    .map_err(CliError::Synth)?;
    let path = paths.feasibility();
    std::fs::write(
        &path,
        format!(
            "output-feedback feasibility\nconfig_hash: {}\ngamma: {}\nscalars: b={} f2={} g={} t={}\n",
            paths.config_hash, cert.gamma, cert.b, cert.f2, cert.g, cert.t
        ),
    )?;
    Ok((path, cert.gamma))
}

/// Shared analysis construction: closed loop of the measurement-noise plant
/// with a controller, analyzed with per-step scalings.
pub fn analysis_gamma(
    cfg: &PipelineConfig,
    model: &LiftedLpvModel,
    dataset: &Dataset,
    ctrl: &StaticNslpvController,
) -> Result<iqc::AnalysisCertificate, CliError> {
    let setup = synthesis_setup(model)?;
    let states: Vec<nalgebra::DVector<f64>> = dataset
        .all_snapshots()
        .flat_map(|s| s.x.iter().cloned())
        .take(2000)
        .collect();
    let w = simeval::estimate_noise_weights(
        model,
        &states,
        &vec![cfg.data.measurement_sigma; model.n],
        cfg.analysis.noise_weight_samples.max(1000),
        cfg.analysis.seed,
    );
    let mut penalties = vec![1.0; model.n + model.n_u];
    penalties.clone_from_slice(&vec![1.0; model.n + model.n_u]);
    let plant = assemble_lft(
        &setup.normalized,
        &penalties,
        &AssembleOptions {
            include_measurement_noise: true,
            w: Some(w),
            disturbance_bound: cfg.analysis.disturbance_bound,
        },
    )?;
    let closed = close_loop(&plant, ctrl)?;
    iqc::analyze(
        &closed.system,
        &setup.gamma_factor,
        &[model.n, model.n_bar()],
        &iqc::UncertaintyMultiplier::StaticScaling,
        &iqc::SignalMultiplier::None,
        &iqc::AnalysisOptions {
            tol: cfg.analysis.tol,
        },
    )
    .map_err(CliError::Iqc)
}

pub fn analyze(
    cfg: &PipelineConfig,
    model_path: &Path,
    ctl_path: &Path,
    dataset_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, f64), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let dataset = sysmodels::load_dataset(dataset_path)?;
    let (ctrl, _) = lftcore::load_controller(ctl_path)?;
    let cert = analysis_gamma(cfg, &model, &dataset, &ctrl)?;
    let path = paths.analysis();
    let worst_margin = cert
        .step_margins
        .iter()
        .fold(f64::INFINITY, |a, m| a.min(*m));
    let wp = match &cert.wellposed {
        iqc::WellPosedness::Certified { worst_feedthrough } => {
            format!("certified (feedthrough norm {worst_feedthrough:.4})")
        }
        iqc::WellPosedness::UnverifiedWithSamples {
            grid_points_per_axis,
            min_abs_det,
        } => format!(
            "unverified-with-samples (grid {grid_points_per_axis}, min |det| {min_abs_det:.3e})"
        ),
    };
    std::fs::write(
        &path,
        format!(
            "robust performance analysis\nconfig_hash: {}\ngamma: {}\nt: {}\nf2: {}\ng: {}\n\
             f1: {}\nmultiplier: {}\nwellposed: {}\nworst_step_margin: {:.6e}\n",
            paths.config_hash,
            cert.gamma,
            cert.t,
            cert.f2,
            cert.g,
            cert.f1.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            cert.multiplier,
            wp,
            worst_margin
        ),
    )?;
    Ok((path, cert.gamma))
}

pub fn tune_weights(
    cfg: &PipelineConfig,
    model_path: &Path,
    dataset_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, Vec<f64>, f64), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let dataset = sysmodels::load_dataset(dataset_path)?;
    let setup = synthesis_setup(&model)?;
    // The analysis plant is fixed across the tuning loop.
    let states: Vec<nalgebra::DVector<f64>> = dataset
        .all_snapshots()
        .flat_map(|s| s.x.iter().cloned())
        .take(2000)
        .collect();
    let w = simeval::estimate_noise_weights(
        &model,
        &states,
        &vec![cfg.data.measurement_sigma; model.n],
        cfg.analysis.noise_weight_samples.max(1000),
        cfg.analysis.seed,
    );
    let analysis_plant = assemble_lft(
        &setup.normalized,
        &vec![1.0; model.n + model.n_u],
        &AssembleOptions {
            include_measurement_noise: true,
            w: Some(w),
            disturbance_bound: cfg.analysis.disturbance_bound,
        },
    )?;
    let evaluator = |c: &[f64]| -> Option<f64> {
        let plant = assemble_lft(
            &setup.normalized,
            c,
            &AssembleOptions {
                include_measurement_noise: false,
                w: None,
                disturbance_bound: cfg.synth.disturbance_bound,
            },
        )
        .ok()?;
        let opts = synth::SynthOptions {
            tol: cfg.synth.tol,
            h_bar: cfg.synth.hbar,
        };
        let cert = synth::synthesize_nslpv(&plant, &setup.pair, &opts).ok()?;
        let (ctrl, _) = synth::reconstruct_controller(
            &plant,
            &cert,
            &setup.gamma_factor,
            model.n,
            &synth::ReconstructOptions {
                tol: cfg.synth.tol,
                ..Default::default()
            },
            setup.original_bounds.clone(),
        )
        .ok()?;
        let closed = close_loop(&analysis_plant, &ctrl).ok()?;
        iqc::analyze(
            &closed.system,
            &setup.gamma_factor,
            &[model.n, model.n_bar()],
            &iqc::UncertaintyMultiplier::StaticScaling,
            &iqc::SignalMultiplier::None,
            &iqc::AnalysisOptions {
                tol: cfg.analysis.tol,
            },
        )
        .ok()
        .map(|cert| cert.gamma)
    };
    let params = tune::TuneParams {
        delta_c: cfg.tune.delta_c,
        n_line: cfg.tune.n_line,
        alpha_max: cfg.tune.alpha_max,
        stop_rel: cfg.tune.stop_rel,
        max_outer: cfg.tune.max_outer,
    };
    let outcome = tune::tune(evaluator, &cfg.synth.penalties, &params)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let path = paths.tuning();
    std::fs::write(
        &path,
        format!(
            "config_hash: {}\nfinal_gamma: {}\nfinal_c: {}\nevaluator_calls: {}\nconverged: {}\n\n{}",
            paths.config_hash,
            outcome.gamma,
            outcome
                .c
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            outcome.evaluator_calls,
            outcome.converged,
            tune::log_to_string(&outcome.log)
        ),
    )?;
    Ok((path, outcome.c, outcome.gamma))
}

pub fn simulate(
    cfg: &PipelineConfig,
    model_path: &Path,
    ctl_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, simeval::SimSummary), CliError> {
    let paths = StagePaths::new(out_dir, cfg)?;
    let (model, _) = liftlearn::load_model(model_path)?;
    let (ctrl, _) = lftcore::load_controller(ctl_path)?;
    let sim_cfg = simeval::SimConfig {
        horizon_seconds: cfg.sim.horizon_seconds,
        runs: cfg.sim.runs,
        process_noise_bound: cfg.data.process_noise_bound,
        measurement_sigma: vec![cfg.data.measurement_sigma; model.n],
        seed: cfg.sim.seed,
        envelope_factor: cfg.sim.envelope_factor,
    };
    let summary = simeval::run_closed_loop(&PendulumParams::default(), &model, &ctrl, &sim_cfg)?;
    let path = paths.simulation();
    std::fs::write(
        &path,
        format!(
            "closed-loop simulation\nconfig_hash: {}\nruns: {}\nsuccesses: {}\ngamma_sim: {}\n\
             clamp_events: {}\nexcluded_zero_energy: {}\n",
            paths.config_hash,
            cfg.sim.runs,
            summary.successes,
            summary.gamma_sim,
            summary.clamp_events,
            summary.excluded_zero_energy
        ),
    )?;
    // Plot data: one row per (run, step) with state, input and disturbance
    // columns, for external plotting.
    let mut csv = String::from("run,k,q1,q2,dq1,dq2,u,d_norm\n");
    for (r, tr) in summary.traces.iter().enumerate().take(20) {
        for (k, u) in tr.inputs.iter().enumerate() {
            let x = &tr.states[k];
            csv.push_str(&format!(
                "{r},{k},{},{},{},{},{},{}\n",
                x[0],
                x[1],
                x[2],
                x[3],
                u,
                tr.disturbances[k].norm()
            ));
        }
    }
    std::fs::write(paths.traces(), csv)?;
    Ok((path, summary))
}

/// Parse a "key: value" stage report back into pairs.
pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once(':').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect())
}
