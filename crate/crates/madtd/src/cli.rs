//! Command-line surface: `train`, `stability`, `probe`, `sweep`, and
//! `regret`. Config precedence is defaults < JSON config file < flags; the
//! artifact root is `runs/` unless `--runs-dir` or `MADTD_RUNS_DIR` says
//! otherwise. Every run directory gets an atomically written manifest with
//! checksums of its metric files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{adversarial_probe, q_overestimation, regret_report, DiagnosticsError};
use crate::envs::{by_id, random_mdp, EnvError};
use crate::linstab::{
    decompose_key_matrix, discounted_occupancy, divergent_two_state, gradient_flow,
    is_positive_definite, key_matrix, onpolicy_two_state, FeatureMap, LinStabError,
    PolicyMatrix, StabilityExample,
};
use crate::nets::{load_checkpoint, NetsError};
use crate::planner::PlannerError;
use crate::trainer::{train, ActionSource, TrainConfig, TrainerError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadArgs(String),
    #[error("{failed} of {total} sweep cells failed")]
    SweepCellsFailed { failed: usize, total: usize },
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    LinStab(#[from] LinStabError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Parser, Debug)]
#[command(name = "madtd", about = "Model-augmented TD training and linear-TD stability analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one training job and write metrics, checkpoint, summary, manifest.
    Train(TrainArgs),
    /// Analyze linear-TD stability of a tabular MDP (bundled or random).
    Stability(StabilityArgs),
    /// Evaluate a saved checkpoint: overestimation and adversarial smoothness.
    Probe(ProbeArgs),
    /// Run a config x seed grid and aggregate returns/regret with bootstrap CIs.
    Sweep(SweepArgs),
    /// Compute average regret from a finished run's summary.
    Regret(RegretArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainArgs {
    /// Flat JSON config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub utd: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub init_random_steps: Option<u64>,
    /// 0 disables periodic resets.
    #[arg(long)]
    pub reset_interval: Option<u64>,
    /// Where model-batch actions come from: "policy" or "random".
    #[arg(long)]
    pub action_source: Option<String>,
    /// One-step CEM planning at action selection: "on" or "off".
    #[arg(long)]
    pub mpc: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub vmax: Option<f64>,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    /// Run directory name; derived from the config when omitted.
    #[arg(long)]
    pub name: Option<String>,
}

/// defaults < config file < flags, then network dims pinned to the env.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(env) = &args.env {
        cfg.env_id = env.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.utd {
        cfg.utd = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.steps {
        cfg.steps_total = v;
    }
    if let Some(v) = args.init_random_steps {
        cfg.init_random_steps = v;
    }
    if let Some(v) = args.reset_interval {
        cfg.reset_interval = v;
    }
    if let Some(src) = &args.action_source {
        cfg.action_source = match src.as_str() {
            "policy" => ActionSource::Policy,
            "random" => ActionSource::UniformRandom,
            other => {
                return Err(CliError::BadArgs(format!(
                    "unknown action source '{other}' (options: policy, random)"
                )))
            }
        };
    }
    if let Some(mpc) = &args.mpc {
        cfg.mpc.enabled = match mpc.as_str() {
            "on" => true,
            "off" => false,
            other => {
                return Err(CliError::BadArgs(format!("--mpc takes on|off, got '{other}'")))
            }
        };
    }
    if let Some(v) = args.hidden {
        cfg.net.hidden = v;
    }
    if let Some(v) = args.latent {
        cfg.net.latent = v;
    }
    if let Some(v) = args.bins {
        cfg.net.bins = v;
    }
    if let Some(v) = args.vmax {
        cfg.net.vmax = v;
    }
    let env = by_id(&cfg.env_id)?;
    cfg.net.obs_dim = env.obs_dim();
    cfg.net.act_dim = env.act_dim();
    cfg.validate()?;
    Ok(cfg)
}

pub fn runs_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os("MADTD_RUNS_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("runs"),
    }
}

fn default_run_name(cfg: &TrainConfig) -> String {
    let src = match cfg.action_source {
        ActionSource::Policy => "policy",
        ActionSource::UniformRandom => "random",
    };
    format!(
        "train_{}_utd{}_alpha{}_reset{}_{}_seed{}",
        cfg.env_id, cfg.utd, cfg.alpha, cfg.reset_interval, src, cfg.seed
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub seed: u64,
    pub build: String,
    pub started_unix_ms: u128,
    pub ended_unix_ms: u128,
    pub artifacts: Vec<String>,
    pub checksums: BTreeMap<String, String>,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write JSON atomically: temp file in the same directory, then rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Train one run into `<runs_root>/<name>/` and stamp a manifest.
pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf, CliError> {
    let cfg = resolve_train_config(args)?;
    let name = args.name.clone().unwrap_or_else(|| default_run_name(&cfg));
    let run_dir = runs_root(args.runs_dir.as_deref()).join(name);
    let started = unix_ms();
    let artifacts = train(&cfg, &run_dir)?;

    let mut files = vec![
        artifacts.metrics_path.clone(),
        artifacts.summary_path.clone(),
        artifacts.checkpoint_stem.with_extension("bin"),
        artifacts.checkpoint_stem.with_extension("json"),
    ];
    files.retain(|p| p.exists());
    let mut checksums = BTreeMap::new();
    for f in &files {
        let key = f.file_name().unwrap().to_string_lossy().to_string();
        checksums.insert(key, sha256_file(f)?);
    }
    let manifest = RunManifest {
        seed: cfg.seed,
        config: cfg,
        build: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        ended_unix_ms: unix_ms(),
        artifacts: files.iter().map(|p| p.display().to_string()).collect(),
        checksums,
    };
    write_json_atomic(&run_dir.join("manifest.json"), &manifest)?;
    Ok(run_dir)
}

#[derive(Args, Debug, Default, Clone)]
pub struct StabilityArgs {
    /// Bundled example: "divergent2state" or "onpolicy".
    #[arg(long)]
    pub example: Option<String>,
    /// Analyze a seeded random MDP instead of a bundled example.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 4)]
    pub states: usize,
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random behavior policies mixed into the occupancy.
    #[arg(long, default_value_t = 2)]
    pub behaviors: usize,
    /// Make the behavior distribution exactly the target policy's.
    #[arg(long)]
    pub onpolicy: bool,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Write the JSON report here in addition to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub min_eig_key: f64,
    pub min_eig_onpolicy: f64,
    pub min_eig_residual: f64,
    pub key_positive_definite: bool,
    pub diverged: bool,
    pub theta_norm_series: Vec<f64>,
    pub final_theta: Vec<f64>,
}

pub fn stability_report(
    example: &StabilityExample,
    dt: f64,
) -> Result<StabilityReport, CliError> {
    let occ = discounted_occupancy(&example.mdp, &example.behavior)?;
    let key = key_matrix(&[occ.clone()], &example.mdp, &example.target, None)?;
    let (onpolicy_part, residual) = decompose_key_matrix(
        &[occ.clone()],
        &example.mdp,
        std::slice::from_ref(&example.behavior),
        &example.target,
        None,
    )?;
    let (pd, min_eig_key) = is_positive_definite(&key)?;
    let (_, min_eig_onpolicy) = is_positive_definite(&onpolicy_part)?;
    let (_, min_eig_residual) = is_positive_definite(&residual)?;
    let flow = gradient_flow(
        &example.mdp,
        &[occ],
        &example.target,
        &example.features,
        &example.theta0,
        example.horizon,
        dt,
        None,
    )?;
    Ok(StabilityReport {
        min_eig_key,
        min_eig_onpolicy,
        min_eig_residual,
        key_positive_definite: pd,
        diverged: flow.diverged,
        theta_norm_series: flow.theta_norm_series,
        final_theta: flow.theta,
    })
}

/// Multi-behavior variant used by `--random --behaviors N`.
fn stability_report_multi(
    mdp: &crate::envs::TabularMdp,
    behaviors: &[PolicyMatrix],
    target: &PolicyMatrix,
    horizon: f64,
    dt: f64,
) -> Result<StabilityReport, CliError> {
    let occs: Vec<_> = behaviors
        .iter()
        .map(|b| discounted_occupancy(mdp, b))
        .collect::<Result<_, _>>()?;
    let key = key_matrix(&occs, mdp, target, None)?;
    let (onpolicy_part, residual) = decompose_key_matrix(&occs, mdp, behaviors, target, None)?;
    let (pd, min_eig_key) = is_positive_definite(&key)?;
    let (_, min_eig_onpolicy) = is_positive_definite(&onpolicy_part)?;
    let (_, min_eig_residual) = is_positive_definite(&residual)?;
    let features = FeatureMap::identity(mdp.n_pairs());
    let theta0 = DVector::zeros(mdp.n_pairs());
    let flow = gradient_flow(mdp, &occs, target, &features, &theta0, horizon, dt, None)?;
    Ok(StabilityReport {
        min_eig_key,
        min_eig_onpolicy,
        min_eig_residual,
        key_positive_definite: pd,
        diverged: flow.diverged,
        theta_norm_series: flow.theta_norm_series,
        final_theta: flow.theta,
    })
}

pub fn cmd_stability(args: &StabilityArgs) -> Result<StabilityReport, CliError> {
    let report = if let Some(name) = &args.example {
        let example = match name.as_str() {
            "divergent2state" => divergent_two_state(),
            "onpolicy" => onpolicy_two_state(),
            other => {
                return Err(CliError::BadArgs(format!(
                    "unknown example '{other}' (options: divergent2state, onpolicy)"
                )))
            }
        };
        stability_report(&example, args.dt)?
    } else if args.random {
        let mdp = random_mdp(args.states, args.actions, args.gamma, args.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
        let target = PolicyMatrix::random(args.states, args.actions, &mut rng);
        let behaviors: Vec<PolicyMatrix> = if args.onpolicy {
            vec![target.clone()]
        } else {
            (0..args.behaviors.max(1))
                .map(|_| PolicyMatrix::random(args.states, args.actions, &mut rng))
                .collect()
        };
        stability_report_multi(&mdp, &behaviors, &target, args.horizon, args.dt)?
    } else {
        return Err(CliError::BadArgs(
            "pass --example <name> or --random (options: divergent2state, onpolicy)".to_string(),
        ));
    };
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        write_json_atomic(out, &report)?;
    }
    Ok(report)
}

#[derive(Args, Debug, Clone)]
pub struct ProbeArgs {
    /// Checkpoint path stem (the run's `checkpoint`, without extension).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "pendulum_swingup")]
    pub env: String,
    #[arg(long, default_value_t = 4)]
    pub episodes: usize,
    #[arg(long, default_value_t = 32)]
    pub states: usize,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeCmdReport {
    pub q_mean: f64,
    pub mc_return_mean: f64,
    pub overestimation: f64,
    pub adversarial_delta_q: f64,
}

pub fn cmd_probe(args: &ProbeArgs) -> Result<ProbeCmdReport, CliError> {
    let (params, net) = load_checkpoint(&args.checkpoint)?;
    let mut env = by_id(&args.env)?;
    if env.obs_dim() != net.obs_dim || env.act_dim() != net.act_dim {
        return Err(CliError::BadArgs(format!(
            "checkpoint dims ({}, {}) do not match env '{}'",
            net.obs_dim,
            net.act_dim,
            args.env
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (q_mean, mc_return_mean) =
        q_overestimation(&params, &net, env.as_mut(), args.gamma, args.episodes.max(1), &mut rng)?;
    let states: Vec<Vec<f64>> = (0..args.states.max(1))
        .map(|_| {
            env.reset(&mut rng);
            env.observe()
        })
        .collect();
    let adversarial_delta_q =
        adversarial_probe(&params, &net, &states, args.epsilon, args.steps, args.step_size)?;
    let report = ProbeCmdReport {
        q_mean,
        mc_return_mean,
        overestimation: q_mean - mc_return_mean,
        adversarial_delta_q,
    };
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        write_json_atomic(out, &report)?;
    }
    Ok(report)
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Grid JSON: {"base": {...}, "utd": [...], "alpha": [...],
    /// "reset_interval": [...], "action_source": [...], "seeds": [...]}.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SweepGrid {
    pub base: Option<TrainConfig>,
    pub utd: Vec<usize>,
    pub alpha: Vec<f64>,
    pub reset_interval: Vec<u64>,
    pub action_source: Vec<ActionSource>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub label: String,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub final_return: Option<f64>,
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub n_ok: usize,
    pub mean_final_return: f64,
    pub return_ci_lo: f64,
    pub return_ci_hi: f64,
    pub mean_regret: f64,
    pub regret_ci_lo: f64,
    pub regret_ci_hi: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Percentile bootstrap 95% CI of the mean; deterministic per input.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    assert!(!values.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let s: f64 =
            (0..values.len()).map(|_| values[rng.gen_range(0..values.len())]).sum();
        means.push(s / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let pick = |q: f64| means[((resamples - 1) as f64 * q).round() as usize];
    (pick(0.025), pick(0.975))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
    pub dir: PathBuf,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepOutcome, CliError> {
    let grid: SweepGrid = serde_json::from_str(&fs::read_to_string(&args.grid)?)?;
    let base = grid.base.clone().unwrap_or_default();
    let utds = if grid.utd.is_empty() { vec![base.utd] } else { grid.utd.clone() };
    let alphas = if grid.alpha.is_empty() { vec![base.alpha] } else { grid.alpha.clone() };
    let resets = if grid.reset_interval.is_empty() {
        vec![base.reset_interval]
    } else {
        grid.reset_interval.clone()
    };
    let sources = if grid.action_source.is_empty() {
        vec![base.action_source]
    } else {
        grid.action_source.clone()
    };
    let seeds = if grid.seeds.is_empty() { vec![base.seed] } else { grid.seeds.clone() };

    let dir = runs_root(args.runs_dir.as_deref()).join(&args.name);
    fs::create_dir_all(&dir)?;

    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for &utd in &utds {
        for &alpha in &alphas {
            for &reset in &resets {
                for &source in &sources {
                    let src = match source {
                        ActionSource::Policy => "policy",
                        ActionSource::UniformRandom => "random",
                    };
                    let label = format!("utd{utd}_alpha{alpha}_reset{reset}_{src}");
                    let mut returns = Vec::new();
                    let mut regrets = Vec::new();
                    for &seed in &seeds {
                        let mut cfg = base.clone();
                        cfg.utd = utd;
                        cfg.alpha = alpha;
                        cfg.reset_interval = reset;
                        cfg.action_source = source;
                        cfg.seed = seed;
                        let cell_dir = dir.join(&label).join(format!("seed{seed}"));
                        match cfg
                            .validate()
                            .map_err(CliError::from)
                            .and_then(|()| train(&cfg, &cell_dir).map_err(CliError::from))
                        {
                            Ok(artifacts) => {
                                let s = &artifacts.summary;
                                if let Some(r) = s.final_return {
                                    returns.push(r);
                                }
                                if let Some(r) = s.regret_vs_own_best {
                                    regrets.push(r);
                                }
                                cells.push(SweepCell {
                                    label: label.clone(),
                                    seed,
                                    ok: true,
                                    error: None,
                                    final_return: s.final_return,
                                    regret: s.regret_vs_own_best,
                                });
                            }
                            Err(e) => cells.push(SweepCell {
                                label: label.clone(),
                                seed,
                                ok: false,
                                error: Some(e.to_string()),
                                final_return: None,
                                regret: None,
                            }),
                        }
                    }
                    if !returns.is_empty() {
                        let (rlo, rhi) = bootstrap_ci(&returns, BOOTSTRAP_RESAMPLES, 0);
                        let (glo, ghi) = if regrets.is_empty() {
                            (f64::NAN, f64::NAN)
                        } else {
                            bootstrap_ci(&regrets, BOOTSTRAP_RESAMPLES, 1)
                        };
                        rows.push(SweepRow {
                            label: label.clone(),
                            n_ok: returns.len(),
                            mean_final_return: mean(&returns),
                            return_ci_lo: rlo,
                            return_ci_hi: rhi,
                            mean_regret: if regrets.is_empty() { f64::NAN } else { mean(&regrets) },
                            regret_ci_lo: glo,
                            regret_ci_hi: ghi,
                        });
                    }
                }
            }
        }
    }

    let mut cells_csv = String::from("label,seed,ok,error,final_return,regret\n");
    for c in &cells {
        cells_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.label,
            c.seed,
            c.ok,
            c.error.as_deref().unwrap_or("").replace(',', ";"),
            c.final_return.map(|v| v.to_string()).unwrap_or_default(),
            c.regret.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    fs::write(dir.join("cells.csv"), cells_csv)?;

    let mut agg = String::from(
        "label,n_ok,mean_final_return,return_ci_lo,return_ci_hi,mean_regret,regret_ci_lo,regret_ci_hi\n",
    );
    for r in &rows {
        agg.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.label,
            r.n_ok,
            r.mean_final_return,
            r.return_ci_lo,
            r.return_ci_hi,
            r.mean_regret,
            r.regret_ci_lo,
            r.regret_ci_hi,
        ));
    }
    fs::write(dir.join("aggregate.csv"), agg)?;

    let failed = cells.iter().filter(|c| !c.ok).count();
    if failed > 0 {
        return Err(CliError::SweepCellsFailed { failed, total: cells.len() });
    }
    Ok(SweepOutcome { cells, rows, dir })
}

#[derive(Args, Debug, Clone)]
pub struct RegretArgs {
    /// A finished run directory (containing summary.json).
    #[arg(long)]
    pub run: PathBuf,
    /// Reference return; defaults to the run's best episode.
    #[arg(long)]
    pub r_star: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_regret(args: &RegretArgs) -> Result<crate::diagnostics::RegretReport, CliError> {
    let summary: crate::trainer::RunSummary =
        serde_json::from_str(&fs::read_to_string(args.run.join("summary.json"))?)?;
    if summary.episode_returns.is_empty() {
        return Err(CliError::BadArgs("run finished no episodes".to_string()));
    }
    let r_star = args.r_star.unwrap_or_else(|| {
        summary.episode_returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    });
    let report = regret_report(&summary.episode_returns, r_star)?;
    if let Some(out) = &args.out {
        write_json_atomic(out, &report)?;
    }
    Ok(report)
}

/// Parse argv and dispatch; returns a process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result: Result<String, CliError> = match cli.command {
        Command::Train(args) => cmd_train(&args).map(|dir| format!("run written to {}", dir.display())),
        Command::Stability(args) => {
            cmd_stability(&args).and_then(|r| Ok(serde_json::to_string_pretty(&r)?))
        }
        Command::Probe(args) => {
            cmd_probe(&args).and_then(|r| Ok(serde_json::to_string_pretty(&r)?))
        }
        Command::Sweep(args) => cmd_sweep(&args).map(|o| {
            format!("{} cells aggregated into {}", o.cells.len(), o.dir.display())
        }),
        Command::Regret(args) => {
            cmd_regret(&args).and_then(|r| Ok(serde_json::to_string_pretty(&r)?))
        }
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
