//! The training loop: replay management, model-generated batch mixing with
//! fraction alpha, update-to-data scheduling with the model and encoder held
//! at ratio 1, optional periodic resets of the actor/critic stack, and run
//! artifact output (metrics CSV, checkpoint, summary JSON).

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    average_regret, onpolicy_probe, DiagnosticsError, ProbeReport, ValEntry,
};
use crate::envs::{by_id, Env, EnvError, Source, Transition};
use crate::losses::{
    actor_loss, critic_loss, model_loss, td_target, Batch, LossError, LossReport,
};
use crate::nets::{
    actor, encode, model_step, save_checkpoint, AgentParams, NetConfig, NetsError,
};
use crate::numkernel::{adam_step, soft_update, AdamState, KernelError, Mat, Tape};
use crate::planner::{plan, MpcConfig, PlannerError};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("replay buffer rejects model-generated transitions")]
    ModelTransitionInReplay,
    #[error("non-finite value at env step {step}: {what}")]
    NonFinite { step: u64, what: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where the actions of model-generated batch rows come from: the current
/// policy (the default) or uniform random draws (the ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Policy,
    UniformRandom,
}

/// Probability that a fresh real transition is admitted to the held-out
/// validation buffer instead of only the replay buffer.
pub const P_VAL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env_id: String,
    pub seed: u64,
    pub utd: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub steps_total: u64,
    pub init_random_steps: u64,
    /// 0 disables periodic resets.
    pub reset_interval: u64,
    pub action_source: ActionSource,
    pub rl_lr: f64,
    pub model_lr: f64,
    pub encoder_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub probe_interval: u64,
    pub log_interval: u64,
    pub mc_episodes: usize,
    pub net: NetConfig,
    pub mpc: MpcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env_id: "pendulum_swingup".to_string(),
            seed: 0,
            utd: 8,
            alpha: 0.05,
            batch_size: 256,
            steps_total: 30_000,
            init_random_steps: 1000,
            reset_interval: 0,
            action_source: ActionSource::Policy,
            rl_lr: 3e-4,
            model_lr: 3e-4,
            encoder_lr: 1e-4,
            tau: 0.995,
            gamma: 0.99,
            replay_capacity: 50_000,
            probe_interval: 500,
            log_interval: 100,
            mc_episodes: 2,
            net: NetConfig::new(3, 1),
            mpc: MpcConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.utd == 0 {
            return Err(TrainerError::InvalidConfig("utd must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainerError::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(TrainerError::InvalidConfig(
                "batch_size must be >= 1 and <= replay_capacity".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(TrainerError::InvalidConfig(format!("tau {} outside [0, 1]", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(TrainerError::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        for (name, lr) in [
            ("rl_lr", self.rl_lr),
            ("model_lr", self.model_lr),
            ("encoder_lr", self.encoder_lr),
        ] {
            if !(lr > 0.0) {
                return Err(TrainerError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.probe_interval == 0 || self.log_interval == 0 {
            return Err(TrainerError::InvalidConfig(
                "probe_interval and log_interval must be >= 1".to_string(),
            ));
        }
        self.net
            .validate()
            .map_err(|e| TrainerError::InvalidConfig(e.to_string()))?;
        self.mpc.validate().map_err(|e| TrainerError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Uniform-sampling ring buffer over real transitions only.
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { capacity, data: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<(), TrainerError> {
        if t.source == Source::Model {
            return Err(TrainerError::ModelTransitionInReplay);
        }
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn sample_indices(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.data.len())).collect()
    }

    pub fn batch(&self, indices: &[usize], cfg: &NetConfig) -> Batch {
        let b = indices.len();
        let mut obs = Mat::zeros(b, cfg.obs_dim);
        let mut actions = Mat::zeros(b, cfg.act_dim);
        let mut rewards = Mat::zeros(b, 1);
        let mut next_obs = Mat::zeros(b, cfg.obs_dim);
        let mut terminals = Vec::with_capacity(b);
        for (r, &i) in indices.iter().enumerate() {
            let t = &self.data[i];
            obs.row_mut(r).copy_from_slice(&t.state);
            actions.row_mut(r).copy_from_slice(&t.action);
            *rewards.at_mut(r, 0) = t.reward;
            next_obs.row_mut(r).copy_from_slice(&t.next_state);
            terminals.push(t.terminal);
        }
        Batch {
            obs,
            actions,
            rewards,
            next_obs,
            model_next_latent: Mat::zeros(b, cfg.latent),
            terminals,
            sources: vec![Source::Real; b],
        }
    }
}

/// Replace round(alpha * B) rows (ties to even, chosen uniformly without
/// replacement) with model-generated data: keep the observation, substitute
/// the policy's (or a uniform random) action, the predicted reward, and the
/// predicted next latent. Replaced rows are tagged as model data and are
/// never terminal.
pub fn mix_batch(
    batch: &Batch,
    params: &AgentParams,
    cfg: &NetConfig,
    alpha: f64,
    action_source: ActionSource,
    rng: &mut ChaCha8Rng,
) -> Result<Batch, TrainerError> {
    let b = batch.len();
    let m = (alpha * b as f64).round_ties_even() as usize;
    let mut out = batch.clone();
    if m == 0 {
        return Ok(out);
    }

    // partial Fisher-Yates: first m entries are a uniform sample w/o replacement
    let mut pool: Vec<usize> = (0..b).collect();
    for i in 0..m {
        let j = rng.gen_range(i..b);
        pool.swap(i, j);
    }
    let chosen = &pool[..m];

    let mut obs = Mat::zeros(m, cfg.obs_dim);
    for (r, &i) in chosen.iter().enumerate() {
        obs.row_mut(r).copy_from_slice(batch.obs.row(i));
    }

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let pi = tape.params(&params.actor, false);
    let mdl = tape.params(&params.model, false);
    let x = tape.constant(obs);
    let z = encode(&mut tape, &enc, cfg, x)?;
    let a = match action_source {
        ActionSource::Policy => actor(&mut tape, &pi, z)?,
        ActionSource::UniformRandom => {
            let mut r = Mat::zeros(m, cfg.act_dim);
            for v in r.data.iter_mut() {
                *v = rng.gen_range(-1.0..=1.0);
            }
            tape.constant(r)
        }
    };
    let step = model_step(&mut tape, &mdl, cfg, z, a)?;
    let actions = tape.value(a).clone();
    let rewards = tape.value(step.reward).clone();
    let z_next = tape.value(step.z_next).clone();

    for (r, &i) in chosen.iter().enumerate() {
        out.actions.row_mut(i).copy_from_slice(actions.row(r));
        *out.rewards.at_mut(i, 0) = rewards.at(r, 0);
        out.model_next_latent.row_mut(i).copy_from_slice(z_next.row(r));
        out.terminals[i] = false;
        out.sources[i] = Source::Model;
    }
    Ok(out)
}

/// Optimizer states for every trainable store.
pub struct Optimizers {
    pub encoder: AdamState,
    pub model: AdamState,
    pub critic_1: AdamState,
    pub critic_2: AdamState,
    pub actor: AdamState,
}

impl Optimizers {
    pub fn new(cfg: &TrainConfig) -> Self {
        Optimizers {
            encoder: AdamState::new(cfg.encoder_lr),
            model: AdamState::new(cfg.model_lr),
            critic_1: AdamState::new(cfg.rl_lr),
            critic_2: AdamState::new(cfg.rl_lr),
            actor: AdamState::new(cfg.rl_lr),
        }
    }
}

pub const GRAD_CLIP: f64 = 10.0;

/// One training round: what was updated and on which replay rows.
#[derive(Debug)]
pub struct RoundOutcome {
    pub reports: Vec<LossReport>,
    pub model_batch_indices: Vec<usize>,
    pub critic_batch_indices: Vec<Vec<usize>>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: AgentParams,
    pub opts: Optimizers,
    pub replay: ReplayBuffer,
    pub val_buffer: Vec<ValEntry>,
    pub env: Box<dyn Env>,
    pub rng: ChaCha8Rng,
    pub env_step: u64,
    pub episode_returns: Vec<f64>,
    episode_acc: f64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainerError> {
        cfg.validate()?;
        let mut env = by_id(&cfg.env_id)?;
        if env.obs_dim() != cfg.net.obs_dim || env.act_dim() != cfg.net.act_dim {
            return Err(TrainerError::InvalidConfig(format!(
                "net dims ({}, {}) do not match env '{}' dims ({}, {})",
                cfg.net.obs_dim,
                cfg.net.act_dim,
                cfg.env_id,
                env.obs_dim(),
                env.act_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = AgentParams::init(&cfg.net, &mut rng);
        env.reset(&mut rng);
        Ok(Trainer {
            opts: Optimizers::new(&cfg),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            val_buffer: Vec::new(),
            params,
            env,
            rng,
            env_step: 0,
            episode_returns: Vec::new(),
            episode_acc: 0.0,
            cfg,
        })
    }

    /// Pick the next environment action: uniform during warmup, else the
    /// deterministic policy, optionally refined by the one-step planner.
    fn select_action(&mut self) -> Result<Vec<f64>, TrainerError> {
        if self.env_step < self.cfg.init_random_steps {
            return Ok((0..self.cfg.net.act_dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect());
        }
        let obs = self.env.observe();
        let mut tape = Tape::new();
        let enc = tape.params(&self.params.encoder, false);
        let x = tape.constant(Mat::from_rows(&[obs]));
        let zn = encode(&mut tape, &enc, &self.cfg.net, x)?;
        let z = tape.value(zn).clone();
        Ok(plan(&self.params, &self.cfg.net, self.cfg.gamma, &z, &self.cfg.mpc, &mut self.rng)?)
    }

    /// Take one environment step; store the transition in replay and, with
    /// probability P_VAL, also in the validation buffer. Model data never
    /// enters either buffer.
    pub fn env_interact(&mut self) -> Result<(), TrainerError> {
        let state = self.env.state();
        let obs = self.env.observe();
        let action = self.select_action()?;
        let out = self.env.step(&action);
        let transition = Transition {
            state: obs,
            action,
            reward: out.reward,
            next_state: out.obs,
            terminal: out.terminal,
            source: Source::Real,
        };
        self.episode_acc += out.reward;
        if self.rng.gen_range(0.0..1.0) < P_VAL {
            self.val_buffer.push(ValEntry { state, transition: transition.clone() });
        }
        self.replay.push(transition)?;
        self.env_step += 1;
        if out.terminal {
            self.episode_returns.push(self.episode_acc);
            self.episode_acc = 0.0;
            self.env.reset(&mut self.rng);
        }
        Ok(())
    }

    /// One update round: a single model+encoder update on a real batch, then
    /// `utd` critic updates on independently re-sampled mixed batches, each
    /// followed by an actor update and a soft target update. Returns None
    /// (round skipped) while the replay holds fewer than batch_size rows.
    pub fn update_round(&mut self) -> Result<Option<RoundOutcome>, TrainerError> {
        let (cfg_alpha, utd, bsz) = (self.cfg.alpha, self.cfg.utd, self.cfg.batch_size);
        if self.replay.len() < bsz {
            return Ok(None);
        }

        let model_indices = self.replay.sample_indices(bsz, &mut self.rng);
        let real_batch = self.replay.batch(&model_indices, &self.cfg.net);
        let model_out = model_loss(&self.params, &self.cfg.net, &real_batch)?;
        self.check_finite(&[model_out.rew, model_out.fwd, model_out.val], "model loss")?;
        adam_step(&mut self.opts.model, &mut self.params.model, &model_out.grads, GRAD_CLIP)?;
        adam_step(&mut self.opts.encoder, &mut self.params.encoder, &model_out.grads, GRAD_CLIP)?;

        let mut reports = Vec::with_capacity(utd);
        let mut critic_batch_indices = Vec::with_capacity(utd);
        for _ in 0..utd {
            let indices = self.replay.sample_indices(bsz, &mut self.rng);
            let batch = self.replay.batch(&indices, &self.cfg.net);
            let mixed = mix_batch(
                &batch,
                &self.params,
                &self.cfg.net,
                cfg_alpha,
                self.cfg.action_source,
                &mut self.rng,
            )?;
            let targets = td_target(&self.params, &self.cfg.net, &mixed, self.cfg.gamma)?;
            let target_q_mean =
                targets.scalars.iter().sum::<f64>() / targets.scalars.len() as f64;
            let critic_out = critic_loss(&self.params, &self.cfg.net, &mixed, &targets)?;
            self.check_finite(&[critic_out.loss], "critic loss")?;
            adam_step(&mut self.opts.critic_1, &mut self.params.critic_1, &critic_out.grads, GRAD_CLIP)?;
            adam_step(&mut self.opts.critic_2, &mut self.params.critic_2, &critic_out.grads, GRAD_CLIP)?;
            adam_step(&mut self.opts.encoder, &mut self.params.encoder, &critic_out.grads, GRAD_CLIP)?;

            let actor_out = actor_loss(&self.params, &self.cfg.net, &mixed)?;
            self.check_finite(&[actor_out.loss], "actor loss")?;
            adam_step(&mut self.opts.actor, &mut self.params.actor, &actor_out.grads, GRAD_CLIP)?;

            soft_update(&mut self.params.target_critic_1, &self.params.critic_1, self.cfg.tau)?;
            soft_update(&mut self.params.target_critic_2, &self.params.critic_2, self.cfg.tau)?;

            reports.push(LossReport {
                critic_loss: critic_out.loss,
                model_rew: model_out.rew,
                model_fwd: model_out.fwd,
                model_val: model_out.val,
                actor_loss: actor_out.loss,
                q_mean: critic_out.q_mean,
                target_q_mean,
            });
            critic_batch_indices.push(indices);
        }
        Ok(Some(RoundOutcome { reports, model_batch_indices: model_indices, critic_batch_indices }))
    }

    fn check_finite(&self, values: &[f64], what: &str) -> Result<(), TrainerError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TrainerError::NonFinite {
                step: self.env_step,
                what: format!("{what}: {values:?}"),
            });
        }
        Ok(())
    }

    /// At positive multiples of reset_interval: reinitialize the actor, both
    /// critics, their targets, and their optimizer states. The encoder,
    /// model, replay, and their optimizers are retained.
    pub fn maybe_reset(&mut self) -> bool {
        let interval = self.cfg.reset_interval;
        if interval == 0 || self.env_step == 0 || self.env_step % interval != 0 {
            return false;
        }
        let net = &self.cfg.net;
        self.params.critic_1 = crate::nets::init_critic(net, &mut self.rng, "q1");
        self.params.critic_2 = crate::nets::init_critic(net, &mut self.rng, "q2");
        self.params.target_critic_1 = self.params.critic_1.clone();
        self.params.target_critic_2 = self.params.critic_2.clone();
        self.params.actor = crate::nets::init_actor(net, &mut self.rng);
        self.opts.critic_1 = AdamState::new(self.cfg.rl_lr);
        self.opts.critic_2 = AdamState::new(self.cfg.rl_lr);
        self.opts.actor = AdamState::new(self.cfg.rl_lr);
        true
    }
}

pub const METRICS_HEADER: &str = "env_step,episode_return,critic_loss,model_fwd,model_rew,\
model_val,actor_loss,q_mean,target_q_mean,val_loss,onpolicy_loss,val_sq,onpolicy_sq,q_overest";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub episode_returns: Vec<f64>,
    pub final_return: Option<f64>,
    pub mean_return: Option<f64>,
    pub regret_vs_own_best: Option<f64>,
    pub probe_history: Vec<ProbeReport>,
    pub wall_clock_secs: f64,
}

pub struct RunArtifacts {
    pub summary: RunSummary,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub checkpoint_stem: PathBuf,
}

/// Number of trailing episodes averaged into `final_return`.
pub const FINAL_RETURN_WINDOW: usize = 5;

/// Run a full training loop, writing `metrics.csv`, `summary.json`, and a
/// checkpoint into `run_dir`. Deterministic given the config seed: two runs
/// with the same config produce byte-identical metrics files.
pub fn train(cfg: &TrainConfig, run_dir: &Path) -> Result<RunArtifacts, TrainerError> {
    let started = Instant::now();
    fs::create_dir_all(run_dir)?;
    let mut trainer = Trainer::new(cfg.clone())?;

    let metrics_path = run_dir.join("metrics.csv");
    let mut metrics = String::with_capacity(1 << 16);
    metrics.push_str(METRICS_HEADER);
    metrics.push('\n');

    let mut last_report = LossReport {
        critic_loss: 0.0,
        model_rew: 0.0,
        model_fwd: 0.0,
        model_val: 0.0,
        actor_loss: 0.0,
        q_mean: 0.0,
        target_q_mean: 0.0,
    };
    let mut last_return = 0.0;
    let mut last_val_loss = 0.0;
    let mut last_onpolicy_loss = 0.0;
    let mut last_val_sq = 0.0;
    let mut last_onpolicy_sq = 0.0;
    let mut last_overest = 0.0;
    let mut probe_history = Vec::new();

    let result = (|| -> Result<(), TrainerError> {
        for step in 1..=cfg.steps_total {
            trainer.env_interact()?;
            if let Some(r) = trainer.episode_returns.last() {
                last_return = *r;
            }

            if step > cfg.init_random_steps {
                if let Some(outcome) = trainer.update_round()? {
                    last_report = outcome.reports.last().expect("utd >= 1").clone();
                }
            }
            trainer.maybe_reset();

            if step % cfg.probe_interval == 0
                && !trainer.val_buffer.is_empty()
                && trainer.replay.len() >= cfg.batch_size
            {
                let indices = trainer.replay.sample_indices(cfg.batch_size, &mut trainer.rng);
                let train_batch = trainer.replay.batch(&indices, &cfg.net);
                let probe_state = trainer.env.state();
                let report = onpolicy_probe(
                    &trainer.params,
                    &cfg.net,
                    cfg.gamma,
                    step,
                    &trainer.val_buffer,
                    trainer.env.as_mut(),
                    &train_batch,
                    cfg.mc_episodes,
                    &mut trainer.rng,
                )?;
                trainer.env.reset_to(&probe_state)?;
                last_val_loss = report.val_loss;
                last_onpolicy_loss = report.onpolicy_loss;
                last_val_sq = report.val_sq;
                last_onpolicy_sq = report.onpolicy_sq;
                last_overest = report.overestimation;
                probe_history.push(report);
            }

            if step % cfg.log_interval == 0 || step == cfg.steps_total {
                metrics.push_str(&format!(
                    "{step},{last_return},{},{},{},{},{},{},{},{last_val_loss},{last_onpolicy_loss},{last_val_sq},{last_onpolicy_sq},{last_overest}\n",
                    last_report.critic_loss,
                    last_report.model_fwd,
                    last_report.model_rew,
                    last_report.model_val,
                    last_report.actor_loss,
                    last_report.q_mean,
                    last_report.target_q_mean,
                ));
            }
        }
        Ok(())
    })();

    if let Err(e) = result {
        // abort with a state dump beside the partial metrics
        fs::write(&metrics_path, &metrics)?;
        let dump = serde_json::json!({
            "error": e.to_string(),
            "env_step": trainer.env_step,
            "last_report": last_report,
            "episode_returns": trainer.episode_returns,
        });
        fs::write(run_dir.join("abort_dump.json"), serde_json::to_string_pretty(&dump)?)?;
        return Err(e);
    }

    fs::write(&metrics_path, &metrics)?;
    let checkpoint_stem = run_dir.join("checkpoint");
    save_checkpoint(&checkpoint_stem, &trainer.params, &cfg.net)?;

    let returns = &trainer.episode_returns;
    let final_return = if returns.is_empty() {
        None
    } else {
        let tail = &returns[returns.len().saturating_sub(FINAL_RETURN_WINDOW)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    };
    let mean_return = if returns.is_empty() {
        None
    } else {
        Some(returns.iter().sum::<f64>() / returns.len() as f64)
    };
    let regret_vs_own_best = if returns.is_empty() {
        None
    } else {
        let best = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(average_regret(returns, best)?)
    };

    let summary = RunSummary {
        config: cfg.clone(),
        episode_returns: returns.clone(),
        final_return,
        mean_return,
        regret_vs_own_best,
        probe_history,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let summary_path = run_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    // keep file handles flushed before returning paths to callers
    std::io::stdout().flush().ok();

    Ok(RunArtifacts { summary, metrics_path, summary_path, checkpoint_stem })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::critic_value;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            env_id: "pendulum_swingup".to_string(),
            batch_size: 16,
            steps_total: 40,
            init_random_steps: 8,
            utd: 2,
            replay_capacity: 1000,
            probe_interval: 20,
            log_interval: 10,
            mc_episodes: 0,
            net: NetConfig {
                obs_dim: 3,
                act_dim: 1,
                hidden: 16,
                latent: 8,
                group_size: 2,
                bins: 11,
                vmax: 10.0,
            },
            ..TrainConfig::default()
        }
    }

    fn real_transition(i: usize) -> Transition {
        Transition {
            state: vec![0.1 * i as f64, 0.2, 0.3],
            action: vec![0.5],
            reward: 0.1,
            next_state: vec![0.2, 0.1 * i as f64, 0.4],
            terminal: false,
            source: Source::Real,
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(tiny_cfg().validate().is_ok());
        assert!(TrainConfig { alpha: 1.5, ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { utd: 0, ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { gamma: 1.0, ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { rl_lr: 0.0, ..tiny_cfg() }.validate().is_err());
        assert!(TrainConfig { batch_size: 2000, ..tiny_cfg() }.validate().is_err());
    }

    #[test]
    fn replay_rejects_model_data_and_wraps() {
        let mut buf = ReplayBuffer::new(4);
        let mut model_t = real_transition(0);
        model_t.source = Source::Model;
        assert!(matches!(buf.push(model_t), Err(TrainerError::ModelTransitionInReplay)));

        for i in 0..6 {
            buf.push(real_transition(i)).unwrap();
        }
        assert_eq!(buf.len(), 4);
        // oldest two entries were overwritten in ring order
        let firsts: Vec<f64> = (0..4).map(|i| buf.get(i).state[0]).collect();
        let expected: Vec<f64> = [4, 5, 2, 3].iter().map(|&i| 0.1 * i as f64).collect();
        assert_eq!(firsts, expected);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let idx = buf.sample_indices(100, &mut rng);
        assert!(idx.iter().all(|&i| i < 4));
    }

    fn filled_trainer(cfg: TrainConfig, n: usize) -> Trainer {
        let mut t = Trainer::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..n {
            let state = t.env.state();
            let obs = t.env.observe();
            let action = vec![rng.gen_range(-1.0..1.0)];
            let out = t.env.step(&action);
            let tr = Transition {
                state: obs,
                action,
                reward: out.reward,
                next_state: out.obs,
                terminal: out.terminal,
                source: Source::Real,
            };
            t.val_buffer.push(ValEntry { state, transition: tr.clone() });
            t.replay.push(tr).unwrap();
        }
        t
    }

    #[test]
    fn mix_batch_alpha_zero_is_identity() {
        let cfg = tiny_cfg();
        let t = filled_trainer(cfg.clone(), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = t.replay.sample_indices(16, &mut rng);
        let batch = t.replay.batch(&idx, &cfg.net);
        let mixed =
            mix_batch(&batch, &t.params, &cfg.net, 0.0, ActionSource::Policy, &mut rng).unwrap();
        assert_eq!(batch.obs.data, mixed.obs.data);
        assert_eq!(batch.actions.data, mixed.actions.data);
        assert_eq!(batch.rewards.data, mixed.rewards.data);
        assert_eq!(batch.next_obs.data, mixed.next_obs.data);
        assert_eq!(batch.model_next_latent.data, mixed.model_next_latent.data);
        assert_eq!(batch.terminals, mixed.terminals);
        assert_eq!(batch.sources, mixed.sources);
    }

    #[test]
    fn mix_batch_alpha_one_replaces_every_row_with_policy_actions() {
        let cfg = tiny_cfg();
        let t = filled_trainer(cfg.clone(), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let idx = t.replay.sample_indices(8, &mut rng);
        let batch = t.replay.batch(&idx, &cfg.net);
        let mixed =
            mix_batch(&batch, &t.params, &cfg.net, 1.0, ActionSource::Policy, &mut rng).unwrap();
        assert!(mixed.sources.iter().all(|s| *s == Source::Model));
        assert!(mixed.terminals.iter().all(|t| !t));
        // every action equals the policy's action at the (unchanged) observation
        for r in 0..mixed.len() {
            let expected =
                crate::diagnostics::policy_action(&t.params, &cfg.net, mixed.obs.row(r)).unwrap();
            assert_eq!(mixed.actions.row(r), &expected[..]);
        }
        assert_eq!(batch.obs.data, mixed.obs.data);
    }

    #[test]
    fn mix_batch_replacement_count_is_round_ties_even() {
        let cfg = TrainConfig {
            batch_size: 512,
            replay_capacity: 2000,
            ..tiny_cfg()
        };
        let t = filled_trainer(cfg.clone(), 600);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = t.replay.sample_indices(512, &mut rng);
        let batch = t.replay.batch(&idx, &cfg.net);
        let mixed =
            mix_batch(&batch, &t.params, &cfg.net, 0.05, ActionSource::Policy, &mut rng).unwrap();
        let model_rows = mixed.sources.iter().filter(|s| **s == Source::Model).count();
        assert_eq!(model_rows, 26); // round(0.05 * 512) = round(25.6)
    }

    #[test]
    fn mix_batch_random_actions_are_not_policy_actions() {
        let cfg = tiny_cfg();
        let t = filled_trainer(cfg.clone(), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let idx = t.replay.sample_indices(8, &mut rng);
        let batch = t.replay.batch(&idx, &cfg.net);
        let mixed =
            mix_batch(&batch, &t.params, &cfg.net, 1.0, ActionSource::UniformRandom, &mut rng)
                .unwrap();
        let mut differs = 0;
        for r in 0..mixed.len() {
            assert!(mixed.actions.row(r).iter().all(|a| a.abs() <= 1.0));
            let pi = crate::diagnostics::policy_action(&t.params, &cfg.net, mixed.obs.row(r)).unwrap();
            if mixed.actions.row(r) != &pi[..] {
                differs += 1;
            }
        }
        assert!(differs >= 7);
    }

    #[test]
    fn update_round_respects_utd_schedule() {
        let cfg = TrainConfig { utd: 4, ..tiny_cfg() };
        let mut t = filled_trainer(cfg, 64);
        let outcome = t.update_round().unwrap().expect("enough data");
        assert_eq!(outcome.reports.len(), 4);
        assert_eq!(outcome.critic_batch_indices.len(), 4);
        // one model+encoder update, utd critic/actor updates
        assert_eq!(t.opts.model.step, 1);
        assert_eq!(t.opts.critic_1.step, 4);
        assert_eq!(t.opts.critic_2.step, 4);
        assert_eq!(t.opts.actor.step, 4);
        // encoder: 1 from the model loss + utd from critic losses
        assert_eq!(t.opts.encoder.step, 5);
        // inner-loop batches are independently sampled
        assert_ne!(outcome.critic_batch_indices[0], outcome.critic_batch_indices[1]);
        assert_ne!(outcome.model_batch_indices, outcome.critic_batch_indices[0]);
    }

    #[test]
    fn update_round_skipped_when_replay_short() {
        let mut t = filled_trainer(tiny_cfg(), 4);
        assert!(t.update_round().unwrap().is_none());
        assert_eq!(t.opts.model.step, 0);
    }

    #[test]
    fn reset_reinitializes_rl_stack_and_keeps_encoder() {
        let cfg = TrainConfig { reset_interval: 10, ..tiny_cfg() };
        let mut t = filled_trainer(cfg.clone(), 64);
        for _ in 0..3 {
            t.update_round().unwrap().unwrap();
        }
        let enc_before: Vec<(String, Vec<f64>)> =
            t.params.encoder.iter().map(|(n, m)| (n.clone(), m.data.clone())).collect();
        let model_before: Vec<(String, Vec<f64>)> =
            t.params.model.iter().map(|(n, m)| (n.clone(), m.data.clone())).collect();

        t.env_step = 20;
        assert!(t.maybe_reset());

        // post-reset zero-init: Q is exactly 0 everywhere
        let z = Mat::from_vec(1, 8, vec![0.5, 0.5, 1.0, 0.0, 0.2, 0.8, 0.6, 0.4]);
        let a = Mat::from_vec(1, 1, vec![0.3]);
        for (store, prefix) in [(&t.params.critic_1, "q1"), (&t.params.critic_2, "q2")] {
            let q = critic_value(store, &t.cfg.net, prefix, &z, &a).unwrap()[0];
            assert!(q.abs() < 1e-12);
        }
        assert_eq!(t.opts.critic_1.step, 0);
        assert_eq!(t.opts.actor.step, 0);
        assert!(t.opts.model.step > 0);

        let enc_after: Vec<(String, Vec<f64>)> =
            t.params.encoder.iter().map(|(n, m)| (n.clone(), m.data.clone())).collect();
        let model_after: Vec<(String, Vec<f64>)> =
            t.params.model.iter().map(|(n, m)| (n.clone(), m.data.clone())).collect();
        assert_eq!(enc_before, enc_after);
        assert_eq!(model_before, model_after);

        // interval 0 never fires
        let mut t2 = filled_trainer(TrainConfig { reset_interval: 0, ..tiny_cfg() }, 20);
        t2.env_step = 1000;
        assert!(!t2.maybe_reset());
    }

    #[test]
    fn train_zero_steps_produces_valid_empty_artifacts() {
        let dir = std::env::temp_dir().join("madtd_test_zero_steps");
        let _ = fs::remove_dir_all(&dir);
        let cfg = TrainConfig { steps_total: 0, ..tiny_cfg() };
        let artifacts = train(&cfg, &dir).unwrap();
        let metrics = fs::read_to_string(&artifacts.metrics_path).unwrap();
        assert_eq!(metrics.trim(), METRICS_HEADER);
        assert!(artifacts.summary.episode_returns.is_empty());
        assert!(artifacts.summary.final_return.is_none());
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(&artifacts.summary_path).unwrap()).unwrap();
        assert_eq!(summary.config.steps_total, 0);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn train_is_deterministic_per_seed() {
        let base = std::env::temp_dir().join("madtd_test_determinism");
        let _ = fs::remove_dir_all(&base);
        let cfg = TrainConfig { steps_total: 60, utd: 1, ..tiny_cfg() };
        let a = train(&cfg, &base.join("a")).unwrap();
        let b = train(&cfg, &base.join("b")).unwrap();
        let ma = fs::read(&a.metrics_path).unwrap();
        let mb = fs::read(&b.metrics_path).unwrap();
        assert_eq!(ma, mb, "same seed must give byte-identical metrics");

        let cfg2 = TrainConfig { seed: 1, ..cfg };
        let c = train(&cfg2, &base.join("c")).unwrap();
        let mc = fs::read(&c.metrics_path).unwrap();
        assert_ne!(ma, mc, "different seed should change the trajectory");
        let _ = fs::remove_dir_all(&base);
    }

    #[test]
    fn train_aborts_with_dump_on_non_finite_loss() {
        let dir = std::env::temp_dir().join("madtd_test_nan_abort");
        let _ = fs::remove_dir_all(&dir);
        let cfg = TrainConfig { steps_total: 40, init_random_steps: 8, ..tiny_cfg() };
        let mut t = Trainer::new(cfg).unwrap();
        for _ in 0..20 {
            t.env_interact().unwrap();
        }
        // poison one model weight so the next model loss is non-finite
        let mut w = t.params.model.get("mdl.w0").unwrap().clone();
        *w.at_mut(0, 0) = f64::NAN;
        t.params.model.set("mdl.w0", w).unwrap();
        let err = t.update_round().unwrap_err();
        assert!(matches!(err, TrainerError::NonFinite { .. } | TrainerError::Kernel(_)));
        let _ = fs::remove_dir_all(&dir);
    }
}
