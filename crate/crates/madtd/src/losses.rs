//! Training objectives: categorical clipped-double-Q TD loss, the world-model
//! loss (reward + forward + value-consistency terms), and the deterministic
//! actor loss, each with its gradient-routing rules baked in.

use serde::Serialize;
use thiserror::Error;

use crate::envs::Source;
use crate::nets::{
    actor as actor_forward, critic_logits, critic_probs, decode_on_tape, encode, hlgauss_decode,
    hlgauss_encode, model_step, AgentParams, NetConfig, NetsError,
};
use crate::numkernel::{Gradients, KernelError, Mat, Tape};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error("batch invariant violated: {0}")]
    BadBatch(String),
}

/// One training minibatch. Model-tagged rows keep the real observation but
/// carry a model-generated action/reward and the predicted next latent; their
/// `next_obs` row is ignored.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Mat,
    pub actions: Mat,
    pub rewards: Mat,
    pub next_obs: Mat,
    pub model_next_latent: Mat,
    pub terminals: Vec<bool>,
    pub sources: Vec<Source>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows == 0
    }

    pub fn validate(&self, cfg: &NetConfig) -> Result<(), LossError> {
        let b = self.len();
        let shapes = [
            ("obs", &self.obs, cfg.obs_dim),
            ("actions", &self.actions, cfg.act_dim),
            ("rewards", &self.rewards, 1),
            ("next_obs", &self.next_obs, cfg.obs_dim),
            ("model_next_latent", &self.model_next_latent, cfg.latent),
        ];
        for (what, mat, cols) in shapes {
            if mat.rows != b || mat.cols != cols {
                return Err(LossError::BadBatch(format!(
                    "{what} is {}x{}, want {b}x{cols}",
                    mat.rows, mat.cols
                )));
            }
            if !mat.all_finite() {
                return Err(LossError::BadBatch(format!("{what} has non-finite entries")));
            }
        }
        if self.terminals.len() != b || self.sources.len() != b {
            return Err(LossError::BadBatch("tag length mismatch".to_string()));
        }
        if self.actions.data.iter().any(|a| a.abs() > 1.0 + 1e-12) {
            return Err(LossError::BadBatch("action out of bounds".to_string()));
        }
        Ok(())
    }
}

/// Per-step metric surface written to the training CSV.
#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub model_rew: f64,
    pub model_fwd: f64,
    pub model_val: f64,
    pub actor_loss: f64,
    pub q_mean: f64,
    pub target_q_mean: f64,
}

/// TD targets: categorical distributions plus the scalar values they encode.
#[derive(Debug, Clone)]
pub struct TdTargets {
    pub probs: Mat,
    pub scalars: Vec<f64>,
}

/// Bootstrapped clipped-double-Q targets, computed entirely without
/// gradients: y = r + gamma * min_h Q_target_h(z', pi(z')), with the
/// bootstrap dropped on horizon-terminal rows; re-encoded as HL-Gauss bins.
pub fn td_target(
    params: &AgentParams,
    cfg: &NetConfig,
    batch: &Batch,
    gamma: f64,
) -> Result<TdTargets, LossError> {
    batch.validate(cfg)?;
    let b = batch.len();
    let geom = cfg.bin_geometry();

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let tc1 = tape.params(&params.target_critic_1, false);
    let tc2 = tape.params(&params.target_critic_2, false);
    let actor_nodes = tape.params(&params.actor, false);

    let next_obs = tape.constant(batch.next_obs.clone());
    let z_enc = encode(&mut tape, &enc, cfg, next_obs)?;
    let mut z_next = tape.value(z_enc).clone();
    for (r, src) in batch.sources.iter().enumerate() {
        if *src == Source::Model {
            let row = batch.model_next_latent.row(r).to_vec();
            z_next.data[r * cfg.latent..(r + 1) * cfg.latent].copy_from_slice(&row);
        }
    }
    let z_next = tape.constant(z_next);
    let a_next = actor_forward(&mut tape, &actor_nodes, z_next)?;
    let p1 = critic_probs(&mut tape, &tc1, cfg, "q1", z_next, a_next)?;
    let p2 = critic_probs(&mut tape, &tc2, cfg, "q2", z_next, a_next)?;
    let (p1, p2) = (tape.value(p1), tape.value(p2));

    let mut scalars = Vec::with_capacity(b);
    let mut probs = Mat::zeros(b, cfg.bins);
    for r in 0..b {
        let q1 = hlgauss_decode(p1.row(r), &geom);
        let q2 = hlgauss_decode(p2.row(r), &geom);
        let bootstrap = if batch.terminals[r] { 0.0 } else { gamma * q1.min(q2) };
        let y = batch.rewards.at(r, 0) + bootstrap;
        scalars.push(y);
        let enc = hlgauss_encode(y, &geom)?;
        probs.data[r * cfg.bins..(r + 1) * cfg.bins].copy_from_slice(&enc);
    }
    Ok(TdTargets { probs, scalars })
}

pub struct CriticLossOut {
    pub loss: f64,
    pub q_mean: f64,
    pub grads: Gradients,
}

/// Mean cross-entropy of both critic heads against the TD targets. Gradients
/// always reach the critic heads; they reach the encoder only through
/// real-tagged rows.
pub fn critic_loss(
    params: &AgentParams,
    cfg: &NetConfig,
    batch: &Batch,
    targets: &TdTargets,
) -> Result<CriticLossOut, LossError> {
    batch.validate(cfg)?;
    let b = batch.len();
    if targets.probs.rows != b || targets.probs.cols != cfg.bins {
        return Err(LossError::BadBatch("target shape mismatch".to_string()));
    }
    let geom = cfg.bin_geometry();

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, true);
    let c1 = tape.params(&params.critic_1, true);
    let c2 = tape.params(&params.critic_2, true);

    let obs = tape.constant(batch.obs.clone());
    let z = encode(&mut tape, &enc, cfg, obs)?;
    let z_sg = tape.stop_grad(z);
    // real rows pass the gradient-carrying latent, model rows the detached one
    let mut real_mask = Mat::zeros(b, cfg.latent);
    for (r, src) in batch.sources.iter().enumerate() {
        if *src == Source::Real {
            real_mask.row_mut(r).fill(1.0);
        }
    }
    let model_mask = tape.constant(real_mask.map(|v| 1.0 - v));
    let real_mask = tape.constant(real_mask);
    let zr = tape.mul(real_mask, z)?;
    let zm = tape.mul(model_mask, z_sg)?;
    let z_used = tape.add(zr, zm)?;

    let actions = tape.constant(batch.actions.clone());
    let target = tape.constant(targets.probs.clone());
    let mut ce_sum = None;
    let mut q_mean = 0.0;
    for (nodes, prefix) in [(&c1, "q1"), (&c2, "q2")] {
        let logits = critic_logits(&mut tape, nodes, prefix, z_used, actions)?;
        let logp = tape.log_group_softmax(logits, cfg.bins)?;
        let prod = tape.mul(target, logp)?;
        let s = tape.sum(prod);
        ce_sum = Some(match ce_sum {
            None => s,
            Some(prev) => tape.add(prev, s)?,
        });
        let probs = tape.group_softmax(logits, cfg.bins)?;
        let probs = tape.value(probs);
        for r in 0..b {
            q_mean += hlgauss_decode(probs.row(r), &geom);
        }
    }
    let loss = tape.scale(ce_sum.expect("two heads"), -1.0 / (2.0 * b as f64));
    let grads = tape.backward(loss)?;
    Ok(CriticLossOut { loss: tape.scalar_value(loss), q_mean: q_mean / (2.0 * b as f64), grads })
}

pub struct ModelLossOut {
    pub rew: f64,
    pub fwd: f64,
    pub val: f64,
    pub grads: Gradients,
}

impl ModelLossOut {
    pub fn total(&self) -> f64 {
        self.rew + self.fwd + self.val
    }
}

/// World-model loss on real transitions only: reward MSE, latent forward
/// cross-entropy against the detached encoder target, and value-consistency
/// cross-entropy whose gradients reach the model parameters alone.
pub fn model_loss(
    params: &AgentParams,
    cfg: &NetConfig,
    batch: &Batch,
) -> Result<ModelLossOut, LossError> {
    batch.validate(cfg)?;
    if batch.sources.iter().any(|s| *s == Source::Model) {
        return Err(LossError::BadBatch(
            "model loss accepts real transitions only".to_string(),
        ));
    }
    let b = batch.len();

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, true);
    let mdl = tape.params(&params.model, true);
    let c1 = tape.params(&params.critic_1, false);
    let actor_nodes = tape.params(&params.actor, false);

    let obs = tape.constant(batch.obs.clone());
    let actions = tape.constant(batch.actions.clone());
    let z = encode(&mut tape, &enc, cfg, obs)?;
    let next_obs = tape.constant(batch.next_obs.clone());
    let z_next_enc = encode(&mut tape, &enc, cfg, next_obs)?;
    let z_next_tgt = tape.stop_grad(z_next_enc);

    // (i) reward MSE
    let out = model_step(&mut tape, &mdl, cfg, z, actions)?;
    let rewards = tape.constant(batch.rewards.clone());
    let diff = tape.sub(out.reward, rewards)?;
    let sq = tape.mul(diff, diff)?;
    let sum_sq = tape.sum(sq);
    let l_rew = tape.scale(sum_sq, 1.0 / b as f64);

    // (ii) latent forward cross-entropy against the detached target
    let logp_z = tape.log_group_softmax(out.z_logits, cfg.group_size)?;
    let prod = tape.mul(z_next_tgt, logp_z)?;
    let s = tape.sum(prod);
    let l_fwd = tape.scale(s, -1.0 / b as f64);

    // (iii) value consistency, shaped to push gradients into the model only:
    // a second model forward from the detached latent, online critic frozen
    let z_detached = tape.stop_grad(z);
    let out2 = model_step(&mut tape, &mdl, cfg, z_detached, actions)?;
    let a_next = actor_forward(&mut tape, &actor_nodes, z_next_tgt)?;
    let target_probs = critic_probs(&mut tape, &c1, cfg, "q1", z_next_tgt, a_next)?;
    let target_probs = tape.stop_grad(target_probs);
    let pred_logits = critic_logits(&mut tape, &c1, "q1", out2.z_next, a_next)?;
    let pred_logp = tape.log_group_softmax(pred_logits, cfg.bins)?;
    let prod = tape.mul(target_probs, pred_logp)?;
    let s = tape.sum(prod);
    let l_val = tape.scale(s, -1.0 / b as f64);

    let partial = tape.add(l_rew, l_fwd)?;
    let total = tape.add(partial, l_val)?;
    let grads = tape.backward(total)?;
    Ok(ModelLossOut {
        rew: tape.scalar_value(l_rew),
        fwd: tape.scalar_value(l_fwd),
        val: tape.scalar_value(l_val),
        grads,
    })
}

pub struct ActorLossOut {
    pub loss: f64,
    pub grads: Gradients,
}

/// Deterministic policy-gradient objective: minimize the negated head-1 value
/// at the policy's action; only actor parameters receive gradients.
pub fn actor_loss(
    params: &AgentParams,
    cfg: &NetConfig,
    batch: &Batch,
) -> Result<ActorLossOut, LossError> {
    batch.validate(cfg)?;

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let actor_nodes = tape.params(&params.actor, true);
    let c1 = tape.params(&params.critic_1, false);

    let obs = tape.constant(batch.obs.clone());
    let z = encode(&mut tape, &enc, cfg, obs)?;
    let z = tape.stop_grad(z);
    let a = actor_forward(&mut tape, &actor_nodes, z)?;
    let probs = critic_probs(&mut tape, &c1, cfg, "q1", z, a)?;
    let q = decode_on_tape(&mut tape, probs, &cfg.bin_geometry())?;
    let q_mean = tape.mean(q);
    let loss = tape.scale(q_mean, -1.0);
    let grads = tape.backward(loss)?;
    Ok(ActorLossOut { loss: tape.scalar_value(loss), grads })
}
