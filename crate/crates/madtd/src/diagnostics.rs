//! Measurement instruments: train/validation/on-policy critic-loss probe,
//! Q-overestimation against truncated Monte-Carlo returns, per-episode
//! average regret, and an adversarial action-perturbation smoothness probe.
//!
//! All probe losses go through the same `losses` code path as training, so a
//! probe number is always comparable to the corresponding training metric.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{clip_action, Env, EnvError, EnvState, Source, Transition};
use crate::losses::{critic_loss, td_target, Batch, LossError};
use crate::nets::{
    actor, critic_probs, critic_value, decode_on_tape, encode, AgentParams, NetConfig, NetsError,
};
use crate::numkernel::{KernelError, Mat, Tape};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("probe input is empty: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// A held-out transition plus the full simulator state it started from, so
/// the environment can be reset there for the on-policy probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValEntry {
    pub state: EnvState,
    pub transition: Transition,
}

/// Probe losses are at most this many validation states per call.
pub const MAX_PROBE_STATES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub env_step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub onpolicy_loss: f64,
    /// Scalar squared TD errors for the same three batches; unlike the
    /// cross-entropy losses these carry no target-entropy floor.
    pub train_sq: f64,
    pub val_sq: f64,
    pub onpolicy_sq: f64,
    pub q_mean: f64,
    pub mc_return_mean: f64,
    pub overestimation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub returns: Vec<f64>,
    pub r_star: f64,
    pub regret: f64,
}

/// Deterministic greedy action at a raw observation: actor(encode(obs)).
pub fn policy_action(
    params: &AgentParams,
    cfg: &NetConfig,
    obs: &[f64],
) -> Result<Vec<f64>, DiagnosticsError> {
    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let pi = tape.params(&params.actor, false);
    let x = tape.constant(Mat::from_rows(&[obs.to_vec()]));
    let z = encode(&mut tape, &enc, cfg, x)?;
    let a = actor(&mut tape, &pi, z)?;
    Ok(tape.value(a).row(0).to_vec())
}

fn batch_from_transitions(transitions: &[&Transition], cfg: &NetConfig) -> Batch {
    let b = transitions.len();
    Batch {
        obs: Mat::from_rows(&transitions.iter().map(|t| t.state.clone()).collect::<Vec<_>>()),
        actions: Mat::from_rows(&transitions.iter().map(|t| t.action.clone()).collect::<Vec<_>>()),
        rewards: Mat::from_vec(b, 1, transitions.iter().map(|t| t.reward).collect()),
        next_obs: Mat::from_rows(
            &transitions.iter().map(|t| t.next_state.clone()).collect::<Vec<_>>(),
        ),
        model_next_latent: Mat::zeros(b, cfg.latent),
        terminals: transitions.iter().map(|t| t.terminal).collect(),
        sources: vec![Source::Real; b],
    }
}

/// TD-target + critic cross-entropy on a batch, through the training code
/// path, without touching any parameters. Returns (loss, q_mean, sq_err)
/// where sq_err is the mean over batch and both heads of the squared scalar
/// TD error (decoded prediction minus scalar target) — the cross-entropy
/// number sits on the HL-Gauss target-entropy floor, while the squared error
/// is floor-free and directly comparable across bin geometries.
pub fn critic_loss_on(
    params: &AgentParams,
    cfg: &NetConfig,
    gamma: f64,
    batch: &Batch,
) -> Result<(f64, f64, f64), DiagnosticsError> {
    let targets = td_target(params, cfg, batch, gamma)?;
    let out = critic_loss(params, cfg, batch, &targets)?;

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let x = tape.constant(batch.obs.clone());
    let z_node = encode(&mut tape, &enc, cfg, x)?;
    let z = tape.value(z_node);
    let mut sq = 0.0;
    for (store, prefix) in [(&params.critic_1, "q1"), (&params.critic_2, "q2")] {
        let q = critic_value(store, cfg, prefix, &z, &batch.actions)?;
        for (qi, yi) in q.iter().zip(&targets.scalars) {
            sq += (qi - yi) * (qi - yi);
        }
    }
    sq /= (2 * targets.scalars.len()) as f64;

    Ok((out.loss, out.q_mean, sq))
}

/// The generalization probe: critic loss on a fresh replay batch (train), on
/// held-out stored transitions (validation), and on ground-truth transitions
/// re-simulated from the same validation states under the current policy
/// (on-policy). `mc_episodes` fresh rollouts feed the overestimation fields.
#[allow(clippy::too_many_arguments)]
pub fn onpolicy_probe(
    params: &AgentParams,
    cfg: &NetConfig,
    gamma: f64,
    env_step: u64,
    val: &[ValEntry],
    env: &mut dyn Env,
    train_batch: &Batch,
    mc_episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ProbeReport, DiagnosticsError> {
    if val.is_empty() {
        return Err(DiagnosticsError::Empty("validation buffer"));
    }
    // Down-sample evenly across the buffer's full history: the validation
    // set must retain transitions collected under old behavior policies, or
    // the stored actions all match the current policy and the on-policy gap
    // degenerates to zero by construction.
    let picked: Vec<&ValEntry> = if val.len() <= MAX_PROBE_STATES {
        val.iter().collect()
    } else {
        (0..MAX_PROBE_STATES)
            .map(|i| &val[i * val.len() / MAX_PROBE_STATES])
            .collect()
    };
    let val = &picked;

    let (train_loss, _, train_sq) = critic_loss_on(params, cfg, gamma, train_batch)?;

    let stored: Vec<&Transition> = val.iter().map(|e| &e.transition).collect();
    let val_batch = batch_from_transitions(&stored, cfg);
    let (val_loss, q_mean, val_sq) = critic_loss_on(params, cfg, gamma, &val_batch)?;

    let mut onpolicy = Vec::with_capacity(val.len());
    for entry in val {
        env.reset_to(&entry.state)?;
        let obs = env.observe();
        let action = clip_action(&policy_action(params, cfg, &obs)?, env.act_dim());
        let out = env.step(&action);
        onpolicy.push(Transition {
            state: obs,
            action,
            reward: out.reward,
            next_state: out.obs,
            terminal: out.terminal,
            source: Source::Real,
        });
    }
    let onpolicy_refs: Vec<&Transition> = onpolicy.iter().collect();
    let onpolicy_batch = batch_from_transitions(&onpolicy_refs, cfg);
    let (onpolicy_loss, _, onpolicy_sq) = critic_loss_on(params, cfg, gamma, &onpolicy_batch)?;

    let (q0_mean, mc_return_mean) = if mc_episodes > 0 {
        q_overestimation(params, cfg, env, gamma, mc_episodes, rng)?
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(ProbeReport {
        env_step,
        train_loss,
        val_loss,
        onpolicy_loss,
        train_sq,
        val_sq,
        onpolicy_sq,
        q_mean,
        mc_return_mean,
        overestimation: q0_mean - mc_return_mean,
    })
}

/// Roll `n_episodes` greedy episodes; compare the decoded min-double-Q at the
/// start states against the empirical discounted return truncated at the
/// horizon. Returns (q_mean, mc_return_mean); overestimation is their
/// difference.
pub fn q_overestimation(
    params: &AgentParams,
    cfg: &NetConfig,
    env: &mut dyn Env,
    gamma: f64,
    n_episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), DiagnosticsError> {
    if n_episodes == 0 {
        return Err(DiagnosticsError::Empty("episode count"));
    }
    let mut q_sum = 0.0;
    let mut ret_sum = 0.0;
    for _ in 0..n_episodes {
        env.reset(rng);
        let obs0 = env.observe();

        let mut tape = Tape::new();
        let enc = tape.params(&params.encoder, false);
        let pi = tape.params(&params.actor, false);
        let x = tape.constant(Mat::from_rows(&[obs0.clone()]));
        let zn = encode(&mut tape, &enc, cfg, x)?;
        let an = actor(&mut tape, &pi, zn)?;
        let z0 = tape.value(zn).clone();
        let a0 = tape.value(an).clone();
        let q1 = critic_value(&params.critic_1, cfg, "q1", &z0, &a0)?[0];
        let q2 = critic_value(&params.critic_2, cfg, "q2", &z0, &a0)?[0];
        q_sum += q1.min(q2);

        let mut ret = 0.0;
        let mut disc = 1.0;
        let mut obs = obs0;
        for _ in 0..env.horizon() {
            let action = clip_action(&policy_action(params, cfg, &obs)?, env.act_dim());
            let out = env.step(&action);
            ret += disc * out.reward;
            disc *= gamma;
            obs = out.obs;
            if out.terminal {
                break;
            }
        }
        ret_sum += ret;
    }
    let n = n_episodes as f64;
    Ok((q_sum / n, ret_sum / n))
}

/// Mean per-episode shortfall versus a reference return:
/// (1/T) * sum_t (r_star - R_t).
pub fn average_regret(returns: &[f64], r_star: f64) -> Result<f64, DiagnosticsError> {
    if returns.is_empty() {
        return Err(DiagnosticsError::Empty("return series"));
    }
    Ok(returns.iter().map(|r| r_star - r).sum::<f64>() / returns.len() as f64)
}

pub fn regret_report(returns: &[f64], r_star: f64) -> Result<RegretReport, DiagnosticsError> {
    Ok(RegretReport {
        returns: returns.to_vec(),
        r_star,
        regret: average_regret(returns, r_star)?,
    })
}

pub const PGD_EPSILON: f64 = 0.1;
pub const PGD_STEPS: usize = 10;
pub const PGD_STEP_SIZE: f64 = 0.01;

/// Decoded Q of the first critic head at a batched latent/action pair, plus
/// its gradient with respect to the actions.
fn q1_and_action_grad(
    params: &AgentParams,
    cfg: &NetConfig,
    z: &Mat,
    a: &Mat,
) -> Result<(Vec<f64>, Mat), DiagnosticsError> {
    let mut tape = Tape::new();
    let c1 = tape.params(&params.critic_1, false);
    let zn = tape.constant(z.clone());
    let an = tape.leaf("adv.a", a.clone());
    let probs = critic_probs(&mut tape, &c1, cfg, "q1", zn, an)?;
    let q = decode_on_tape(&mut tape, probs, &cfg.bin_geometry())?;
    let qmat = tape.value(q).clone();
    let qv: Vec<f64> = (0..qmat.rows).map(|r| qmat.at(r, 0)).collect();
    let s = tape.sum(q);
    let grads = tape.backward(s)?;
    let g = grads.get("adv.a").expect("action leaf gradient").clone();
    Ok((qv, g))
}

/// Smoothness probe: from a = pi(z), run sign-gradient ascent on the decoded
/// first-head Q, projected onto the infinity-ball of radius `epsilon` around
/// pi(z) intersected with [-1,1]^d; report the mean over states of
/// |Q(z, a_adv) - Q(z, pi(z))|, where a_adv is the best iterate seen.
pub fn adversarial_probe(
    params: &AgentParams,
    cfg: &NetConfig,
    states: &[Vec<f64>],
    epsilon: f64,
    steps: usize,
    step_size: f64,
) -> Result<f64, DiagnosticsError> {
    if states.is_empty() {
        return Err(DiagnosticsError::Empty("state list"));
    }
    let n = states.len();

    let mut tape = Tape::new();
    let enc = tape.params(&params.encoder, false);
    let pi = tape.params(&params.actor, false);
    let x = tape.constant(Mat::from_rows(states));
    let zn = encode(&mut tape, &enc, cfg, x)?;
    let an = actor(&mut tape, &pi, zn)?;
    let z = tape.value(zn).clone();
    let a0 = tape.value(an).clone();

    let (q_base, mut grad) = q1_and_action_grad(params, cfg, &z, &a0)?;
    let mut best = q_base.clone();
    let mut a = a0.clone();
    for _ in 0..steps {
        for r in 0..n {
            for c in 0..cfg.act_dim {
                let stepped = a.at(r, c) + step_size * grad.at(r, c).signum();
                let lo = (a0.at(r, c) - epsilon).max(-1.0);
                let hi = (a0.at(r, c) + epsilon).min(1.0);
                *a.at_mut(r, c) = stepped.clamp(lo, hi);
            }
        }
        let (q, g) = q1_and_action_grad(params, cfg, &z, &a)?;
        grad = g;
        for r in 0..n {
            if q[r] > best[r] {
                best[r] = q[r];
            }
        }
    }
    Ok((0..n).map(|r| (best[r] - q_base[r]).abs()).sum::<f64>() / n as f64)
}
