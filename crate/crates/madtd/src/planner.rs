//! One-step model-predictive action refinement: a CEM loop over single
//! actions scored by predicted reward plus the discounted clipped-double-Q of
//! the model's next latent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nets::{
    actor, critic_probs, decode_on_tape, model_step, AgentParams, NetConfig,
};
use crate::numkernel::{KernelError, Mat, Tape};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn default_num_samples() -> usize {
    512
}
fn default_iterations() -> usize {
    6
}
fn default_top_k() -> usize {
    64
}
fn default_temperature() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub enabled: bool,
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            enabled: false,
            num_samples: default_num_samples(),
            iterations: default_iterations(),
            top_k: default_top_k(),
            temperature: default_temperature(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.iterations == 0 {
            return Err(PlannerError::InvalidConfig("iterations must be >= 1".to_string()));
        }
        if self.top_k == 0 || self.top_k > self.num_samples {
            return Err(PlannerError::InvalidConfig(format!(
                "top_k {} must be in 1..={}",
                self.top_k, self.num_samples
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(PlannerError::InvalidConfig("temperature must be positive".to_string()));
        }
        Ok(())
    }
}

pub const INITIAL_STD: f64 = 0.5;
const STD_FLOOR: f64 = 1e-6;

/// Generic CEM refinement over a batched scoring function. Samples a Gaussian
/// clipped to [-1,1]^d, refits mean/std to the softmax-weighted top_k, and
/// stops early once every std collapses below 1e-6.
pub fn cem_optimize(
    score_fn: &mut dyn FnMut(&Mat) -> Result<Vec<f64>, PlannerError>,
    init_mean: &[f64],
    cfg: &MpcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, PlannerError> {
    cfg.validate()?;
    let d = init_mean.len();
    let mut mean = init_mean.to_vec();
    let mut std = vec![INITIAL_STD; d];

    for _ in 0..cfg.iterations {
        if std.iter().all(|s| *s < STD_FLOOR) {
            break;
        }
        let mut samples = Mat::zeros(cfg.num_samples, d);
        for r in 0..cfg.num_samples {
            for c in 0..d {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let gauss = (-2.0 * u1.ln()).sqrt() * u2.cos();
                *samples.at_mut(r, c) = (mean[c] + std[c] * gauss).clamp(-1.0, 1.0);
            }
        }
        let scores = score_fn(&samples)?;
        assert_eq!(scores.len(), cfg.num_samples);

        let mut order: Vec<usize> = (0..cfg.num_samples).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
        let elites = &order[..cfg.top_k];
        let best = scores[elites[0]];
        let mut weights: Vec<f64> =
            elites.iter().map(|&i| ((scores[i] - best) / cfg.temperature).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }

        for c in 0..d {
            let m: f64 = elites.iter().zip(&weights).map(|(&i, w)| w * samples.at(i, c)).sum();
            let v: f64 = elites
                .iter()
                .zip(&weights)
                .map(|(&i, w)| w * (samples.at(i, c) - m).powi(2))
                .sum();
            mean[c] = m;
            std[c] = v.sqrt();
        }
    }
    Ok(mean.iter().map(|m| m.clamp(-1.0, 1.0)).collect())
}

/// Score a batch of candidate actions at a fixed latent state:
/// r_hat(z, a) + gamma * min-double-Q(z_hat', actor(z_hat')).
pub fn score_actions(
    params: &AgentParams,
    cfg: &NetConfig,
    gamma: f64,
    z_row: &Mat,
    actions: &Mat,
) -> Result<Vec<f64>, PlannerError> {
    assert_eq!(z_row.rows, 1);
    let n = actions.rows;
    let mut z = Mat::zeros(n, cfg.latent);
    for r in 0..n {
        z.row_mut(r).copy_from_slice(z_row.row(0));
    }

    let mut tape = Tape::new();
    let mdl = tape.params(&params.model, false);
    let pi = tape.params(&params.actor, false);
    let c1 = tape.params(&params.critic_1, false);
    let c2 = tape.params(&params.critic_2, false);
    let zn = tape.constant(z);
    let an = tape.constant(actions.clone());
    let out = model_step(&mut tape, &mdl, cfg, zn, an)?;
    let a_next = actor(&mut tape, &pi, out.z_next)?;
    let geom = cfg.bin_geometry();
    let p1 = critic_probs(&mut tape, &c1, cfg, "q1", out.z_next, a_next)?;
    let q1 = decode_on_tape(&mut tape, p1, &geom)?;
    let p2 = critic_probs(&mut tape, &c2, cfg, "q2", out.z_next, a_next)?;
    let q2 = decode_on_tape(&mut tape, p2, &geom)?;
    let (q1, q2) = (tape.value(q1), tape.value(q2));
    let rew = tape.value(out.reward);
    Ok((0..n)
        .map(|r| rew.at(r, 0) + gamma * q1.at(r, 0).min(q2.at(r, 0)))
        .collect())
}

/// Plan one action from latent `z_row` (1 x latent), warm-started at actor(z).
pub fn plan(
    params: &AgentParams,
    cfg: &NetConfig,
    gamma: f64,
    z_row: &Mat,
    mpc: &MpcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, PlannerError> {
    let init = {
        let mut tape = Tape::new();
        let pi = tape.params(&params.actor, false);
        let zn = tape.constant(z_row.clone());
        let a = actor(&mut tape, &pi, zn)?;
        tape.value(a).row(0).to_vec()
    };
    if !mpc.enabled {
        return Ok(init);
    }
    cem_optimize(
        &mut |actions| score_actions(params, cfg, gamma, z_row, actions),
        &init,
        mpc,
        rng,
    )
}
