//! Built-in analytic continuous-control environments with reset-to-arbitrary-
//! state support (required by the on-policy probe), plus a random tabular-MDP
//! generator for the stability analyzer.

mod pendulum;
mod point_mass;
mod tabular;

pub use pendulum::Pendulum;
pub use point_mass::PointMass;
pub use tabular::{random_mdp, TabularMdp};

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment id `{0}` (known: pendulum_swingup, point_mass)")]
    UnknownEnv(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Full simulator state: the environment-specific real vector plus the step
/// counter inside the fixed-horizon episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub vec: Vec<f64>,
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Real,
    Model,
}

/// One environment step record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub source: Source,
}

pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Fixed-horizon environments: deterministic dynamics, rewards in [0,1],
/// terminal only at the horizon boundary.
pub trait Env {
    fn id(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn horizon(&self) -> u32 {
        500
    }
    /// Draw a start state from the documented start distribution.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> EnvState;
    /// Continue exactly from the given state; stepping afterwards matches a
    /// run that arrived at that state naturally.
    fn reset_to(&mut self, state: &EnvState) -> Result<(), EnvError>;
    fn state(&self) -> EnvState;
    fn observe(&self) -> Vec<f64>;
    /// Advance one fixed timestep; actions outside [-1,1]^d are clipped.
    fn step(&mut self, action: &[f64]) -> StepOutcome;
}

pub fn by_id(id: &str) -> Result<Box<dyn Env>, EnvError> {
    match id {
        "pendulum_swingup" => Ok(Box::new(Pendulum::new())),
        "point_mass" => Ok(Box::new(PointMass::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

pub fn clip_action(action: &[f64], dim: usize) -> Vec<f64> {
    let mut a: Vec<f64> = action.iter().take(dim).map(|v| v.clamp(-1.0, 1.0)).collect();
    a.resize(dim, 0.0);
    a
}

/// Trajectory dump: header `t,state...,action...,reward` with one indexed
/// column per state/action component.
pub fn write_trajectory_csv(
    path: &Path,
    obs_dim: usize,
    act_dim: usize,
    rows: &[(u32, Vec<f64>, Vec<f64>, f64)],
) -> Result<(), EnvError> {
    let mut f = std::fs::File::create(path)?;
    let mut header = String::from("t");
    for i in 0..obs_dim {
        header.push_str(&format!(",state{i}"));
    }
    for i in 0..act_dim {
        header.push_str(&format!(",action{i}"));
    }
    header.push_str(",reward");
    writeln!(f, "{header}")?;
    for (t, state, action, reward) in rows {
        let mut line = format!("{t}");
        for v in state {
            line.push_str(&format!(",{v}"));
        }
        for v in action {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{reward}"));
        writeln!(f, "{line}")?;
    }
    Ok(())
}
