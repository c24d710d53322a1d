//! 2D point mass on a bounded plane: double-integrator dynamics, random start,
//! fixed goal at the origin. Observation is the raw 4-vector state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clip_action, Env, EnvError, EnvState, StepOutcome};

pub const DT: f64 = 0.05;
pub const POS_BOUND: f64 = 2.0;
pub const VEL_BOUND: f64 = 2.0;

#[derive(Debug, Clone, Default)]
pub struct PointMass {
    pos: [f64; 2],
    vel: [f64; 2],
    step: u32,
}

impl PointMass {
    pub fn new() -> Self {
        Self::default()
    }

    fn reward(&self) -> f64 {
        (-2.0 * (self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1])).exp()
    }
}

impl Env for PointMass {
    fn id(&self) -> &'static str {
        "point_mass"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> EnvState {
        self.pos = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        self.vel = [0.0, 0.0];
        self.step = 0;
        self.state()
    }

    fn reset_to(&mut self, state: &EnvState) -> Result<(), EnvError> {
        if state.vec.len() != 4 {
            return Err(EnvError::InvalidState(format!(
                "point-mass state needs 4 components, got {}",
                state.vec.len()
            )));
        }
        if !state.vec.iter().all(|v| v.is_finite()) {
            return Err(EnvError::InvalidState("non-finite component".to_string()));
        }
        if state.vec[..2].iter().any(|p| p.abs() > POS_BOUND)
            || state.vec[2..].iter().any(|v| v.abs() > VEL_BOUND)
        {
            return Err(EnvError::InvalidState("component outside bounds".to_string()));
        }
        self.pos = [state.vec[0], state.vec[1]];
        self.vel = [state.vec[2], state.vec[3]];
        self.step = state.step;
        Ok(())
    }

    fn state(&self) -> EnvState {
        EnvState {
            vec: vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]],
            step: self.step,
        }
    }

    fn observe(&self) -> Vec<f64> {
        self.state().vec
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = clip_action(action, 2);
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + DT * a[i]).clamp(-VEL_BOUND, VEL_BOUND);
            self.pos[i] = (self.pos[i] + DT * self.vel[i]).clamp(-POS_BOUND, POS_BOUND);
        }
        self.step += 1;
        StepOutcome {
            obs: self.observe(),
            reward: self.reward(),
            terminal: self.step >= self.horizon(),
        }
    }
}
