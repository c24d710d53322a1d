//! Off-policy actor-critic training stabilized at high update-to-data ratios
//! by mixing a small fraction of world-model-generated on-policy transitions
//! into each training batch, together with an executable linear-TD stability
//! analysis and the diagnostic probes that motivate the method.
//!
//! The crate is organized bottom-up:
//!
//! - [`numkernel`]: dense f64 matrices, a reverse-mode tape, Adam.
//! - [`envs`]: analytic control environments with reset-to-state support and
//!   a random tabular-MDP generator.
//! - [`linstab`]: occupancies, the key matrix and its decomposition,
//!   positive-definiteness checks, gradient-flow integration, exact solvers.
//! - [`nets`]: SimNorm encoder, latent model, HL-Gauss double critic, actor.
//! - [`losses`]: TD, model, and actor objectives with gradient routing.
//! - [`trainer`]: replay, DYNA batch mixing, the UTD update loop, resets.
//! - [`planner`]: one-step CEM model-predictive control.
//! - [`diagnostics`]: on-policy probes, overestimation, regret, adversarial
//!   action perturbation.
//! - [`cli`]: the `train` / `stability` / `probe` / `sweep` / `regret`
//!   subcommand surface used by the `madtd` binary.

pub mod cli;
pub mod diagnostics;
pub mod envs;
pub mod linstab;
pub mod losses;
pub mod nets;
pub mod numkernel;
pub mod planner;
pub mod trainer;
