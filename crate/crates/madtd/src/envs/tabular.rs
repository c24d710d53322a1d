//! Explicit tabular MDPs for the stability analyzer and exact oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EnvError;

/// Transition matrix over state-action pairs: row (x * A + a) of `p` is the
/// distribution over next states.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub p: DMatrix<f64>,
    pub r: DVector<f64>,
    pub rho: DVector<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p: DMatrix<f64>,
        r: DVector<f64>,
        rho: DVector<f64>,
        gamma: f64,
    ) -> Result<Self, EnvError> {
        let mdp = TabularMdp { n_states, n_actions, p, r, rho, gamma };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn validate(&self) -> Result<(), EnvError> {
        let (xa, x) = (self.n_pairs(), self.n_states);
        if self.p.nrows() != xa || self.p.ncols() != x {
            return Err(EnvError::InvalidState(format!(
                "P must be {xa}x{x}, got {}x{}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        if self.r.len() != xa {
            return Err(EnvError::InvalidState("R length mismatch".to_string()));
        }
        if self.rho.len() != x {
            return Err(EnvError::InvalidState("rho length mismatch".to_string()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EnvError::InvalidState(format!("gamma {} outside [0,1)", self.gamma)));
        }
        for i in 0..xa {
            let row = self.p.row(i);
            if row.iter().any(|&v| v < 0.0) {
                return Err(EnvError::InvalidState(format!("negative entry in P row {i}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(EnvError::InvalidState(format!("P row {i} sums to {s}")));
            }
        }
        let rho_sum: f64 = self.rho.iter().sum();
        if (rho_sum - 1.0).abs() > 1e-12 || self.rho.iter().any(|&v| v < 0.0) {
            return Err(EnvError::InvalidState(format!("rho sums to {rho_sum}")));
        }
        Ok(())
    }
}

fn dirichlet_uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Dirichlet(1,...,1) via normalized Exp(1) draws
    let draws: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln()).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / sum).collect()
}

/// Random MDP: P rows and rho from Dirichlet(1,...,1), rewards uniform [0,1].
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> TabularMdp {
    assert!(n_states >= 1 && n_actions >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xa = n_states * n_actions;
    let mut p = DMatrix::zeros(xa, n_states);
    for i in 0..xa {
        for (j, v) in dirichlet_uniform(&mut rng, n_states).into_iter().enumerate() {
            p[(i, j)] = v;
        }
    }
    let r = DVector::from_iterator(xa, (0..xa).map(|_| rng.gen_range(0.0..1.0)));
    let rho = DVector::from_vec(dirichlet_uniform(&mut rng, n_states));
    TabularMdp::new(n_states, n_actions, p, r, rho, gamma).expect("generated MDP is valid")
}
