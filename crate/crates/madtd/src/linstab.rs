//! Linear TD stability analysis on tabular MDPs: discounted occupancies, the
//! key matrix and its on-policy/residual decomposition, positive-definiteness
//! tests, gradient-flow integration, and exact solvers used as oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::envs::TabularMdp;

#[derive(Debug, Error)]
pub enum LinStabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("linear solve failed: {0}")]
    Singular(String),
}

/// Mapping from states to action probabilities, stored as an X x (X*A) matrix
/// whose row `s` has support only on the A columns belonging to state `s`.
#[derive(Debug, Clone)]
pub struct PolicyMatrix {
    pub pi: DMatrix<f64>,
    pub n_states: usize,
    pub n_actions: usize,
}

impl PolicyMatrix {
    /// Build from per-state action probabilities.
    pub fn from_probs(n_states: usize, n_actions: usize, probs: &[Vec<f64>]) -> Self {
        assert_eq!(probs.len(), n_states);
        let mut pi = DMatrix::zeros(n_states, n_states * n_actions);
        for (s, row) in probs.iter().enumerate() {
            assert_eq!(row.len(), n_actions);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "policy row {s} sums to {sum}");
            for (a, &p) in row.iter().enumerate() {
                pi[(s, s * n_actions + a)] = p;
            }
        }
        PolicyMatrix { pi, n_states, n_actions }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let row = vec![1.0 / n_actions as f64; n_actions];
        Self::from_probs(n_states, n_actions, &vec![row; n_states])
    }

    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Self {
        let probs: Vec<Vec<f64>> = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Self::from_probs(n_states, n_actions, &probs)
    }

    pub fn random(n_states: usize, n_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        let probs: Vec<Vec<f64>> = (0..n_states)
            .map(|_| {
                let draws: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(1e-6..1.0_f64)).collect();
                let sum: f64 = draws.iter().sum();
                draws.into_iter().map(|d| d / sum).collect()
            })
            .collect();
        Self::from_probs(n_states, n_actions, &probs)
    }
}

/// Diagonal of the (1-gamma)-normalized discounted state-action occupancy.
#[derive(Debug, Clone)]
pub struct OccupancyDiag {
    pub d: DVector<f64>,
}

impl OccupancyDiag {
    pub fn as_diagonal(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }
}

/// Linear value-function features, one column per state-action pair.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub phi: DMatrix<f64>,
}

impl FeatureMap {
    pub fn identity(n_pairs: usize) -> Self {
        FeatureMap { phi: DMatrix::identity(n_pairs, n_pairs) }
    }
}

fn check_policy(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<(), LinStabError> {
    if pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions {
        return Err(LinStabError::Dimension(format!(
            "policy is {}x{} actions but MDP is {}x{}",
            pi.n_states, pi.n_actions, mdp.n_states, mdp.n_actions
        )));
    }
    Ok(())
}

/// Closed-form discounted state-action occupancy under `pi`:
/// mu^T = (1 - gamma) d0^T (I - gamma P Pi)^{-1} with d0 = rho^T Pi.
pub fn discounted_occupancy(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<OccupancyDiag, LinStabError> {
    check_policy(mdp, pi)?;
    let xa = mdp.n_pairs();
    let p_pi = &mdp.p * &pi.pi; // XA x XA
    let d0 = (mdp.rho.transpose() * &pi.pi).transpose(); // XA
    let system = DMatrix::identity(xa, xa) - mdp.gamma * p_pi.transpose();
    let mu = system
        .lu()
        .solve(&d0)
        .ok_or_else(|| LinStabError::Singular("(I - gamma P_pi) is singular".to_string()))?
        * (1.0 - mdp.gamma);
    Ok(OccupancyDiag { d: mu })
}

fn weights_or_uniform(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>, LinStabError> {
    match weights {
        Some(w) => {
            if w.len() != n {
                return Err(LinStabError::Dimension(format!(
                    "{} weights for {n} occupancies",
                    w.len()
                )));
            }
            Ok(w.to_vec())
        }
        None => Ok(vec![1.0; n]),
    }
}

/// Key matrix sum_i w_i D^{pi_i} (I - gamma P Pi) for target policy Pi.
pub fn key_matrix(
    occupancies: &[OccupancyDiag],
    mdp: &TabularMdp,
    target_pi: &PolicyMatrix,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>, LinStabError> {
    check_policy(mdp, target_pi)?;
    let w = weights_or_uniform(occupancies.len(), weights)?;
    let xa = mdp.n_pairs();
    let core = DMatrix::identity(xa, xa) - mdp.gamma * (&mdp.p * &target_pi.pi);
    let mut out = DMatrix::zeros(xa, xa);
    for (occ, wi) in occupancies.iter().zip(w.iter()) {
        if occ.d.len() != xa {
            return Err(LinStabError::Dimension("occupancy length mismatch".to_string()));
        }
        out += *wi * occ.as_diagonal() * &core;
    }
    Ok(out)
}

/// Split the key matrix into the guaranteed-positive-definite on-policy part
/// sum_i w_i D^{pi_i} (I - gamma P Pi_i) and the residual
/// gamma sum_i w_i D^{pi_i} P (Pi_i - Pi).
pub fn decompose_key_matrix(
    occupancies: &[OccupancyDiag],
    mdp: &TabularMdp,
    behavior_pis: &[PolicyMatrix],
    target_pi: &PolicyMatrix,
    weights: Option<&[f64]>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LinStabError> {
    if occupancies.len() != behavior_pis.len() {
        return Err(LinStabError::Dimension(format!(
            "{} occupancies but {} behavior policies",
            occupancies.len(),
            behavior_pis.len()
        )));
    }
    check_policy(mdp, target_pi)?;
    let w = weights_or_uniform(occupancies.len(), weights)?;
    let xa = mdp.n_pairs();
    let mut onpolicy = DMatrix::zeros(xa, xa);
    let mut residual = DMatrix::zeros(xa, xa);
    for ((occ, pi_i), wi) in occupancies.iter().zip(behavior_pis.iter()).zip(w.iter()) {
        check_policy(mdp, pi_i)?;
        let di = occ.as_diagonal();
        onpolicy += *wi * &di * (DMatrix::identity(xa, xa) - mdp.gamma * (&mdp.p * &pi_i.pi));
        residual += *wi * mdp.gamma * &di * &mdp.p * (&pi_i.pi - &target_pi.pi);
    }
    Ok((onpolicy, residual))
}

/// Positive definiteness via the symmetrized spectrum; the flag is true iff
/// the minimum eigenvalue of (M + M^T)/2 exceeds the 1e-10 tolerance.
pub fn is_positive_definite(m: &DMatrix<f64>) -> Result<(bool, f64), LinStabError> {
    if m.nrows() != m.ncols() {
        return Err(LinStabError::Dimension(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((min_eig > 1e-10, min_eig))
}

pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Serialize)]
pub struct FlowResult {
    pub theta: Vec<f64>,
    pub theta_norm_series: Vec<f64>,
    pub diverged: bool,
}

/// Integrate theta' = -2 Phi K Phi^T theta + 2 Phi (sum_i w_i D^{pi_i}) R with
/// RK4; reports divergence once ||theta|| crosses 1e6.
#[allow(clippy::too_many_arguments)]
pub fn gradient_flow(
    mdp: &TabularMdp,
    occupancies: &[OccupancyDiag],
    target_pi: &PolicyMatrix,
    features: &FeatureMap,
    theta0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    weights: Option<&[f64]>,
) -> Result<FlowResult, LinStabError> {
    let (a, b) = flow_system(mdp, occupancies, target_pi, features, weights)?;
    if theta0.len() != features.phi.nrows() {
        return Err(LinStabError::Dimension(format!(
            "theta0 has {} entries for {} features",
            theta0.len(),
            features.phi.nrows()
        )));
    }
    let steps = (horizon / dt).round() as usize;
    let stride = (steps / 2000).max(1);
    let mut theta = theta0.clone();
    let mut series = vec![theta.norm()];
    let mut diverged = false;
    let deriv = |th: &DVector<f64>| -2.0 * &a * th + 2.0 * &b;
    for step in 0..steps {
        let k1 = deriv(&theta);
        let k2 = deriv(&(&theta + 0.5 * dt * &k1));
        let k3 = deriv(&(&theta + 0.5 * dt * &k2));
        let k4 = deriv(&(&theta + dt * &k3));
        theta += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (step + 1) % stride == 0 || step + 1 == steps {
            series.push(theta.norm());
        }
        if theta.norm() > DIVERGENCE_THRESHOLD {
            diverged = true;
            break;
        }
    }
    Ok(FlowResult { theta: theta.iter().cloned().collect(), theta_norm_series: series, diverged })
}

/// The linear system (A, b) of the flow: A = Phi K Phi^T, b = Phi sum_i D R.
pub fn flow_system(
    mdp: &TabularMdp,
    occupancies: &[OccupancyDiag],
    target_pi: &PolicyMatrix,
    features: &FeatureMap,
    weights: Option<&[f64]>,
) -> Result<(DMatrix<f64>, DVector<f64>), LinStabError> {
    if features.phi.ncols() != mdp.n_pairs() {
        return Err(LinStabError::Dimension(format!(
            "features have {} columns for {} pairs",
            features.phi.ncols(),
            mdp.n_pairs()
        )));
    }
    let key = key_matrix(occupancies, mdp, target_pi, weights)?;
    let a = &features.phi * key * features.phi.transpose();
    let w = weights_or_uniform(occupancies.len(), weights)?;
    let mut dsum = DVector::zeros(mdp.n_pairs());
    for (occ, wi) in occupancies.iter().zip(w.iter()) {
        dsum += *wi * occ.d.component_mul(&mdp.r);
    }
    let b = &features.phi * dsum;
    Ok((a, b))
}

/// Direct solve of the flow fixed point A theta = b.
pub fn flow_fixed_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinStabError> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| LinStabError::Singular("flow system matrix is singular".to_string()))
}

/// Exact policy action values: solve (I - gamma P Pi) Q = R.
pub fn exact_q(mdp: &TabularMdp, pi: &PolicyMatrix) -> Result<DVector<f64>, LinStabError> {
    check_policy(mdp, pi)?;
    let xa = mdp.n_pairs();
    let system = DMatrix::identity(xa, xa) - mdp.gamma * (&mdp.p * &pi.pi);
    system
        .lu()
        .solve(&mdp.r)
        .ok_or_else(|| LinStabError::Singular("(I - gamma P Pi) is singular".to_string()))
}

/// A bundled stability instance: one behavior buffer, one target policy.
pub struct StabilityExample {
    pub mdp: TabularMdp,
    pub behavior: PolicyMatrix,
    pub target: PolicyMatrix,
    pub features: FeatureMap,
    pub theta0: DVector<f64>,
    pub horizon: f64,
}

/// Two-state divergence witness: the behavior policy pins the occupancy to a
/// single state-action pair whose bootstrap target (under the off-policy
/// target action) carries twice its own feature, so the flow matrix is
/// 1 - 2 gamma < 0 and theta escapes along the single feature direction.
pub fn divergent_two_state() -> StabilityExample {
    let gamma = 0.99;
    // actions: 0 -> go to state 0, 1 -> go to state 1 (from either state)
    let p = DMatrix::from_row_slice(4, 2, &[
        1.0, 0.0, //
        0.0, 1.0, //
        1.0, 0.0, //
        0.0, 1.0,
    ]);
    let r = DVector::from_element(4, 1.0);
    let rho = DVector::from_vec(vec![1.0, 0.0]);
    let mdp = TabularMdp::new(2, 2, p, r, rho, gamma).expect("valid");
    let behavior = PolicyMatrix::deterministic(2, 2, &[0, 0]);
    let target = PolicyMatrix::deterministic(2, 2, &[1, 1]);
    let features = FeatureMap { phi: DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 0.0, 0.0]) };
    StabilityExample {
        mdp,
        behavior,
        target,
        features,
        theta0: DVector::from_vec(vec![0.0]),
        horizon: 20.0,
    }
}

/// The same MDP evaluated on-policy (target = behavior); the flow contracts
/// to the direct linear-solve fixed point.
pub fn onpolicy_two_state() -> StabilityExample {
    let mut ex = divergent_two_state();
    ex.target = ex.behavior.clone();
    ex.horizon = 1500.0;
    ex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;
    use rand::SeedableRng;

    fn chain_mdp(gamma: f64) -> TabularMdp {
        // s0 -> s1 -> s1, single action
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let r = DVector::from_vec(vec![1.0, 0.0]);
        let rho = DVector::from_vec(vec![1.0, 0.0]);
        TabularMdp::new(2, 1, p, r, rho, gamma).unwrap()
    }

    #[test]
    fn occupancy_single_self_loop() {
        let mdp = random_mdp(1, 1, 0.9, 0);
        let pi = PolicyMatrix::uniform(1, 1);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        assert!((occ.d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_two_state_chain_geometric() {
        let mdp = chain_mdp(0.5);
        let pi = PolicyMatrix::uniform(2, 1);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        // (1-gamma)(1, gamma + gamma^2 + ...) = (0.5, 0.5)
        assert!((occ.d[0] - 0.5).abs() < 1e-12);
        assert!((occ.d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_matches_truncated_power_series() {
        for seed in 0..5 {
            let mdp = random_mdp(5, 3, 0.9, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let pi = PolicyMatrix::random(5, 3, &mut rng);
            let occ = discounted_occupancy(&mdp, &pi).unwrap();

            let p_pi = (&mdp.p * &pi.pi).transpose();
            let mut term = (mdp.rho.transpose() * &pi.pi).transpose();
            let mut sum = term.clone();
            for _ in 0..200 {
                term = mdp.gamma * &p_pi * term;
                sum += &term;
            }
            sum *= 1.0 - mdp.gamma;
            assert!((occ.d.clone() - sum).amax() < 1e-8);
        }
    }

    #[test]
    fn occupancy_sums_to_one() {
        let mdp = random_mdp(6, 2, 0.97, 3);
        let pi = PolicyMatrix::uniform(6, 2);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        assert!((occ.d.sum() - 1.0).abs() < 1e-10);
        assert!(occ.d.iter().all(|&v| v >= -1e-14));
    }

    #[test]
    fn balance_identity_mu_i_minus_gamma_p() {
        // mu^T (I - gamma P_pi) = (1 - gamma) d0^T
        for seed in 0..10 {
            let mdp = random_mdp(5, 2, 0.95, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = PolicyMatrix::random(5, 2, &mut rng);
            let occ = discounted_occupancy(&mdp, &pi).unwrap();
            let xa = mdp.n_pairs();
            let p_pi = &mdp.p * &pi.pi;
            let lhs = occ.d.transpose() * (DMatrix::identity(xa, xa) - mdp.gamma * p_pi);
            let d0 = (mdp.rho.transpose() * &pi.pi) * (1.0 - mdp.gamma);
            assert!((lhs - d0).amax() < 1e-10);
        }
    }

    #[test]
    fn key_matrix_gamma_zero_is_occupancy_diagonal() {
        let mdp = random_mdp(4, 2, 0.0, 9);
        let pi = PolicyMatrix::uniform(4, 2);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        let key = key_matrix(&[occ.clone()], &mdp, &pi, None).unwrap();
        assert!((key - occ.as_diagonal()).amax() < 1e-14);
    }

    #[test]
    fn onpolicy_key_matrix_positive_definite() {
        for seed in 0..20 {
            let mdp = random_mdp(5, 3, 0.95, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let pi = PolicyMatrix::random(5, 3, &mut rng);
            let occ = discounted_occupancy(&mdp, &pi).unwrap();
            let key = key_matrix(&[occ], &mdp, &pi, None).unwrap();
            let (pd, min_eig) = is_positive_definite(&key).unwrap();
            assert!(pd, "seed {seed}: min eig {min_eig}");
        }
    }

    #[test]
    fn decomposition_sums_to_key_matrix_and_residual_vanishes_on_policy() {
        let mdp = random_mdp(4, 2, 0.9, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pis: Vec<PolicyMatrix> = (0..3).map(|_| PolicyMatrix::random(4, 2, &mut rng)).collect();
        let occs: Vec<OccupancyDiag> =
            pis.iter().map(|pi| discounted_occupancy(&mdp, pi).unwrap()).collect();
        let target = PolicyMatrix::random(4, 2, &mut rng);

        let key = key_matrix(&occs, &mdp, &target, None).unwrap();
        let (on, res) = decompose_key_matrix(&occs, &mdp, &pis, &target, None).unwrap();
        assert!(((on.clone() + res) - key).amax() < 1e-12);
        let (pd, _) = is_positive_definite(&on).unwrap();
        assert!(pd);

        // target equal to every behavior: residual exactly zero
        let (_, res0) =
            decompose_key_matrix(&occs[..1], &mdp, &pis[..1], &pis[0], None).unwrap();
        assert_eq!(res0.amax(), 0.0);
    }

    #[test]
    fn decomposition_rejects_length_mismatch() {
        let mdp = random_mdp(3, 2, 0.9, 1);
        let pi = PolicyMatrix::uniform(3, 2);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        assert!(decompose_key_matrix(&[occ], &mdp, &[], &pi, None).is_err());
    }

    #[test]
    fn pd_check_simple_cases() {
        let (pd, eig) = is_positive_definite(&DMatrix::identity(3, 3)).unwrap();
        assert!(pd);
        assert!((eig - 1.0).abs() < 1e-12);

        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (pd, eig) = is_positive_definite(&skew).unwrap();
        assert!(!pd);
        assert!(eig.abs() < 1e-12);

        assert!(is_positive_definite(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn flow_zero_reward_zero_init_stays_zero() {
        let mut mdp = random_mdp(3, 2, 0.9, 2);
        mdp.r.fill(0.0);
        let pi = PolicyMatrix::uniform(3, 2);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        let features = FeatureMap::identity(6);
        let theta0 = DVector::zeros(6);
        let out = gradient_flow(&mdp, &[occ], &pi, &features, &theta0, 5.0, 0.01, None).unwrap();
        assert!(!out.diverged);
        assert!(out.theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn onpolicy_flow_converges_to_direct_solve() {
        let mdp = random_mdp(4, 2, 0.9, 21);
        let pi = PolicyMatrix::uniform(4, 2);
        let occ = discounted_occupancy(&mdp, &pi).unwrap();
        let features = FeatureMap::identity(8);
        let theta0 = DVector::zeros(8);
        let out =
            gradient_flow(&mdp, &[occ.clone()], &pi, &features, &theta0, 2000.0, 0.01, None).unwrap();
        assert!(!out.diverged);
        let (a, b) = flow_system(&mdp, &[occ], &pi, &features, None).unwrap();
        let star = flow_fixed_point(&a, &b).unwrap();
        let theta = DVector::from_vec(out.theta);
        assert!((theta - star).amax() < 1e-6);
    }

    #[test]
    fn divergent_example_diverges_and_onpolicy_variant_converges() {
        let ex = divergent_two_state();
        let occ = discounted_occupancy(&ex.mdp, &ex.behavior).unwrap();
        // occupancy pinned on the (s0, a0) pair
        assert!((occ.d[0] - 1.0).abs() < 1e-12);

        let key = key_matrix(&[occ.clone()], &ex.mdp, &ex.target, None).unwrap();
        let (pd, min_eig) = is_positive_definite(&key).unwrap();
        assert!(!pd && min_eig < 0.0);

        let flow = gradient_flow(
            &ex.mdp, &[occ], &ex.target, &ex.features, &ex.theta0, ex.horizon, 0.01, None,
        )
        .unwrap();
        assert!(flow.diverged);
        let norms = &flow.theta_norm_series;
        assert!(norms.windows(2).all(|w| w[1] >= w[0]), "norm growth is monotone");

        let on = onpolicy_two_state();
        let occ = discounted_occupancy(&on.mdp, &on.behavior).unwrap();
        let flow = gradient_flow(
            &on.mdp, &[occ.clone()], &on.target, &on.features, &on.theta0, on.horizon, 0.01, None,
        )
        .unwrap();
        assert!(!flow.diverged);
        let (a, b) = flow_system(&on.mdp, &[occ], &on.target, &on.features, None).unwrap();
        let star = flow_fixed_point(&a, &b).unwrap();
        assert!((flow.theta[0] - star[0]).abs() < 1e-6, "{} vs {}", flow.theta[0], star[0]);
    }

    #[test]
    fn exact_q_cases() {
        // gamma = 0 gives Q = R
        let mdp = random_mdp(3, 2, 0.0, 5);
        let pi = PolicyMatrix::uniform(3, 2);
        let q = exact_q(&mdp, &pi).unwrap();
        assert!((q - mdp.r.clone()).amax() < 1e-14);

        // single self-loop, r = 1, gamma = 0.9: geometric series 10
        let mut mdp = random_mdp(1, 1, 0.9, 0);
        mdp.r[0] = 1.0;
        let pi = PolicyMatrix::uniform(1, 1);
        let q = exact_q(&mdp, &pi).unwrap();
        assert!((q[0] - 10.0).abs() < 1e-10);

        // Bellman residual on random MDPs
        for seed in 0..5 {
            let mdp = random_mdp(6, 3, 0.95, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = PolicyMatrix::random(6, 3, &mut rng);
            let q = exact_q(&mdp, &pi).unwrap();
            let resid = &q - &mdp.r - mdp.gamma * (&mdp.p * &pi.pi) * &q;
            assert!(resid.amax() <= 1e-10);
        }
    }
}
