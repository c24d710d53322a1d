//! Agent networks: SimNorm encoder, latent dynamics model, HL-Gauss double
//! critic, tanh actor, and the scalar <-> categorical value codec they share.
//!
//! All forwards run on a [`Tape`](crate::numkernel::Tape); whether a network's
//! parameters receive gradients is decided by the caller when loading the
//! relevant [`ParamStore`] onto the tape.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numkernel::{KernelError, Mat, NodeId, ParamStore, Tape};

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
}

fn default_hidden() -> usize {
    128
}
fn default_latent() -> usize {
    64
}
fn default_group_size() -> usize {
    8
}
fn default_bins() -> usize {
    101
}
fn default_vmax() -> f64 {
    100.0
}

/// Architecture sizes. The value range is symmetric: vmin = -vmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_latent")]
    pub latent: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_vmax")]
    pub vmax: f64,
}

impl NetConfig {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        NetConfig {
            obs_dim,
            act_dim,
            hidden: default_hidden(),
            latent: default_latent(),
            group_size: default_group_size(),
            bins: default_bins(),
            vmax: default_vmax(),
        }
    }

    pub fn validate(&self) -> Result<(), NetsError> {
        if self.obs_dim == 0 || self.act_dim == 0 || self.hidden == 0 {
            return Err(NetsError::InvalidConfig("zero dimension".to_string()));
        }
        if self.latent == 0 || self.latent % self.group_size != 0 {
            return Err(NetsError::InvalidConfig(format!(
                "latent {} not divisible by group size {}",
                self.latent, self.group_size
            )));
        }
        if self.bins < 3 || self.bins % 2 == 0 {
            return Err(NetsError::InvalidConfig(format!("bins {} must be odd and >= 3", self.bins)));
        }
        if !(self.vmax.is_finite() && self.vmax > 0.0) {
            return Err(NetsError::InvalidConfig(format!("vmax {} must be positive", self.vmax)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding; stamped into checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn bin_geometry(&self) -> BinGeometry {
        BinGeometry { bins: self.bins, vmax: self.vmax }
    }
}

fn init_linear(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    idx: usize,
    fan_in: usize,
    fan_out: usize,
    zero: bool,
) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = if zero {
        Mat::zeros(fan_in, fan_out)
    } else {
        let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Mat::from_vec(fan_in, fan_out, data)
    };
    store.insert(&format!("{prefix}.w{idx}"), w).expect("fresh name");
    store.insert(&format!("{prefix}.b{idx}"), Mat::zeros(1, fan_out)).expect("fresh name");
}

/// x W + b with the bias broadcast across rows.
fn linear(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    prefix: &str,
    idx: usize,
    x: NodeId,
) -> Result<NodeId, KernelError> {
    let w = nodes[&format!("{prefix}.w{idx}")];
    let b = nodes[&format!("{prefix}.b{idx}")];
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

pub fn init_encoder(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    init_linear(&mut store, rng, "enc", 0, cfg.obs_dim, cfg.hidden, false);
    init_linear(&mut store, rng, "enc", 1, cfg.hidden, cfg.latent, false);
    store
}

/// Observation batch -> latent batch; dense mish layer then SimNorm.
pub fn encode(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    cfg: &NetConfig,
    obs: NodeId,
) -> Result<NodeId, KernelError> {
    let h = linear(tape, nodes, "enc", 0, obs)?;
    let h = tape.mish(h);
    let logits = linear(tape, nodes, "enc", 1, h)?;
    tape.group_softmax(logits, cfg.group_size)
}

pub fn init_model(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    let input = cfg.latent + cfg.act_dim;
    init_linear(&mut store, rng, "mdl", 0, input, cfg.hidden, false);
    init_linear(&mut store, rng, "mdl", 1, cfg.hidden, cfg.hidden, false);
    init_linear(&mut store, rng, "mdl.z", 2, cfg.hidden, cfg.latent, false);
    init_linear(&mut store, rng, "mdl.r", 2, cfg.hidden, 1, false);
    store
}

pub struct ModelOut {
    /// SimNorm-normalized predicted next latent.
    pub z_next: NodeId,
    /// Pre-SimNorm logits of the next latent (for cross-entropy losses).
    pub z_logits: NodeId,
    /// Predicted per-row scalar reward (batch x 1).
    pub reward: NodeId,
}

/// One latent transition: (z, a) -> predicted next latent and reward.
pub fn model_step(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    cfg: &NetConfig,
    z: NodeId,
    action: NodeId,
) -> Result<ModelOut, KernelError> {
    let za = tape.concat_cols(z, action)?;
    let h = linear(tape, nodes, "mdl", 0, za)?;
    let h = tape.mish(h);
    let h = linear(tape, nodes, "mdl", 1, h)?;
    let h = tape.mish(h);
    let z_logits = linear(tape, nodes, "mdl.z", 2, h)?;
    let z_next = tape.group_softmax(z_logits, cfg.group_size)?;
    let reward = linear(tape, nodes, "mdl.r", 2, h)?;
    Ok(ModelOut { z_next, z_logits, reward })
}

/// Each critic head gets its own store and its own parameter prefix ("q1" or
/// "q2"), so both heads can be trained on one tape without gradient-name
/// clashes; a target store shares its online head's prefix.
pub fn init_critic(cfg: &NetConfig, rng: &mut ChaCha8Rng, prefix: &str) -> ParamStore {
    let mut store = ParamStore::new();
    let input = cfg.latent + cfg.act_dim;
    init_linear(&mut store, rng, prefix, 0, input, cfg.hidden, false);
    init_linear(&mut store, rng, prefix, 1, cfg.hidden, cfg.hidden, false);
    // zero final layer: initial categorical output is uniform, scalar Q = 0
    init_linear(&mut store, rng, prefix, 2, cfg.hidden, cfg.bins, true);
    store
}

/// Bin logits (batch x bins) for one critic head.
pub fn critic_logits(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    prefix: &str,
    z: NodeId,
    action: NodeId,
) -> Result<NodeId, KernelError> {
    let za = tape.concat_cols(z, action)?;
    let h = linear(tape, nodes, prefix, 0, za)?;
    let h = tape.mish(h);
    let h = linear(tape, nodes, prefix, 1, h)?;
    let h = tape.mish(h);
    linear(tape, nodes, prefix, 2, h)
}

/// Softmax-normalized bin probabilities for one critic head.
pub fn critic_probs(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    cfg: &NetConfig,
    prefix: &str,
    z: NodeId,
    action: NodeId,
) -> Result<NodeId, KernelError> {
    let logits = critic_logits(tape, nodes, prefix, z, action)?;
    tape.group_softmax(logits, cfg.bins)
}

pub fn init_actor(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    init_linear(&mut store, rng, "pi", 0, cfg.latent, cfg.hidden, false);
    init_linear(&mut store, rng, "pi", 1, cfg.hidden, cfg.hidden, false);
    init_linear(&mut store, rng, "pi", 2, cfg.hidden, cfg.act_dim, false);
    store
}

/// Deterministic tanh policy: latent batch -> actions in (-1, 1)^d.
pub fn actor(
    tape: &mut Tape,
    nodes: &BTreeMap<String, NodeId>,
    z: NodeId,
) -> Result<NodeId, KernelError> {
    let h = linear(tape, nodes, "pi", 0, z)?;
    let h = tape.mish(h);
    let h = linear(tape, nodes, "pi", 1, h)?;
    let h = tape.mish(h);
    let out = linear(tape, nodes, "pi", 2, h)?;
    Ok(tape.tanh(out))
}

/// All learnable state of one agent.
#[derive(Clone)]
pub struct AgentParams {
    pub encoder: ParamStore,
    pub model: ParamStore,
    pub critic_1: ParamStore,
    pub critic_2: ParamStore,
    pub target_critic_1: ParamStore,
    pub target_critic_2: ParamStore,
    pub actor: ParamStore,
}

impl AgentParams {
    pub fn init(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoder = init_encoder(cfg, rng);
        let model = init_model(cfg, rng);
        let critic_1 = init_critic(cfg, rng, "q1");
        let critic_2 = init_critic(cfg, rng, "q2");
        let actor = init_actor(cfg, rng);
        AgentParams {
            encoder,
            model,
            target_critic_1: critic_1.clone(),
            target_critic_2: critic_2.clone(),
            critic_1,
            critic_2,
            actor,
        }
    }

    pub fn stores(&self) -> [(&'static str, &ParamStore); 7] {
        [
            ("encoder", &self.encoder),
            ("model", &self.model),
            ("critic_1", &self.critic_1),
            ("critic_2", &self.critic_2),
            ("target_critic_1", &self.target_critic_1),
            ("target_critic_2", &self.target_critic_2),
            ("actor", &self.actor),
        ]
    }

    fn store_mut(&mut self, name: &str) -> Option<&mut ParamStore> {
        match name {
            "encoder" => Some(&mut self.encoder),
            "model" => Some(&mut self.model),
            "critic_1" => Some(&mut self.critic_1),
            "critic_2" => Some(&mut self.critic_2),
            "target_critic_1" => Some(&mut self.target_critic_1),
            "target_critic_2" => Some(&mut self.target_critic_2),
            "actor" => Some(&mut self.actor),
            _ => None,
        }
    }
}

/// Convenience: no-grad scalar Q of one head on concrete matrices.
pub fn critic_value(
    params: &ParamStore,
    cfg: &NetConfig,
    prefix: &str,
    z: &Mat,
    action: &Mat,
) -> Result<Vec<f64>, NetsError> {
    let mut tape = Tape::new();
    let nodes = tape.params(params, false);
    let zn = tape.constant(z.clone());
    let an = tape.constant(action.clone());
    let probs = critic_probs(&mut tape, &nodes, cfg, prefix, zn, an)?;
    let probs = tape.value(probs);
    let geom = cfg.bin_geometry();
    Ok((0..probs.rows).map(|r| hlgauss_decode(probs.row(r), &geom)).collect())
}

/// Check the SimNorm group-simplex invariant on a latent batch.
pub fn latent_is_valid(z: &Mat, group_size: usize) -> bool {
    if z.cols % group_size != 0 {
        return false;
    }
    for r in 0..z.rows {
        for g in 0..z.cols / group_size {
            let group = &z.row(r)[g * group_size..(g + 1) * group_size];
            if group.iter().any(|&v| v < 0.0) {
                return false;
            }
            if (group.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                return false;
            }
        }
    }
    true
}

/// Symmetric bin layout over [-vmax, vmax] with an odd bin count so a center
/// bin sits exactly at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGeometry {
    pub bins: usize,
    pub vmax: f64,
}

impl BinGeometry {
    pub fn width(&self) -> f64 {
        2.0 * self.vmax / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        -self.vmax + i as f64 * self.width()
    }

    /// Bin centers as exact +/- mirror pairs around 0 (bins is odd), so a
    /// symmetric distribution decodes to exactly 0.
    pub fn center(&self, b: usize) -> f64 {
        (b as f64 - (self.bins - 1) as f64 / 2.0) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|b| self.center(b)).collect()
    }

    /// Smoothing width of the HL-Gauss mass: 0.75 bin widths.
    pub fn sigma(&self) -> f64 {
        0.75 * self.width()
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Spread a scalar into per-bin Gaussian masses, renormalized over the range.
pub fn hlgauss_encode(v: f64, geom: &BinGeometry) -> Result<Vec<f64>, NetsError> {
    if !v.is_finite() {
        return Err(NetsError::NonFinite(format!("hlgauss_encode({v})")));
    }
    let v = v.clamp(-geom.vmax, geom.vmax);
    let sigma = geom.sigma();
    let mut masses: Vec<f64> = (0..geom.bins)
        .map(|b| normal_cdf((geom.edge(b + 1) - v) / sigma) - normal_cdf((geom.edge(b) - v) / sigma))
        .collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    Ok(masses)
}

/// Expectation of bin centers under a categorical value. Mirror bins are
/// summed pairwise, so a bin-symmetric distribution decodes to exactly 0.
pub fn hlgauss_decode(probs: &[f64], geom: &BinGeometry) -> f64 {
    assert_eq!(probs.len(), geom.bins);
    let n = geom.bins;
    let mut acc = 0.0;
    for b in 0..n / 2 {
        acc += probs[b] * geom.center(b) + probs[n - 1 - b] * geom.center(n - 1 - b);
    }
    if n % 2 == 1 {
        acc += probs[n / 2] * geom.center(n / 2);
    }
    acc
}

/// Tape-side decode: (batch x bins) probabilities -> (batch x 1) scalars.
pub fn decode_on_tape(
    tape: &mut Tape,
    probs: NodeId,
    geom: &BinGeometry,
) -> Result<NodeId, KernelError> {
    let centers = tape.constant(Mat::col_vec(geom.centers()));
    tape.matmul(probs, centers)
}

const CHECKPOINT_DTYPE: &str = "f64le";

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    store: String,
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: NetConfig,
    config_hash: String,
    dtype: String,
    arrays: Vec<ArrayEntry>,
}

/// Write `<stem>.bin` (named arrays, little-endian f64) and `<stem>.json`.
pub fn save_checkpoint(stem: &Path, params: &AgentParams, cfg: &NetConfig) -> Result<(), NetsError> {
    let mut arrays = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (store_name, store) in params.stores() {
        for (name, mat) in store.iter() {
            arrays.push(ArrayEntry {
                store: store_name.to_string(),
                name: name.clone(),
                rows: mat.rows,
                cols: mat.cols,
                offset,
            });
            for &v in &mat.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += mat.data.len();
        }
    }
    let manifest = Manifest {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        dtype: CHECKPOINT_DTYPE.to_string(),
        arrays,
    };
    std::fs::File::create(stem.with_extension("bin"))?.write_all(&blob)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NetsError::Manifest(e.to_string()))?;
    std::fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(stem: &Path) -> Result<(AgentParams, NetConfig), NetsError> {
    let json = std::fs::read_to_string(stem.with_extension("json"))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| NetsError::Manifest(e.to_string()))?;
    if manifest.dtype != CHECKPOINT_DTYPE {
        return Err(NetsError::Manifest(format!("unsupported dtype {}", manifest.dtype)));
    }
    if manifest.config_hash != manifest.config.hash() {
        return Err(NetsError::Manifest("config hash mismatch".to_string()));
    }
    let mut blob = Vec::new();
    std::fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut blob)?;
    if blob.len() % 8 != 0 {
        return Err(NetsError::Manifest("binary payload is not f64-aligned".to_string()));
    }

    let empty = AgentParams {
        encoder: ParamStore::new(),
        model: ParamStore::new(),
        critic_1: ParamStore::new(),
        critic_2: ParamStore::new(),
        target_critic_1: ParamStore::new(),
        target_critic_2: ParamStore::new(),
        actor: ParamStore::new(),
    };
    let mut params = empty;
    for entry in &manifest.arrays {
        let n = entry.rows * entry.cols;
        let start = entry.offset * 8;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(NetsError::Manifest(format!("array {} overruns payload", entry.name)));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let store = params
            .store_mut(&entry.store)
            .ok_or_else(|| NetsError::Manifest(format!("unknown store {}", entry.store)))?;
        store.insert(&entry.name, Mat::from_vec(entry.rows, entry.cols, data))?;
    }
    Ok((params, manifest.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::soft_update;
    use rand::SeedableRng;

    fn cfg() -> NetConfig {
        let mut c = NetConfig::new(3, 1);
        c.hidden = 16;
        c.latent = 16;
        c.bins = 11;
        c.vmax = 10.0;
        c
    }

    fn rand_obs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.latent = 15;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.bins = 10;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.vmax = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_hash_changes_with_fields() {
        let a = cfg();
        let mut b = cfg();
        assert_eq!(a.hash(), b.hash());
        b.hidden += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn encoder_output_is_valid_latent() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = init_encoder(&cfg, &mut rng);
        let obs = rand_obs(&mut rng, 5, cfg.obs_dim);
        let mut tape = Tape::new();
        let nodes = tape.params(&enc, false);
        let o = tape.constant(obs);
        let z = encode(&mut tape, &nodes, &cfg, o).unwrap();
        let z = tape.value(z);
        assert!(latent_is_valid(z, cfg.group_size));
        // unit-sum groups: L1 norm is exactly the group count
        let l1: f64 = z.row(0).iter().map(|v| v.abs()).sum();
        assert!((l1 - (cfg.latent / cfg.group_size) as f64).abs() < 1e-8);
    }

    #[test]
    fn zero_logits_give_uniform_groups_and_dominant_logit_saturates() {
        let cfg = cfg();
        let mut tape = Tape::new();
        let mut logits = Mat::zeros(1, cfg.latent);
        let l = tape.constant(logits.clone());
        let z = tape.group_softmax(l, cfg.group_size).unwrap();
        let z = tape.value(z);
        assert!(z.data.iter().all(|&v| (v - 1.0 / cfg.group_size as f64).abs() < 1e-12));

        for g in 0..cfg.latent / cfg.group_size {
            *logits.at_mut(0, g * cfg.group_size) = 50.0;
        }
        let l = tape.constant(logits);
        let z = tape.group_softmax(l, cfg.group_size).unwrap();
        let z = tape.value(z);
        for g in 0..cfg.latent / cfg.group_size {
            assert!(z.at(0, g * cfg.group_size) > 1.0 - 1e-10);
        }
    }

    #[test]
    fn model_step_is_deterministic_and_valid() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdl = init_model(&cfg, &mut rng);
        let z0 = {
            let enc = init_encoder(&cfg, &mut rng);
            let obs = rand_obs(&mut rng, 4, cfg.obs_dim);
            let mut tape = Tape::new();
            let nodes = tape.params(&enc, false);
            let o = tape.constant(obs);
            let z = encode(&mut tape, &nodes, &cfg, o).unwrap();
            tape.value(z).clone()
        };
        let a = rand_obs(&mut rng, 4, cfg.act_dim);
        let run = || {
            let mut tape = Tape::new();
            let nodes = tape.params(&mdl, false);
            let zn = tape.constant(z0.clone());
            let an = tape.constant(a.clone());
            let out = model_step(&mut tape, &nodes, &cfg, zn, an).unwrap();
            (tape.value(out.z_next).clone(), tape.value(out.reward).clone())
        };
        let (z1, r1) = run();
        let (z2, r2) = run();
        assert_eq!(z1.data, z2.data);
        assert_eq!(r1.data, r2.data);
        assert!(latent_is_valid(&z1, cfg.group_size));
        assert_eq!(r1.rows, 4);
        assert_eq!(r1.cols, 1);
    }

    #[test]
    fn fresh_critic_predicts_exactly_zero() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let critic = init_critic(&cfg, &mut rng, "q1");
        let z = rand_obs(&mut rng, 3, cfg.latent);
        let a = rand_obs(&mut rng, 3, cfg.act_dim);
        let vals = critic_value(&critic, &cfg, "q1", &z, &a).unwrap();
        // uniform bins with vmin = -vmax: expectation is 0 up to roundoff
        assert!(vals.iter().all(|v| v.abs() < 1e-12), "{vals:?}");
    }

    #[test]
    fn critic_probs_normalized_and_target_copy_faithful() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut critic = init_critic(&cfg, &mut rng, "q1");
        // give the final layer nonzero weights so values are nontrivial
        critic.set("q1.w2", rand_obs(&mut rng, cfg.hidden, cfg.bins)).unwrap();
        let z = rand_obs(&mut rng, 2, cfg.latent);
        let a = rand_obs(&mut rng, 2, cfg.act_dim);

        let mut tape = Tape::new();
        let nodes = tape.params(&critic, false);
        let zn = tape.constant(z.clone());
        let an = tape.constant(a.clone());
        let probs = critic_probs(&mut tape, &nodes, &cfg, "q1", zn, an).unwrap();
        let probs = tape.value(probs);
        for r in 0..2 {
            let s: f64 = probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(probs.row(r).iter().all(|&p| p >= 0.0));
        }

        let mut target = init_critic(&cfg, &mut ChaCha8Rng::seed_from_u64(99), "q1");
        soft_update(&mut target, &critic, 0.0).unwrap();
        let v = critic_value(&critic, &cfg, "q1", &z, &a).unwrap();
        let vt = critic_value(&target, &cfg, "q1", &z, &a).unwrap();
        for (a, b) in v.iter().zip(vt.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn actor_outputs_bounded_and_q_gradient_through_actor_nonzero() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pi = init_actor(&cfg, &mut rng);
        let mut critic = init_critic(&cfg, &mut rng, "q1");
        critic.set("q1.w2", rand_obs(&mut rng, cfg.hidden, cfg.bins)).unwrap();
        let z = rand_obs(&mut rng, 6, cfg.latent);

        let mut tape = Tape::new();
        let actor_nodes = tape.params(&pi, true);
        let critic_nodes = tape.params(&critic, false);
        let zn = tape.constant(z);
        let a = actor(&mut tape, &actor_nodes, zn).unwrap();
        let av = tape.value(a).clone();
        assert!(av.data.iter().all(|&v| v.abs() < 1.0));

        let probs = critic_probs(&mut tape, &critic_nodes, &cfg, "q1", zn, a).unwrap();
        let q = decode_on_tape(&mut tape, probs, &cfg.bin_geometry()).unwrap();
        let obj = tape.mean(q);
        let grads = tape.backward(obj).unwrap();
        let norm = grads.global_norm();
        assert!(norm > 1e-8, "gradient through actor is {norm}");
        assert!(grads.get("q1.w0").is_none(), "critic held constant");
    }

    #[test]
    fn hlgauss_symmetry_and_edge_cases() {
        let geom = BinGeometry { bins: 11, vmax: 10.0 };
        let enc0 = hlgauss_encode(0.0, &geom).unwrap();
        for b in 0..geom.bins {
            assert!((enc0[b] - enc0[geom.bins - 1 - b]).abs() < 1e-12);
        }
        assert!(hlgauss_decode(&enc0, &geom).abs() < 1e-12);

        let top = hlgauss_encode(geom.vmax, &geom).unwrap();
        assert!((hlgauss_decode(&top, &geom) - geom.vmax).abs() <= geom.sigma());

        let uniform = vec![1.0 / 11.0; 11];
        assert!(hlgauss_decode(&uniform, &geom).abs() < 1e-12);

        let mut onehot = vec![0.0; 11];
        onehot[5] = 1.0;
        assert!((hlgauss_decode(&onehot, &geom) - geom.center(5)).abs() < 1e-12);

        assert!(hlgauss_encode(f64::NAN, &geom).is_err());
    }

    #[test]
    fn hlgauss_roundtrip_middle_ninety_percent() {
        let geom = BinGeometry { bins: 101, vmax: 100.0 };
        let width = geom.width();
        let mut v = -0.9 * geom.vmax;
        while v <= 0.9 * geom.vmax {
            let enc = hlgauss_encode(v, &geom).unwrap();
            let sum: f64 = enc.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let dec = hlgauss_decode(&enc, &geom);
            assert!(
                (dec - v).abs() <= 0.05 * width,
                "round-trip error {} at v={v}",
                (dec - v).abs()
            );
            v += 0.37;
        }
    }

    #[test]
    fn hlgauss_decode_is_linear() {
        let geom = BinGeometry { bins: 11, vmax: 10.0 };
        let a = hlgauss_encode(3.0, &geom).unwrap();
        let b = hlgauss_encode(-7.0, &geom).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
        let lhs = hlgauss_decode(&mix, &geom);
        let rhs = 0.5 * hlgauss_decode(&a, &geom) + 0.5 * hlgauss_decode(&b, &geom);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_bitwise() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = AgentParams::init(&cfg, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("agent");
        save_checkpoint(&stem, &params, &cfg).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(&stem).unwrap();
        assert_eq!(loaded_cfg, cfg);
        for ((name_a, store_a), (name_b, store_b)) in params.stores().iter().zip(loaded.stores()) {
            assert_eq!(*name_a, name_b);
            for (pname, mat) in store_a.iter() {
                let other = store_b.get(pname).unwrap();
                assert_eq!(mat.data, other.data);
                assert!(mat.same_shape(other));
            }
            assert_eq!(store_a.len(), store_b.len());
        }
    }

    #[test]
    fn checkpoint_rejects_tampered_manifest() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = AgentParams::init(&cfg, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("agent");
        save_checkpoint(&stem, &params, &cfg).unwrap();
        let json = std::fs::read_to_string(stem.with_extension("json")).unwrap();
        std::fs::write(stem.with_extension("json"), json.replace("\"hidden\": 16", "\"hidden\": 32"))
            .unwrap();
        assert!(load_checkpoint(&stem).is_err());
    }
}
