//! A short end-to-end training run on pendulum swing-up with model-generated
//! batch mixing (alpha = 0.05, UTD 4), writing the standard artifact set.

use madtd::nets::NetConfig;
use madtd::planner::MpcConfig;
use madtd::trainer::{train, TrainConfig};

fn main() {
    let cfg = TrainConfig {
        env_id: "pendulum_swingup".to_string(),
        seed: 0,
        utd: 4,
        alpha: 0.05,
        batch_size: 64,
        steps_total: 3000,
        init_random_steps: 500,
        probe_interval: 500,
        log_interval: 100,
        net: NetConfig {
            obs_dim: 3,
            act_dim: 1,
            hidden: 32,
            latent: 16,
            group_size: 4,
            bins: 51,
            vmax: 50.0,
        },
        // without exploration noise, planned actions are what keeps the
        // replay buffer informative
        mpc: MpcConfig {
            enabled: true,
            num_samples: 64,
            iterations: 4,
            top_k: 8,
            temperature: 0.5,
        },
        ..TrainConfig::default()
    };

    let dir = std::env::temp_dir().join("madtd_example_train");
    println!("training {} env steps at UTD {} ...", cfg.steps_total, cfg.utd);
    let artifacts = train(&cfg, &dir).expect("training run");
    let s = &artifacts.summary;
    println!("episodes finished: {}", s.episode_returns.len());
    println!("episode returns:   {:?}", s.episode_returns.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>());
    for p in &s.probe_history {
        println!(
            "  step {:>5}  train {:.3}  val {:.3}  on-policy {:.3}  overestimation {:+.3}",
            p.env_step, p.train_loss, p.val_loss, p.onpolicy_loss, p.overestimation
        );
    }
    println!("artifacts:");
    println!("  {}", artifacts.metrics_path.display());
    println!("  {}", artifacts.summary_path.display());
    println!("  {}.bin / .json", artifacts.checkpoint_stem.display());
}
