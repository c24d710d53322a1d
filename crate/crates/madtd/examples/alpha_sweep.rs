//! A miniature sweep over the model-data fraction alpha, aggregated with
//! bootstrap confidence intervals — the same machinery as `madtd sweep`.

use madtd::cli::{cmd_sweep, SweepArgs, SweepGrid};
use madtd::nets::NetConfig;
use madtd::trainer::TrainConfig;

fn main() {
    let base = TrainConfig {
        env_id: "pendulum_swingup".to_string(),
        utd: 2,
        batch_size: 32,
        steps_total: 1100,
        init_random_steps: 300,
        mc_episodes: 0,
        net: NetConfig {
            obs_dim: 3,
            act_dim: 1,
            hidden: 16,
            latent: 8,
            group_size: 2,
            bins: 21,
            vmax: 50.0,
        },
        ..TrainConfig::default()
    };
    let grid = SweepGrid {
        base: Some(base),
        alpha: vec![0.0, 0.05],
        seeds: vec![0, 1, 2],
        ..SweepGrid::default()
    };

    let dir = std::env::temp_dir().join("madtd_example_sweep");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("dir");
    let grid_path = dir.join("grid.json");
    std::fs::write(&grid_path, serde_json::to_string_pretty(&grid).expect("grid")).expect("write");

    println!("running 2 alphas x 3 seeds ({} steps each) ...", 1100);
    let outcome = cmd_sweep(&SweepArgs {
        grid: grid_path,
        runs_dir: Some(dir.clone()),
        name: "alpha_demo".to_string(),
    })
    .expect("sweep");

    println!("\n{:<28} {:>5} {:>12} {:>22}", "config", "runs", "mean return", "95% bootstrap CI");
    for row in &outcome.rows {
        println!(
            "{:<28} {:>5} {:>12.2} [{:>8.2}, {:>8.2}]",
            row.label, row.n_ok, row.mean_final_return, row.return_ci_lo, row.return_ci_hi
        );
    }
    println!("\nfull tables: {}/cells.csv and aggregate.csv", outcome.dir.display());
}
