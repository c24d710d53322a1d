//! Linear TD stability in miniature: the bundled two-state MDP whose
//! off-policy gradient flow blows up, and the same MDP evaluated on-policy,
//! where the flow settles onto the exact linear fixed point.

use madtd::cli::stability_report;
use madtd::linstab::{
    divergent_two_state, flow_fixed_point, flow_system, onpolicy_two_state,
};

fn main() {
    let off = divergent_two_state();
    let report = stability_report(&off, 0.01).expect("analysis");
    println!("off-policy two-state example");
    println!("  min eigenvalue of symmetrized key matrix: {:+.4}", report.min_eig_key);
    println!("    on-policy part: {:+.4}", report.min_eig_onpolicy);
    println!("    residual part:  {:+.4}", report.min_eig_residual);
    println!("  gradient flow diverged: {}", report.diverged);
    let series = &report.theta_norm_series;
    println!(
        "  ||theta||: {:.2} -> {:.2} -> {:.2e}",
        series[0],
        series[series.len() / 2],
        series[series.len() - 1]
    );

    let on = onpolicy_two_state();
    let report = stability_report(&on, 0.01).expect("analysis");
    println!("\nsame MDP, behavior = target");
    println!("  min eigenvalue of symmetrized key matrix: {:+.4}", report.min_eig_key);
    println!("  gradient flow diverged: {}", report.diverged);

    let occ = madtd::linstab::discounted_occupancy(&on.mdp, &on.behavior).expect("occupancy");
    let (a, b) = flow_system(&on.mdp, &[occ], &on.target, &on.features, None).expect("system");
    let theta_star = flow_fixed_point(&a, &b).expect("fixed point");
    println!(
        "  flow endpoint {:.6} vs direct linear solve {:.6}",
        report.final_theta[0], theta_star[0]
    );
}
