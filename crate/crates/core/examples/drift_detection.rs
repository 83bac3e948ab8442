//! Three known modes form the batch; a fourth appears mid-stream. Its points
//! get high predictive variance, fill the buffer and trigger a relearn, after
//! which they are assigned.

use gp_isomap::cli::commands::{execute_run, generate};
use gp_isomap::cli::config::RunConfig;

fn main() {
    let cfg = RunConfig { n_per_mode: 600, known_per_mode: 250, unknown_count: 250, followup_count: 250, n_s: 200, ..Default::default() };
    let g = generate(&cfg).expect("generate");
    let res = execute_run(&cfg, &g).expect("run");
    let m = &res.metrics;
    println!("clusters {:?}, sigma_t {:.2e}", m.cluster_sizes, m.sigma_t);
    println!("mean variance: known {:.2e}, unknown {:.2e}", m.known_mean_variance, m.unknown_mean_variance.unwrap_or(f64::NAN));
    println!("drift at {:?}, relearns at {:?}", m.drift_onset, m.relearn_indices);
    println!("unknown assigned after relearn {:?}", m.unknown_assigned_after_relearn);
    let trace: Vec<f64> = res.outcome.first_verdicts().iter().map(|v| v.variance).collect();
    for i in (0..trace.len()).step_by(50) {
        let bar = ((trace[i].max(1e-6).log10() + 6.0) * 8.0) as usize;
        println!("{i:5} {}", "#".repeat(bar));
    }
}
