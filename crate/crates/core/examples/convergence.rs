//! Embedding error shrinks with batch size; compares the empirical knee with
//! the sample-size bound.

use gp_isomap::cli::experiments::{convergence_run, reference_threshold};
use gp_isomap::evaluation::{theoretical_threshold, ThresholdParams};

fn main() -> gp_isomap::Result<()> {
    let run = convergence_run(&[0, 1], &[100, 200, 400, 800], 12)?;
    for (n, e) in run.sizes.iter().zip(&run.mean) {
        println!("n={n:4}  error {e:.4}");
    }
    println!("empirical n0 {:?}", run.empirical_n0);

    let base = reference_threshold();
    println!("bound {:.0}", run.theoretical_n0);
    for delta in [0.05, 0.0903, 0.2] {
        let n0 = theoretical_threshold(&ThresholdParams { delta, ..base.clone() })?;
        println!("  delta {delta:6}: {n0:.0}");
    }
    Ok(())
}
