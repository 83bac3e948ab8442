//! Geodesic against Euclidean squared-exponential kernels for mapping stream
//! points, as the batch share of a curved patch grows.

use gp_isomap::cli::experiments::baseline_run;

fn main() -> gp_isomap::Result<()> {
    let seeds: Vec<u64> = (0..2).collect();
    let run = baseline_run(&seeds, 600, 8)?;
    println!("batch share   geodesic   euclidean");
    for (i, f) in run.fractions.iter().enumerate() {
        println!("{f:11.1}   {:8.4}   {:9.4}", run.geodesic_mean[i], run.euclidean_mean[i]);
    }
    println!("spearman(geodesic) {:.2}, euclidean final/initial {:.2}", run.geodesic_spearman, run.euclidean_final_over_initial);
    Ok(())
}
