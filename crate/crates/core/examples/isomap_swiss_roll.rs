//! Embed a Swiss-roll patch with Isomap and compare against the unrolled
//! coordinates it was sampled from.

use gp_isomap::data::{gen_swiss_roll, GaussianMode, SwissRoll, SwissRollParams};
use gp_isomap::evaluation::procrustes_error;
use gp_isomap::geometry::{build_knn_graph, geodesic_distances, GraphOptions};
use gp_isomap::spectral::isomap_embed;

fn main() -> gp_isomap::Result<()> {
    let ds = gen_swiss_roll(&SwissRollParams {
        roll: SwissRoll::default(),
        modes: vec![GaussianMode::isotropic([12.0, 0.0], 2.0)],
        n_per_mode: 800,
        seed: 3,
    })?;
    for k in [6, 8, 12] {
        let graph = build_knn_graph(&ds.cloud, k, GraphOptions::default())?;
        let geo = geodesic_distances(&graph)?;
        let emb = isomap_embed(&geo, 2)?;
        let err = procrustes_error(ds.truth.as_ref().unwrap(), &emb.coords)?;
        println!(
            "k={k:2}  edges={:5}  eigenvalues=[{:.1}, {:.1}]  procrustes={err:.4}",
            graph.edge_count(),
            emb.eigvals[0],
            emb.eigvals[1]
        );
    }
    Ok(())
}
