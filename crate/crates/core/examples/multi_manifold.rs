//! Separate patches get their own Isomap and GP; a ridge-regularised affine
//! map per patch stitches them into one global space.

use gp_isomap::data::{gen_swiss_roll, GaussianMode, SwissRoll, SwissRollParams};
use gp_isomap::manifold::{batch_phase, BatchParams};
use gp_isomap::streaming::score_point;

fn main() -> gp_isomap::Result<()> {
    let ds = gen_swiss_roll(&SwissRollParams {
        roll: SwissRoll::default(),
        modes: [[8.0, 0.0], [22.0, 0.0], [15.0, 10.0]].iter().map(|&c| GaussianMode::isotropic(c, 0.8)).collect(),
        n_per_mode: 300,
        seed: 4,
    })?;
    let atlas = batch_phase(&ds.cloud, &BatchParams { eps: Some(0.6), ..Default::default() })?;
    println!("{} clusters, sizes {:?}, {} support points", atlas.p(), atlas.assignment.sizes(), atlas.support.len());
    for (c, t) in atlas.transforms.iter().enumerate() {
        let r = t.rotation();
        println!("cluster {c}: ell {:.1}, offset {:?}, |R| {:.3}", atlas.clusters[c].gp.ell, t.offset().as_slice(), r.norm());
    }
    for i in [0, 300, 600] {
        let (scores, chosen, assigned, global) = score_point(&atlas, ds.cloud.point(i), 1e-3)?;
        let vars: Vec<String> = scores.iter().map(|s| format!("{:.1e}", s.variance)).collect();
        println!("point {i}: variances [{}] -> cluster {chosen}, assigned {assigned}, global {global:?}", vars.join(", "));
    }
    Ok(())
}
