//! Seed-pinned synthetic harnesses shared by the `verify`, `convergence` and
//! `equivalence` subcommands.

use std::sync::Arc;

use serde::Serialize;

use crate::data::{gen_swiss_roll, GaussianMode, SwissRoll, SwissRollParams};
use crate::error::Result;
use crate::evaluation::{
    convergence_curve, equivalence_test, euclidean_kernel_baseline, slope, spearman, theoretical_threshold,
    EquivalencePoint, ThresholdParams,
};
use crate::geometry::{build_knn_graph, geodesic_distances, stream_geodesics, GraphOptions};
use crate::gp::{fit_hyperparams, HyperGrid};
use crate::spectral::isomap_embed;

/// One broad Gaussian patch on the default roll.
pub fn single_patch(seed: u64, n: usize) -> SwissRollParams {
    SwissRollParams {
        roll: SwissRoll::default(),
        modes: vec![GaussianMode::isotropic([12.0, 0.0], 2.0)],
        n_per_mode: n,
        seed,
    }
}

/// A patch long enough in `u` to wrap most of a turn, so Euclidean and
/// geodesic distances disagree strongly.
pub fn curved_patch(seed: u64, n: usize) -> SwissRollParams {
    SwissRollParams {
        roll: SwissRoll::default(),
        modes: vec![GaussianMode { mean: [15.0, 0.0], cov: [[36.0, 0.0], [0.0, 4.0]] }],
        n_per_mode: n,
        seed,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRun {
    pub max_geodesic: f64,
    pub sigma_n_sq: f64,
    pub multipliers: Vec<f64>,
    pub points: Vec<EquivalencePoint>,
}

/// `batch` points embedded, `stream` further points mapped both ways, at
/// `ℓ = m·max geodesic` for each multiplier `m`.
pub fn equivalence_run(seed: u64, batch: usize, stream: usize, k_graph: usize, multipliers: &[f64]) -> Result<EquivalenceRun> {
    let ds = gen_swiss_roll(&single_patch(seed, batch + stream))?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let b = ds.cloud.select(&rows[..batch])?;
    let s = ds.cloud.select(&rows[batch..])?;
    let geo = geodesic_distances(&build_knn_graph(&b, k_graph, GraphOptions::default())?)?;
    let emb = Arc::new(isomap_embed(&geo, 2)?);
    let sigma_n_sq = fit_hyperparams(emb.clone(), &HyperGrid::default_for(&geo))?.sigma_n_sq;
    let gsq = s.points().map(|p| stream_geodesics(p, &b, &geo, k_graph)).collect::<Result<Vec<_>>>()?;
    let gmax = geo.max_distance();
    let ells: Vec<f64> = multipliers.iter().map(|m| m * gmax).collect();
    let points = equivalence_test(&emb, &geo, sigma_n_sq, &gsq, &ells)?;
    Ok(EquivalenceRun { max_geodesic: gmax, sigma_n_sq, multipliers: multipliers.to_vec(), points })
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRun {
    pub fractions: Vec<f64>,
    /// Per seed, per fraction.
    pub geodesic: Vec<Vec<f64>>,
    pub euclidean: Vec<Vec<f64>>,
    pub geodesic_mean: Vec<f64>,
    pub euclidean_mean: Vec<f64>,
    pub geodesic_spearman: f64,
    pub euclidean_final_over_initial: f64,
    pub euclidean_slope: f64,
    /// Euclidean over geodesic error at the fraction closest to one half.
    pub ratio_at_half: f64,
}

pub fn baseline_run(seeds: &[u64], n: usize, k_graph: usize) -> Result<BaselineRun> {
    let fractions: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let (mut geodesic, mut euclidean) = (Vec::new(), Vec::new());
    for &seed in seeds {
        let ds = gen_swiss_roll(&curved_patch(seed, n))?;
        let truth = ds.truth.as_ref().expect("synthetic data has truth");
        let rows: Vec<usize> = (0..n).collect();
        let (mut g, mut e) = (Vec::new(), Vec::new());
        for &f in &fractions {
            let nb = (f * n as f64).round() as usize;
            let errs = euclidean_kernel_baseline(
                &ds.cloud.select(&rows[..nb])?,
                &ds.cloud.select(&rows[nb..])?,
                &truth.columns(nb, n - nb).into_owned(),
                2,
                k_graph,
            )?;
            g.push(errs.geodesic);
            e.push(errs.euclidean);
        }
        geodesic.push(g);
        euclidean.push(e);
    }
    let mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..fractions.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
    };
    let (gm, em) = (mean(&geodesic), mean(&euclidean));
    let half = fractions.iter().position(|&f| (f - 0.5).abs() < 1e-9).expect("0.5 is on the grid");
    Ok(BaselineRun {
        geodesic_spearman: spearman(&fractions, &gm),
        euclidean_final_over_initial: em[em.len() - 1] / em[0],
        euclidean_slope: slope(&fractions, &em),
        ratio_at_half: em[half] / gm[half],
        fractions,
        geodesic,
        euclidean,
        geodesic_mean: gm,
        euclidean_mean: em,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRun {
    pub sizes: Vec<usize>,
    pub k_graph: usize,
    /// Per seed, per size.
    pub errors: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Smallest size whose mean error is within 1.5× of the largest size's.
    pub empirical_n0: Option<usize>,
    pub theoretical_n0: f64,
}

/// The reference inputs for the batch-size bound on a 3-D manifold.
pub fn reference_threshold() -> ThresholdParams {
    ThresholdParams { alpha_tilde: 1.0, mu: 1.0, delta: 0.0903, eta_d: 4.1888, ball_count: 520.0, dim: 3 }
}

pub fn convergence_run(seeds: &[u64], sizes: &[usize], k_graph: usize) -> Result<ConvergenceRun> {
    let mut errors = Vec::new();
    for &seed in seeds {
        let curve = convergence_curve(&single_patch(seed, 0), sizes, 2, k_graph)?;
        errors.push(curve.into_iter().map(|(_, e)| e).collect::<Vec<_>>());
    }
    let mean: Vec<f64> = (0..sizes.len()).map(|j| errors.iter().map(|r| r[j]).sum::<f64>() / errors.len() as f64).collect();
    let last = *mean.last().unwrap_or(&f64::NAN);
    let empirical_n0 = sizes.iter().zip(&mean).find(|(_, &e)| e <= 1.5 * last).map(|(&n, _)| n);
    Ok(ConvergenceRun {
        sizes: sizes.to_vec(),
        k_graph,
        errors,
        mean,
        empirical_n0,
        theoretical_n0: theoretical_threshold(&reference_threshold())?,
    })
}
