//! Procrustes alignment, the GP versus S-Isomap equivalence harness, the
//! Euclidean-kernel baseline, convergence curves, and the batch-size bound.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{gen_swiss_roll, SwissRollParams};
use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_graph, double_center, geodesic_distances, squared_euclidean, stream_geodesics, GeodesicSet,
    GraphOptions, PointCloud,
};
use crate::gp::{fit_hyperparams, gp_predict, GpModel, HyperGrid};
use crate::spectral::{isomap_embed, Embedding};
use crate::streaming::{s_isomap_scaled, SIsomapVariant};

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    c
}

/// Residual of the best similarity fit `s·R·B + t ≈ A` (reflections allowed),
/// relative to the spread of `A`. Both inputs are `d × m`.
pub fn procrustes_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.ncols() < 2 {
        return Err(Error::InvalidInput("Procrustes needs at least two points".into()));
    }
    let (ac, bc) = (centered(a), centered(b));
    let (na, nb) = (ac.norm(), bc.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("a configuration collapses to a single point".into()));
    }
    let svd = (&ac * bc.transpose()).svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rot = u * v_t;
    let s = svd.singular_values.sum() / (nb * nb);
    Ok((ac - rot * bc * s).norm() / na)
}

/// Equivalence series between GP means and the scaled S-Isomap mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalencePoint {
    pub ell: f64,
    pub error: f64,
}

/// For each `ℓ`, maps every stream point with the raw GP mean (noise fixed
/// at `sigma_n_sq`) and with `√λᵢqᵢᵀf`, and reports their Procrustes error.
pub fn equivalence_test(
    embedding: &Arc<Embedding>,
    geo: &GeodesicSet,
    sigma_n_sq: f64,
    stream_gsq: &[Vec<f64>],
    ells: &[f64],
) -> Result<Vec<EquivalencePoint>> {
    let m = stream_gsq.len();
    let d = embedding.dim();
    let mut iso = DMatrix::zeros(d, m);
    for (k, g) in stream_gsq.iter().enumerate() {
        iso.set_column(k, &s_isomap_scaled(embedding, geo, g, SIsomapVariant::Simple)?);
    }
    ells.iter()
        .map(|&ell| {
            let model = GpModel::new(embedding.clone(), ell, sigma_n_sq)?;
            let mut gp = DMatrix::zeros(d, m);
            for (k, g) in stream_gsq.iter().enumerate() {
                gp.set_column(k, &gp_predict(&model, g)?.mean);
            }
            Ok(EquivalencePoint { ell, error: procrustes_error(&iso, &gp)? })
        })
        .collect()
}

/// Distance used to build both the batch kernel and the stream
/// cross-covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMetric {
    Geodesic,
    Euclidean,
}

/// Pairwise Euclidean distances packaged like graph geodesics.
pub fn euclidean_distances(cloud: &PointCloud) -> GeodesicSet {
    let n = cloud.len();
    let gsq = DMatrix::from_fn(n, n, |i, j| squared_euclidean(cloud.point(i), cloud.point(j)));
    let g = gsq.map(f64::sqrt);
    let b = double_center(&gsq);
    GeodesicSet { g, gsq, b, vertices: (0..n).collect() }
}

/// Single-manifold GP mapping of `stream` from `batch`; returns the
/// calibrated stream coordinates, `d × m`.
pub fn gp_map_stream(batch: &PointCloud, stream: &PointCloud, metric: KernelMetric, d: usize, k_graph: usize) -> Result<DMatrix<f64>> {
    let geo = match metric {
        KernelMetric::Geodesic => geodesic_distances(&build_knn_graph(batch, k_graph, GraphOptions::default())?)?,
        KernelMetric::Euclidean => euclidean_distances(batch),
    };
    let embedding = Arc::new(isomap_embed(&geo, d)?);
    let mut model = fit_hyperparams(embedding, &HyperGrid::default_for(&geo))?;
    model.calibrate_output(&geo);
    let mut out = DMatrix::zeros(d, stream.len());
    for (k, p) in stream.points().enumerate() {
        let gsq = match metric {
            KernelMetric::Geodesic => stream_geodesics(p, batch, &geo, k_graph)?,
            KernelMetric::Euclidean => batch.points().map(|q| squared_euclidean(p, q)).collect(),
        };
        out.set_column(k, &gp_predict(&model, &gsq)?.coords);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineErrors {
    pub geodesic: f64,
    pub euclidean: f64,
}

/// Procrustes error against ground truth of the stream predictions made
/// with the geodesic kernel and with the Euclidean kernel. `truth` is the
/// `d × m` ground truth of the stream points.
pub fn euclidean_kernel_baseline(batch: &PointCloud, stream: &PointCloud, truth: &DMatrix<f64>, d: usize, k_graph: usize) -> Result<BaselineErrors> {
    let geodesic = procrustes_error(truth, &gp_map_stream(batch, stream, KernelMetric::Geodesic, d, k_graph)?)?;
    let euclidean = procrustes_error(truth, &gp_map_stream(batch, stream, KernelMetric::Euclidean, d, k_graph)?)?;
    Ok(BaselineErrors { geodesic, euclidean })
}

/// Isomap on an `n`-point draw for each size; Procrustes error against the
/// generator's ground truth. `generator.n_per_mode` is overridden by each
/// size split evenly over the modes.
pub fn convergence_curve(generator: &SwissRollParams, sizes: &[usize], d: usize, k_graph: usize) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            let params = SwissRollParams { n_per_mode: n / generator.modes.len().max(1), ..generator.clone() };
            let ds = gen_swiss_roll(&params)?;
            let geo = geodesic_distances(&build_knn_graph(&ds.cloud, k_graph, GraphOptions::default())?)?;
            let emb = isomap_embed(&geo, d)?;
            let truth = ds.truth.as_ref().expect("synthetic data has truth");
            Ok((ds.len(), procrustes_error(truth, &emb.coords)?))
        })
        .collect()
}

/// Inputs to the batch-size bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    /// Sampling probability `α̃`.
    pub alpha_tilde: f64,
    /// Failure probability `μ`.
    pub mu: f64,
    /// Sampling radius `δ`.
    pub delta: f64,
    /// Volume of the unit `d`-ball.
    pub eta_d: f64,
    /// `V / Ṽ(δ/4)`: how many `δ/4`-balls cover the manifold.
    pub ball_count: f64,
    pub dim: u32,
}

impl ThresholdParams {
    /// `δ = λ₂ε/4` for graph radius `ε` and distance slack `λ₂`.
    pub fn delta_from_graph(lambda2: f64, epsilon: f64) -> f64 {
        lambda2 * epsilon / 4.0
    }

    /// Volume of the unit ball in `dim` dimensions.
    pub fn unit_ball_volume(dim: u32) -> f64 {
        let h = dim as f64 / 2.0;
        std::f64::consts::PI.powf(h) / gamma(h + 1.0)
    }
}

fn gamma(x: f64) -> f64 {
    // x is a positive multiple of ½ here.
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut k = 0.5;
        while k + 1.0 <= x + 1e-12 {
            g *= k;
            k += 1.0;
        }
        g
    }
}

/// `n₀ = (1/α̃)·ln(ball_count/μ) / (η_d·(δ/2)^d)`.
pub fn theoretical_threshold(p: &ThresholdParams) -> Result<f64> {
    for (name, v) in [("alpha_tilde", p.alpha_tilde), ("mu", p.mu), ("delta", p.delta), ("eta_d", p.eta_d), ("ball_count", p.ball_count)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    if p.alpha_tilde > 1.0 || p.mu > 1.0 {
        return Err(Error::InvalidInput("alpha_tilde and mu must lie in (0, 1]".into()));
    }
    let volume = p.eta_d * (p.delta / 2.0).powi(p.dim as i32);
    if !(volume > 0.0) {
        return Err(Error::Degenerate(format!("sampling-ball volume underflows to {volume}")));
    }
    Ok((p.ball_count / p.mu).ln() / (p.alpha_tilde * volume))
}

/// Greedy cover: scan points in order and open a new ball at every point not
/// yet within `radius` of an existing centre.
pub fn greedy_ball_count(cloud: &PointCloud, radius: f64) -> usize {
    let r2 = radius * radius;
    let mut centres: Vec<usize> = Vec::new();
    for (i, p) in cloud.points().enumerate() {
        if !centres.iter().any(|&c| squared_euclidean(p, cloud.point(c)) <= r2) {
            centres.push(i);
        }
    }
    centres.len()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Columns of `m` as vectors; handy for per-point comparisons.
pub fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}
