//! Streaming phase: score each arriving point against every cluster's GP,
//! embed it through the lowest-variance cluster, buffer the points no
//! cluster explains, and rebuild the atlas once the buffer fills.

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{stream_geodesics, GeodesicSet, PointCloud};
use crate::gp::gp_predict;
use crate::manifold::{batch_phase, ManifoldAtlas};
use crate::spectral::Embedding;

/// Which right-hand side `f` the S-Isomap mapping uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SIsomapVariant {
    /// `fᵢ = ½(mean_j g²ᵢⱼ − g²ᵢ*)`.
    Simple,
    /// The fully double-centred version, which also subtracts the mean of
    /// the stream point's squared distances and adds back the grand mean.
    Incremental,
}

pub fn s_isomap_rhs(geo: &GeodesicSet, gsq_star: &[f64], variant: SIsomapVariant) -> Result<DVector<f64>> {
    let n = geo.len();
    if gsq_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gsq_star.len() });
    }
    let rows = geo.row_means_sq();
    let mut f = DVector::from_fn(n, |i, _| 0.5 * (rows[i] - gsq_star[i]));
    if variant == SIsomapVariant::Incremental {
        let grand = rows.iter().sum::<f64>() / n as f64;
        let star = gsq_star.iter().sum::<f64>() / n as f64;
        f.add_scalar_mut(0.5 * (star - grand));
    }
    Ok(f)
}

/// Least-squares solution of `XᵀX* = f`, i.e. `x*ᵢ = qᵢᵀf / √λᵢ`.
pub fn s_isomap_map(embedding: &Embedding, geo: &GeodesicSet, gsq_star: &[f64], variant: SIsomapVariant) -> Result<DVector<f64>> {
    let f = s_isomap_rhs(geo, gsq_star, variant)?;
    Ok(project(embedding, &f, |l| 1.0 / l.sqrt()))
}

/// The unnormalised form `√λᵢ·qᵢᵀf`. It differs from [`s_isomap_map`] by a
/// factor `λᵢ` per axis and is what the GP mean approaches for large `ℓ`.
pub fn s_isomap_scaled(embedding: &Embedding, geo: &GeodesicSet, gsq_star: &[f64], variant: SIsomapVariant) -> Result<DVector<f64>> {
    let f = s_isomap_rhs(geo, gsq_star, variant)?;
    Ok(project(embedding, &f, f64::sqrt))
}

fn project(embedding: &Embedding, f: &DVector<f64>, weight: impl Fn(f64) -> f64) -> DVector<f64> {
    let mut x = embedding.eigvecs.tr_mul(f);
    for (xi, l) in x.iter_mut().zip(embedding.eigvals.iter()) {
        *xi *= weight(*l);
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterScore {
    /// Calibrated GP mean in the cluster's embedding coordinates.
    pub coords: Vec<f64>,
    pub variance: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamVerdict {
    /// Position in the stream.
    pub index: usize,
    pub id: u64,
    pub scores: Vec<ClusterScore>,
    pub chosen: usize,
    pub variance: f64,
    pub assigned: bool,
    /// Global coordinates; present only when assigned.
    pub global: Option<Vec<f64>>,
    /// Re-emitted after a relearn absorbed this point.
    pub relearned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelearnEvent {
    /// Stream index of the point whose buffering triggered the relearn.
    pub index: usize,
    pub buffered: usize,
    pub batch_size: usize,
    pub clusters_before: usize,
    pub clusters_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub sigma_t: f64,
    pub n_s: usize,
}

/// Mutable part of the streaming phase.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    /// Stream indices of unassigned points awaiting a relearn.
    pub buffer: Vec<usize>,
    pub events: Vec<RelearnEvent>,
}

#[derive(Debug)]
pub struct StreamOutcome {
    pub verdicts: Vec<StreamVerdict>,
    pub atlas: ManifoldAtlas,
    pub state: StreamState,
    /// Set when a relearn failed; the stream stopped at that point.
    pub error: Option<Error>,
}

impl StreamOutcome {
    /// The first verdict issued for each stream point, in arrival order.
    pub fn first_verdicts(&self) -> Vec<&StreamVerdict> {
        self.verdicts.iter().filter(|v| !v.relearned).collect()
    }
}

/// Scores one point against every cluster and picks the one with the
/// smallest variance (lowest index on ties).
pub fn score_point(atlas: &ManifoldAtlas, point: &[f64], sigma_t: f64) -> Result<(Vec<ClusterScore>, usize, bool, Option<Vec<f64>>)> {
    let mut scores = Vec::with_capacity(atlas.p());
    for cl in &atlas.clusters {
        let gsq = stream_geodesics(point, &cl.cloud, &cl.geo, atlas.params.k_graph)?;
        let p = gp_predict(&cl.gp, &gsq)?;
        scores.push(ClusterScore { coords: p.coords.iter().copied().collect(), variance: p.variance, clamped: p.clamped });
    }
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.variance.abs() < scores[chosen].variance.abs() {
            chosen = i;
        }
    }
    let assigned = scores[chosen].variance <= sigma_t;
    let global = assigned.then(|| {
        let x = DVector::from_column_slice(&scores[chosen].coords);
        atlas.transforms[chosen].apply(&x).iter().copied().collect()
    });
    Ok((scores, chosen, assigned, global))
}

fn verdict(atlas: &ManifoldAtlas, stream: &PointCloud, index: usize, sigma_t: f64, relearned: bool) -> Result<StreamVerdict> {
    let (scores, chosen, assigned, global) = score_point(atlas, stream.point(index), sigma_t)?;
    Ok(StreamVerdict {
        index,
        id: stream.ids()[index],
        variance: scores[chosen].variance,
        scores,
        chosen,
        assigned,
        global,
        relearned,
    })
}

/// Runs the streaming phase. Stream ids must not collide with batch ids,
/// since buffered points are appended to the batch on relearn.
pub fn process_stream(atlas: ManifoldAtlas, stream: &PointCloud, config: StreamConfig) -> Result<StreamOutcome> {
    if config.n_s == 0 {
        return Err(Error::InvalidInput("n_s must be positive".into()));
    }
    if !(config.sigma_t >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma_t must be non-negative, got {}", config.sigma_t)));
    }
    if stream.dim() != atlas.batch.dim() {
        return Err(Error::DimensionMismatch { expected: atlas.batch.dim(), got: stream.dim() });
    }
    let mut atlas = atlas;
    let mut state = StreamState::default();
    let mut verdicts = Vec::with_capacity(stream.len());
    for index in 0..stream.len() {
        let v = verdict(&atlas, stream, index, config.sigma_t, false)?;
        let assigned = v.assigned;
        verdicts.push(v);
        if assigned {
            continue;
        }
        state.buffer.push(index);
        if state.buffer.len() < config.n_s {
            continue;
        }
        let absorbed = match stream.select(&state.buffer).and_then(|b| atlas.batch.concat(&b)) {
            Ok(batch) => batch,
            Err(e) => return Ok(StreamOutcome { verdicts, atlas, state, error: Some(e) }),
        };
        let rebuilt = match batch_phase(&absorbed, &atlas.params) {
            Ok(a) => a,
            Err(e) => return Ok(StreamOutcome { verdicts, atlas, state, error: Some(e) }),
        };
        let event = RelearnEvent {
            index,
            buffered: state.buffer.len(),
            batch_size: absorbed.len(),
            clusters_before: atlas.p(),
            clusters_after: rebuilt.p(),
        };
        info!("relearn at stream index {index}: {} clusters -> {}", event.clusters_before, event.clusters_after);
        atlas = rebuilt;
        for &b in &state.buffer {
            verdicts.push(verdict(&atlas, stream, b, config.sigma_t, true)?);
        }
        state.buffer.clear();
        state.events.push(event);
    }
    Ok(StreamOutcome { verdicts, atlas, state, error: None })
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// `σₜ` as the `q`-th percentile of chosen-cluster variances over held-out
/// in-distribution points.
pub fn calibrate_threshold(atlas: &ManifoldAtlas, validation: &PointCloud, q: f64) -> Result<f64> {
    let vars = validation
        .points()
        .map(|p| score_point(atlas, p, f64::INFINITY).map(|(s, c, _, _)| s[c].variance))
        .collect::<Result<Vec<_>>>()?;
    percentile(&vars, q).ok_or_else(|| Error::InvalidInput("calibration needs a non-empty validation set and q in [0, 100]".into()))
}

/// Trailing-window mean: entry `t` averages `values[t+1-window..=t]`
/// (fewer at the start).
pub fn variance_trace(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|t| {
            let w = &values[(t + 1).saturating_sub(window)..=t];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_knn_graph, geodesic_distances, GraphOptions};
    use crate::manifold::BatchParams;
    use crate::spectral::isomap_embed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize, seed: u64, offset: f64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n).flat_map(|_| [offset + rng.gen_range(0.0..3.0), rng.gen_range(0.0..2.0), 1.0]).collect();
        PointCloud::from_rows(data, 3).unwrap()
    }

    fn with_ids(cloud: &PointCloud, first: u64) -> PointCloud {
        let ids = (first..first + cloud.len() as u64).collect();
        PointCloud::new(cloud.as_slice().to_vec(), cloud.dim(), ids, None).unwrap()
    }

    #[test]
    fn duplicate_of_batch_point_maps_to_its_coordinates() {
        // A fully connected graph keeps geodesics Euclidean.
        let cloud = plane(15, 1, 0.0);
        let geo = geodesic_distances(&build_knn_graph(&cloud, 14, GraphOptions::default()).unwrap()).unwrap();
        let emb = isomap_embed(&geo, 2).unwrap();
        let j = 4;
        let gsq: Vec<f64> = geo.gsq.column(j).iter().copied().collect();
        for variant in [SIsomapVariant::Simple, SIsomapVariant::Incremental] {
            let x = s_isomap_map(&emb, &geo, &gsq, variant).unwrap();
            assert!((x - emb.coords.column(j)).amax() < 1e-6);
        }
    }

    #[test]
    fn zero_rhs_maps_to_origin() {
        let cloud = plane(12, 2, 0.0);
        let geo = geodesic_distances(&build_knn_graph(&cloud, 11, GraphOptions::default()).unwrap()).unwrap();
        let emb = isomap_embed(&geo, 2).unwrap();
        let gsq = geo.row_means_sq();
        assert!(s_isomap_map(&emb, &geo, &gsq, SIsomapVariant::Simple).unwrap().amax() < 1e-12);
    }

    #[test]
    fn trace_examples() {
        assert_eq!(variance_trace(&[0.5; 6], 3), vec![0.5; 6]);
        let raw = [0.1, 0.7, 0.3, 0.9];
        assert_eq!(variance_trace(&raw, 1), raw.to_vec());
        let (m, w) = (40, 10);
        let step: Vec<f64> = (0..100).map(|t| if t < m { 0.0 } else { 1.0 }).collect();
        let trace = variance_trace(&step, w);
        let cross = trace.iter().position(|&v| v >= 0.5).unwrap();
        assert!(cross >= m && cross < m + w);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert_eq!(percentile(&v, 12.5), Some(1.5));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn first_unassigned_point_relearns_when_n_s_is_one() {
        let batch = with_ids(&plane(60, 3, 0.0), 0);
        let atlas = batch_phase(&batch, &BatchParams::default()).unwrap();
        let stream = with_ids(&plane(5, 4, 30.0), 1000);
        let out = process_stream(atlas, &stream, StreamConfig { sigma_t: 0.5, n_s: 1 }).unwrap();
        assert!(out.error.is_none());
        assert_eq!(out.state.events[0].index, 0);
        assert_eq!(out.state.events[0].batch_size, 61);
        assert!(out.verdicts[1].relearned && out.verdicts[1].index == 0);
        assert!(out.state.buffer.is_empty());
    }

    #[test]
    fn infinite_threshold_never_buffers() {
        let batch = with_ids(&plane(60, 5, 0.0), 0);
        let atlas = batch_phase(&batch, &BatchParams::default()).unwrap();
        let stream = with_ids(&plane(10, 6, 30.0), 1000);
        let out = process_stream(atlas, &stream, StreamConfig { sigma_t: f64::INFINITY, n_s: 1 }).unwrap();
        assert!(out.state.events.is_empty());
        assert!(out.verdicts.iter().all(|v| v.assigned && v.global.is_some()));
    }

    #[test]
    fn far_points_have_higher_variance_than_near_ones() {
        let batch = with_ids(&plane(80, 7, 0.0), 0);
        let atlas = batch_phase(&batch, &BatchParams::default()).unwrap();
        let near = score_point(&atlas, &[1.5, 1.0, 1.0], 1.0).unwrap();
        let far = score_point(&atlas, &[40.0, 1.0, 1.0], 1.0).unwrap();
        assert!(far.0[0].variance > near.0[0].variance);
        assert!(near.2 && !far.2);
    }
}
