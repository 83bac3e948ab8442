//! Batch phase over possibly several manifolds: cluster, embed and fit a GP
//! per cluster, then stitch the clusters into one global space through a
//! support set of cross-cluster point pairs.

use std::sync::Arc;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_graph, geodesic_distances, nearest, squared_euclidean, GeodesicSet, GraphOptions, PointCloud,
};
use crate::gp::{fit_hyperparams, GpModel, HyperGrid};
use crate::spectral::{classical_mds, isomap_embed, Embedding};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub p: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let p = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; p];
        for &l in &labels {
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(Self { labels, p })
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.p];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

pub trait Clusterer {
    fn cluster(&self, cloud: &PointCloud) -> Result<ClusterAssignment>;
}

/// Everything in one cluster.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleCluster;

impl Clusterer for SingleCluster {
    fn cluster(&self, cloud: &PointCloud) -> Result<ClusterAssignment> {
        ClusterAssignment::new(vec![0; cloud.len()])
    }
}

/// DBSCAN over Euclidean distance. Border and noise points join the cluster
/// of their nearest core point; clusters below `min_cluster_size` are
/// dissolved the same way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityClusterer {
    pub eps: f64,
    pub min_points: usize,
    pub min_cluster_size: usize,
}

impl DensityClusterer {
    pub fn new(eps: f64) -> Self {
        Self { eps, min_points: 5, min_cluster_size: 10 }
    }
}

impl Clusterer for DensityClusterer {
    fn cluster(&self, cloud: &PointCloud) -> Result<ClusterAssignment> {
        let n = cloud.len();
        if n < 2 {
            return Err(Error::InvalidInput("clustering needs at least two points".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        let eps_sq = self.eps * self.eps;
        let region = |i: usize| -> Vec<usize> {
            (0..n).filter(|&j| squared_euclidean(cloud.point(i), cloud.point(j)) <= eps_sq).collect()
        };
        let neighborhoods: Vec<Vec<usize>> = (0..n).map(region).collect();
        let core: Vec<bool> = neighborhoods.iter().map(|r| r.len() >= self.min_points).collect();

        let mut label: Vec<Option<usize>> = vec![None; n];
        let mut clusters = 0;
        for seed in 0..n {
            if !core[seed] || label[seed].is_some() {
                continue;
            }
            let id = clusters;
            clusters += 1;
            label[seed] = Some(id);
            let mut queue = vec![seed];
            while let Some(i) = queue.pop() {
                for &j in &neighborhoods[i] {
                    if core[j] && label[j].is_none() {
                        label[j] = Some(id);
                        queue.push(j);
                    }
                }
            }
        }
        if clusters == 0 {
            return Err(Error::AllNoise { eps: self.eps });
        }

        let mut sizes = vec![0usize; clusters];
        for l in label.iter().flatten() {
            sizes[*l] += 1;
        }
        let keep: Vec<bool> = sizes.iter().map(|&s| s >= self.min_cluster_size).collect();
        if !keep.iter().any(|&k| k) {
            return Err(Error::AllNoise { eps: self.eps });
        }
        let mut remap = vec![usize::MAX; clusters];
        let mut next = 0;
        for c in 0..clusters {
            if keep[c] {
                remap[c] = next;
                next += 1;
            }
        }
        let anchors: Vec<usize> = (0..n).filter(|&i| label[i].is_some_and(|l| keep[l])).collect();
        let anchor_cloud = cloud.select(&anchors)?;
        let labels = (0..n)
            .map(|i| match label[i] {
                Some(l) if keep[l] => remap[l],
                _ => {
                    let (a, _) = nearest(&anchor_cloud, cloud.point(i), 1, None)[0];
                    remap[label[anchors[a]].expect("anchors are labelled")]
                }
            })
            .collect();
        ClusterAssignment::new(labels)
    }
}

/// One cluster's batch model.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    /// Rows of the batch cloud belonging to this cluster.
    pub members: Vec<usize>,
    pub cloud: PointCloud,
    pub geo: GeodesicSet,
    pub embedding: Arc<Embedding>,
    pub gp: GpModel,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }
}

/// Affine map into the global space: `y = R·[x; 1]`, so the last column of
/// `R` is the offset `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub r: DMatrix<f64>,
}

impl Transform {
    pub fn identity(d: usize) -> Self {
        Self { r: DMatrix::identity(d, d + 1) }
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        self.r.columns(0, self.r.ncols() - 1).into_owned()
    }

    pub fn offset(&self) -> DVector<f64> {
        self.r.column(self.r.ncols() - 1).into_owned()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.r.ncols() - 1;
        self.r.columns(0, d) * x + self.r.column(d)
    }
}

/// How the length scale for predictive variance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum VarianceScale {
    /// Use the likelihood-selected `ℓ`.
    Model,
    Fixed(f64),
    /// A multiple of the median distance from a batch point to its
    /// `k_graph`-th nearest neighbour.
    KnnRadius(f64),
}

impl Default for VarianceScale {
    fn default() -> Self {
        VarianceScale::KnnRadius(2.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridSpec {
    /// Log-spaced grid around the cluster's median geodesic distance.
    #[default]
    Auto,
    Explicit { ells: Vec<f64>, noise_vars: Vec<f64> },
}


impl GridSpec {
    pub fn resolve(&self, geo: &GeodesicSet) -> HyperGrid {
        match self {
            GridSpec::Auto => HyperGrid::default_for(geo),
            GridSpec::Explicit { ells, noise_vars } => HyperGrid { ells: ells.clone(), noise_vars: noise_vars.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchParams {
    /// Density-clustering radius; `None` treats the batch as one manifold.
    pub eps: Option<f64>,
    pub min_points: usize,
    pub min_cluster_size: usize,
    pub d: usize,
    pub k_graph: usize,
    pub k_pairs: usize,
    pub l_pairs: usize,
    pub ridge: f64,
    pub grid: GridSpec,
    pub variance_scale: VarianceScale,
    pub largest_component: bool,
    /// Warn when clustering produces more clusters than this.
    pub max_clusters: usize,
}

impl Default for BatchParams {
    fn default() -> Self {
        Self {
            eps: None,
            min_points: 5,
            min_cluster_size: 10,
            d: 2,
            k_graph: 8,
            k_pairs: 16,
            l_pairs: 1,
            ridge: 0.005,
            grid: GridSpec::Auto,
            variance_scale: VarianceScale::default(),
            largest_component: false,
            max_clusters: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifoldAtlas {
    pub batch: PointCloud,
    pub assignment: ClusterAssignment,
    pub clusters: Vec<ClusterModel>,
    pub transforms: Vec<Transform>,
    pub global_dim: usize,
    pub ridge: f64,
    /// Batch rows in the support set, ascending.
    pub support: Vec<usize>,
    pub params: BatchParams,
}

impl ManifoldAtlas {
    pub fn p(&self) -> usize {
        self.clusters.len()
    }

    /// Ids of the support-set points.
    pub fn support_ids(&self) -> Vec<u64> {
        self.support.iter().map(|&i| self.batch.ids()[i]).collect()
    }

    /// Global coordinates of every batch point, `global_dim × n`.
    pub fn global_batch_coords(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.global_dim, self.batch.len());
        for (c, cl) in self.clusters.iter().enumerate() {
            for (k, &row) in cl.members.iter().enumerate() {
                let x = cl.embedding.coords.column(k).into_owned();
                out.set_column(row, &self.transforms[c].apply(&x));
            }
        }
        out
    }
}

/// For each unordered cluster pair, the `k` nearest and `l` farthest
/// cross-cluster pairs by Euclidean distance. Returns the union of the
/// points involved as ascending batch rows.
pub fn build_support_set(cloud: &PointCloud, assignment: &ClusterAssignment, k: usize, l: usize) -> Vec<usize> {
    let members: Vec<Vec<usize>> = (0..assignment.p).map(|c| assignment.members(c)).collect();
    let mut chosen = vec![false; cloud.len()];
    for a in 0..assignment.p {
        for b in a + 1..assignment.p {
            let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(members[a].len() * members[b].len());
            for &i in &members[a] {
                for &j in &members[b] {
                    pairs.push((squared_euclidean(cloud.point(i), cloud.point(j)), i, j));
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            let total = pairs.len();
            let (kk, ll) = if k + l > total {
                warn!("clusters {a} and {b} have only {total} cross pairs; using all of them instead of {k}+{l}");
                (total, 0)
            } else {
                (k, l)
            };
            for &(_, i, j) in pairs[..kk].iter().chain(&pairs[total - ll..]) {
                chosen[i] = true;
                chosen[j] = true;
            }
        }
    }
    (0..cloud.len()).filter(|&i| chosen[i]).collect()
}

/// Ridge least squares `W = GE·Aᵀ(AAᵀ + λI)⁻¹` with `A = [LDE; 1ᵀ]`.
/// `global` is `dg × m`, `local` is `d × m`; the result is `dg × (d + 1)`.
pub fn learn_transform(global: &DMatrix<f64>, local: &DMatrix<f64>, ridge: f64, cluster: usize) -> Result<Transform> {
    let (d, m) = local.shape();
    if global.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: global.ncols() });
    }
    if m < d + 1 {
        return Err(Error::Underdetermined { cluster, members: m, needed: d + 1 });
    }
    let mut a = DMatrix::from_element(d + 1, m, 1.0);
    a.rows_mut(0, d).copy_from(local);
    let gram = &a * a.transpose() + DMatrix::identity(d + 1, d + 1) * ridge;
    let rhs = &a * global.transpose();
    let w_t = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate(format!("support coordinates of cluster {cluster} are collinear")))?
        .solve(&rhs);
    Ok(Transform { r: w_t.transpose() })
}

pub fn batch_phase(cloud: &PointCloud, params: &BatchParams) -> Result<ManifoldAtlas> {
    match params.eps {
        Some(eps) => {
            let clusterer = DensityClusterer { eps, min_points: params.min_points, min_cluster_size: params.min_cluster_size };
            batch_phase_with(cloud, params, &clusterer)
        }
        None => batch_phase_with(cloud, params, &SingleCluster),
    }
}

pub fn batch_phase_with(cloud: &PointCloud, params: &BatchParams, clusterer: &dyn Clusterer) -> Result<ManifoldAtlas> {
    if params.d == 0 {
        return Err(Error::InvalidInput("d must be positive".into()));
    }
    if !(params.ridge >= 0.0) {
        return Err(Error::InvalidInput("ridge must be non-negative".into()));
    }
    let mut assignment = clusterer.cluster(cloud)?;
    if assignment.p > params.max_clusters {
        warn!("clustering produced {} clusters (cap {}); consider a larger eps", assignment.p, params.max_clusters);
    }

    let mut clusters = Vec::with_capacity(assignment.p);
    for c in 0..assignment.p {
        let rows = assignment.members(c);
        clusters.push(fit_cluster(cloud, &rows, params).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("cluster {c}: {m}")),
            other => other,
        })?);
    }
    // With the largest-component override a cluster may have shed points.
    if clusters.iter().map(|c| c.members.len()).sum::<usize>() < cloud.len() {
        let mut labels = vec![usize::MAX; cloud.len()];
        for (c, cl) in clusters.iter().enumerate() {
            for &r in &cl.members {
                labels[r] = c;
            }
        }
        let dropped = labels.iter().filter(|&&l| l == usize::MAX).count();
        warn!("largest-component override dropped {dropped} batch points");
        assignment = ClusterAssignment { labels, p: clusters.len() };
    }

    let global_dim = clusters.iter().map(ClusterModel::dim).max().unwrap_or(params.d);
    if clusters.len() == 1 {
        info!("single cluster; global space is the cluster embedding");
        return Ok(ManifoldAtlas {
            batch: cloud.clone(),
            assignment,
            transforms: vec![Transform::identity(global_dim)],
            clusters,
            global_dim,
            ridge: params.ridge,
            support: Vec::new(),
            params: params.clone(),
        });
    }

    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| assignment.labels[i] != usize::MAX).collect();
    let kept_assignment = ClusterAssignment { labels: kept.iter().map(|&i| assignment.labels[i]).collect(), p: clusters.len() };
    let kept_cloud = cloud.select(&kept)?;
    let support: Vec<usize> = build_support_set(&kept_cloud, &kept_assignment, params.k_pairs, params.l_pairs)
        .into_iter()
        .map(|i| kept[i])
        .collect();

    let m = support.len();
    let sq = DMatrix::from_fn(m, m, |a, b| squared_euclidean(cloud.point(support[a]), cloud.point(support[b])));
    let ge = classical_mds(&sq, global_dim)?.transpose();

    let mut transforms = Vec::with_capacity(clusters.len());
    for (c, cl) in clusters.iter().enumerate() {
        let cols: Vec<usize> = (0..m).filter(|&s| assignment.labels[support[s]] == c).collect();
        let local_cols: Vec<usize> = cols
            .iter()
            .map(|&s| cl.members.binary_search(&support[s]).expect("support point belongs to its cluster"))
            .collect();
        let local = cl.embedding.coords.select_columns(&local_cols);
        transforms.push(learn_transform(&ge.select_columns(&cols), &local, params.ridge, c)?);
    }

    Ok(ManifoldAtlas {
        batch: cloud.clone(),
        assignment,
        clusters,
        transforms,
        global_dim,
        ridge: params.ridge,
        support,
        params: params.clone(),
    })
}

fn fit_cluster(cloud: &PointCloud, rows: &[usize], params: &BatchParams) -> Result<ClusterModel> {
    let sub = cloud.select(rows)?;
    let graph = build_knn_graph(&sub, params.k_graph, GraphOptions { largest_component: params.largest_component })?;
    let geo = geodesic_distances(&graph)?;
    let (members, sub) = if geo.vertices.len() < rows.len() {
        (geo.vertices.iter().map(|&v| rows[v]).collect::<Vec<_>>(), sub.select(&geo.vertices)?)
    } else {
        (rows.to_vec(), sub)
    };
    let embedding = Arc::new(isomap_embed(&geo, params.d)?);
    let mut gp = fit_hyperparams(embedding.clone(), &params.grid.resolve(&geo))?;
    gp.calibrate_output(&geo);
    let variance_ell = match params.variance_scale {
        VarianceScale::Model => gp.ell,
        VarianceScale::Fixed(v) => v,
        VarianceScale::KnnRadius(factor) => factor * median_knn_radius(&sub, params.k_graph),
    };
    let gp = gp.with_variance_ell(variance_ell)?;
    Ok(ClusterModel { members, cloud: sub, geo, embedding, gp })
}

/// Median over points of the distance to the `k`-th nearest other point.
pub fn median_knn_radius(cloud: &PointCloud, k: usize) -> f64 {
    let k = k.clamp(1, cloud.len().saturating_sub(1).max(1));
    let mut r: Vec<f64> = (0..cloud.len())
        .filter_map(|i| nearest(cloud, cloud.point(i), k, Some(i)).last().map(|x| x.1))
        .collect();
    if r.is_empty() {
        return 1.0;
    }
    r.sort_by(f64::total_cmp);
    r[r.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(centers: &[[f64; 2]], sigma: f64, n: usize, seed: u64) -> (PointCloud, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..n {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                data.extend_from_slice(&[ctr[0] + sigma * a, ctr[1] + sigma * b, 0.0]);
                truth.push(c);
            }
        }
        (PointCloud::from_rows(data, 3).unwrap(), truth)
    }

    #[test]
    fn two_separated_blobs_form_two_clusters() {
        let (cloud, truth) = blobs(&[[0.0, 0.0], [10.0, 0.0]], 0.5, 60, 1);
        let a = DensityClusterer::new(2.0).cluster(&cloud).unwrap();
        assert_eq!(a.p, 2);
        let flip = a.labels[0] != truth[0];
        assert!(a.labels.iter().zip(&truth).all(|(l, t)| (*l == *t) != flip));
    }

    #[test]
    fn one_blob_is_one_cluster() {
        let (cloud, _) = blobs(&[[0.0, 0.0]], 0.5, 80, 2);
        assert_eq!(DensityClusterer::new(2.0).cluster(&cloud).unwrap().p, 1);
    }

    #[test]
    fn tiny_eps_makes_everything_noise() {
        let (cloud, _) = blobs(&[[0.0, 0.0]], 0.5, 30, 3);
        assert!(matches!(DensityClusterer::new(1e-6).cluster(&cloud), Err(Error::AllNoise { .. })));
    }

    #[test]
    fn support_set_sizes() {
        let (cloud, truth) = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 0.5, 30, 4);
        let a = ClusterAssignment::new(truth.clone()).unwrap();
        let two = ClusterAssignment::new(truth.iter().map(|&t| t.min(1)).collect()).unwrap();
        assert!(build_support_set(&cloud, &two, 1, 1).len() <= 4);
        assert!(build_support_set(&cloud, &a, 16, 1).len() <= 3 * 2 * 17);

        let small = PointCloud::from_rows(vec![0.0, 0.0, 1.0, 0.0, 10.0, 0.0, 11.0, 0.0], 2).unwrap();
        let sa = ClusterAssignment::new(vec![0, 0, 1, 1]).unwrap();
        assert_eq!(build_support_set(&small, &sa, 16, 1), vec![0, 1, 2, 3]);
    }

    #[test]
    fn identity_and_affine_transforms_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let local = DMatrix::from_fn(2, 12, |_, _| rng.gen_range(-3.0..3.0));
        let t = learn_transform(&local, &local, 0.0, 0).unwrap();
        assert!((t.r.clone() - Transform::identity(2).r).amax() < 1e-10);

        let global = local.map(|x| 2.0 * x + 3.0);
        let t = learn_transform(&global, &local, 0.0, 0).unwrap();
        assert!((t.rotation() - DMatrix::identity(2, 2) * 2.0).amax() < 1e-8);
        assert!((t.offset() - DVector::from_element(2, 3.0)).amax() < 1e-8);
    }

    #[test]
    fn ridge_transform_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (d, dg, m, lambda) = (2, 3, 20, 0.005);
        let local = DMatrix::from_fn(d, m, |_, _| rng.gen_range(-1.0..1.0));
        let global = DMatrix::from_fn(dg, m, |_, _| rng.gen_range(-1.0..1.0));
        let t = learn_transform(&global, &local, lambda, 0).unwrap();
        // Row by row: minimise ‖w·A − g‖² + λ‖w‖² over w.
        let design = DMatrix::from_fn(m, d + 1, |i, j| if j < d { local[(j, i)] } else { 1.0 });
        let lhs = design.transpose() * &design + DMatrix::identity(d + 1, d + 1) * lambda;
        for r in 0..dg {
            let w = lhs.clone().lu().solve(&(design.transpose() * global.row(r).transpose())).unwrap();
            assert!((t.r.row(r).transpose() - w).amax() < 1e-8);
        }
        let objective = |r: &DMatrix<f64>| {
            let a = DMatrix::from_fn(d + 1, m, |i, j| if i < d { local[(i, j)] } else { 1.0 });
            (r * a - &global).norm_squared() + lambda * r.norm_squared()
        };
        let best = objective(&t.r);
        for i in 0..dg {
            for j in 0..=d {
                for delta in [-1e-3, 1e-3] {
                    let mut p = t.r.clone();
                    p[(i, j)] += delta;
                    assert!(objective(&p) >= best);
                }
            }
        }
    }

    #[test]
    fn underdetermined_cluster_is_named() {
        let local = DMatrix::from_element(2, 2, 1.0);
        let err = learn_transform(&local, &local, 0.0, 3).unwrap_err();
        assert!(matches!(err, Error::Underdetermined { cluster: 3, members: 2, needed: 3 }));
    }

    #[test]
    fn single_cluster_atlas_is_transparent() {
        let (cloud, _) = blobs(&[[0.0, 0.0]], 1.0, 80, 7);
        let atlas = batch_phase(&cloud, &BatchParams { eps: Some(2.0), ..Default::default() }).unwrap();
        assert_eq!(atlas.p(), 1);
        assert!(atlas.support.is_empty());
        assert_eq!(atlas.global_batch_coords(), atlas.clusters[0].embedding.coords);
    }

    #[test]
    fn three_blobs_get_independent_models() {
        let (cloud, _) = blobs(&[[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]], 1.0, 60, 8);
        let atlas = batch_phase(&cloud, &BatchParams { eps: Some(2.0), ..Default::default() }).unwrap();
        assert_eq!(atlas.p(), 3);
        assert_eq!(atlas.assignment.sizes().iter().sum::<usize>(), cloud.len());
        assert_eq!(atlas.transforms.len(), 3);
        for t in &atlas.transforms {
            assert_eq!(t.r.shape(), (2, 3));
        }
        assert!(!atlas.support.is_empty());
    }
}
