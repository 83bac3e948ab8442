//! Neighborhood graphs and geodesic distances.
//!
//! Geodesics are approximated by shortest paths over a symmetrized k-nearest
//! neighbor graph. [`GeodesicSet`] also carries the squared geodesic matrix and
//! its double-centered inner-product matrix, which is the input to every
//! spectral and kernel computation downstream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n` points in `ℝᴰ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: Vec<f64>,
    dim: usize,
    ids: Vec<u64>,
    labels: Option<Vec<String>>,
}

impl PointCloud {
    /// Builds a cloud from row-major data, assigning ids `0..n`.
    pub fn from_rows(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        Self::new(data, dim, (0..n as u64).collect(), None)
    }

    pub fn new(data: Vec<f64>, dim: usize, ids: Vec<u64>, labels: Option<Vec<String>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty multiple of {dim} values, got {}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        if ids.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: ids.len() });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: l.len() });
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in point {} (feature {})",
                pos / dim,
                pos % dim
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("point ids must be unique".into()));
        }
        Ok(Self { data, dim, ids, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `n × D` matrix view of the points.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    /// Sub-cloud with the given rows, preserving ids and labels.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.point(r));
        }
        let ids = rows.iter().map(|&r| self.ids[r]).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r].clone()).collect());
        Self::new(data, self.dim, ids, labels)
    }

    /// Concatenates two clouds; ids must stay unique.
    pub fn concat(&self, other: &PointCloud) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        Self::new(data, self.dim, ids, labels)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` points of `cloud` closest to `query`, nearest first.
/// Ties are broken by index. `skip` excludes one row (the query itself).
pub fn nearest(cloud: &PointCloud, query: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = cloud
        .points()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(j, p)| (j, squared_euclidean(query, p)))
        .collect();
    let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
    }
    cand.sort_by(by_dist);
    cand.into_iter().map(|(j, d2)| (j, d2.sqrt())).collect()
}

/// Symmetric weighted adjacency over a subset of cloud rows.
#[derive(Debug, Clone)]
pub struct NeighborhoodGraph {
    /// `adjacency[v]` holds `(neighbor, weight)` pairs, sorted by neighbor.
    adjacency: Vec<Vec<(usize, f64)>>,
    /// Cloud row of each graph vertex.
    vertices: Vec<usize>,
    k_graph: usize,
}

impl NeighborhoodGraph {
    pub fn k_graph(&self) -> usize {
        self.k_graph
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .binary_search_by(|(n, _)| n.cmp(&b))
            .ok()
            .map(|i| self.adjacency[a][i].1)
    }

    /// Connected components as vertex lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.adjacency.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn restrict(&self, keep: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.adjacency.len()];
        for (new, &old) in keep.iter().enumerate() {
            local[old] = new;
        }
        let adjacency = keep
            .iter()
            .map(|&old| {
                self.adjacency[old]
                    .iter()
                    .filter(|(w, _)| local[*w] != usize::MAX)
                    .map(|&(w, d)| (local[w], d))
                    .collect()
            })
            .collect();
        Self {
            adjacency,
            vertices: keep.iter().map(|&v| self.vertices[v]).collect(),
            k_graph: self.k_graph,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Keep only the largest connected component instead of failing.
    pub largest_component: bool,
}

/// Connects every point to its `k_graph` nearest Euclidean neighbors and
/// symmetrizes the edge set by union.
pub fn build_knn_graph(cloud: &PointCloud, k_graph: usize, opts: GraphOptions) -> Result<NeighborhoodGraph> {
    let n = cloud.len();
    if k_graph == 0 || k_graph >= n {
        return Err(Error::InvalidInput(format!(
            "k_graph must satisfy 1 <= k_graph < n (k_graph = {k_graph}, n = {n})"
        )));
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(2 * k_graph); n];
    for i in 0..n {
        for (j, d) in nearest(cloud, cloud.point(i), k_graph, Some(i)) {
            if d <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "points {} and {} coincide",
                    cloud.ids()[i],
                    cloud.ids()[j]
                )));
            }
            adjacency[i].push((j, d));
            adjacency[j].push((i, d));
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|a| a.0);
        list.dedup_by(|a, b| a.0 == b.0);
    }
    let graph = NeighborhoodGraph { adjacency, vertices: (0..n).collect(), k_graph };
    let comps = graph.components();
    if comps.len() == 1 {
        return Ok(graph);
    }
    if !opts.largest_component {
        return Err(Error::Disconnected { components: comps.len() });
    }
    let largest = comps
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("at least one component");
    log::warn!(
        "keeping largest component ({} of {} points, {} components)",
        largest.len(),
        n,
        comps.len()
    );
    Ok(graph.restrict(largest))
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path distances (Dijkstra). Unreachable vertices
/// are left at infinity.
pub fn shortest_paths_from(graph: &NeighborhoodGraph, source: usize) -> Vec<f64> {
    let n = graph.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Geodesic distances `G`, their squares `G̃`, and the double-centered
/// inner-product matrix `B = −H G̃ H / 2`.
#[derive(Debug, Clone)]
pub struct GeodesicSet {
    pub g: DMatrix<f64>,
    pub gsq: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Cloud row of each matrix index.
    pub vertices: Vec<usize>,
}

impl GeodesicSet {
    pub fn len(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.g.nrows() == 0
    }

    /// Largest geodesic distance in the set.
    pub fn max_distance(&self) -> f64 {
        self.g.iter().copied().fold(0.0, f64::max)
    }

    /// Median of the off-diagonal geodesic distances.
    pub fn median_distance(&self) -> f64 {
        let n = self.len();
        let mut vals = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for j in 0..n {
            for i in 0..j {
                vals.push(self.g[(i, j)]);
            }
        }
        if vals.is_empty() {
            return 0.0;
        }
        let mid = vals.len() / 2;
        let (_, m, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }

    /// `(1/n) Σⱼ g²ᵢⱼ` for every row.
    pub fn row_means_sq(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.len()).map(|i| self.gsq.row(i).sum() / n).collect()
    }
}

/// All-pairs geodesics by repeated Dijkstra over the sparse graph.
pub fn geodesic_distances(graph: &NeighborhoodGraph) -> Result<GeodesicSet> {
    let n = graph.vertex_count();
    let mut g = DMatrix::zeros(n, n);
    for s in 0..n {
        let dist = shortest_paths_from(graph, s);
        for (t, &d) in dist.iter().enumerate().skip(s + 1) {
            if !d.is_finite() {
                return Err(Error::Unreachable { from: s, to: t });
            }
            g[(s, t)] = d;
            g[(t, s)] = d;
        }
    }
    let gsq = g.map(|v| v * v);
    let b = double_center(&gsq);
    Ok(GeodesicSet { g, gsq, b, vertices: graph.vertices().to_vec() })
}

/// `−H M H / 2` with `H = I − (1/n)·11ᵀ`, computed from row and grand means.
pub fn double_center(sq: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = center(sq);
    out *= -0.5;
    out
}

/// `H M H` for a symmetric `M`. The result is exactly symmetric.
pub fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let grand = row.iter().sum::<f64>() / nf;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = m[(i, j)] - row[i] - row[j] + grand;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Squared geodesic distances from an out-of-sample point to every vertex of
/// `geo`, routing through the point's `k_graph` nearest batch neighbors:
/// `gᵢ = minⱼ (‖point − yⱼ‖ + G[i][j])`.
pub fn stream_geodesics(point: &[f64], cloud: &PointCloud, geo: &GeodesicSet, k_graph: usize) -> Result<Vec<f64>> {
    if point.len() != cloud.dim() {
        return Err(Error::DimensionMismatch { expected: cloud.dim(), got: point.len() });
    }
    let n = geo.len();
    let hops = nearest_vertices(point, cloud, &geo.vertices, k_graph.max(1));
    let mut out = vec![f64::INFINITY; n];
    for (j, d) in hops {
        for (i, slot) in out.iter_mut().enumerate() {
            let via = d + geo.g[(i, j)];
            if via < *slot {
                *slot = via;
            }
        }
    }
    Ok(out.into_iter().map(|v| v * v).collect())
}

/// Nearest geodesic-set vertices (local indices) to `point`.
fn nearest_vertices(point: &[f64], cloud: &PointCloud, vertices: &[usize], k: usize) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = vertices
        .iter()
        .enumerate()
        .map(|(local, &row)| (local, squared_euclidean(point, cloud.point(row))))
        .collect();
    let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
    }
    cand.sort_by(by_dist);
    cand.into_iter().map(|(j, d2)| (j, d2.sqrt())).collect()
}
