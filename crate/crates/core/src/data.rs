//! Synthetic swiss-roll data with ground truth, drift streams, and CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub cloud: PointCloud,
    /// `d × n` ground-truth coordinates; `None` for ingested data.
    pub truth: Option<DMatrix<f64>>,
    pub mode: Vec<usize>,
    pub split: Vec<Split>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn mode_count(&self) -> usize {
        self.mode.iter().max().map_or(0, |m| m + 1)
    }

    /// Indices of the points in any of `modes` with the given split, in
    /// storage order.
    pub fn indices(&self, modes: &[usize], split: Option<Split>) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| modes.contains(&self.mode[i]) && split.is_none_or(|s| self.split[i] == s))
            .collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let truth = self.truth.as_ref().map(|t| t.select_columns(rows));
        Ok(Self {
            cloud: self.cloud.select(rows)?,
            truth,
            mode: rows.iter().map(|&i| self.mode[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        })
    }
}

/// An arc-length parameterized Archimedean spiral `r = a·θ` extruded along
/// `y`. Arc length along the spiral equals the first truth coordinate, so the
/// surface is isometric to the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwissRoll {
    pub pitch: f64,
    /// Angle at which arc length is zero.
    pub start_angle: f64,
}

impl Default for SwissRoll {
    fn default() -> Self {
        Self { pitch: 1.5, start_angle: 3.0 }
    }
}

impl SwissRoll {
    fn arc(&self, theta: f64) -> f64 {
        0.5 * self.pitch * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
    }

    /// Angle whose arc length from `start_angle` is `u`.
    pub fn angle_at(&self, u: f64) -> f64 {
        let target = u + self.arc(self.start_angle);
        let mut theta = self.start_angle.max(1.0);
        for _ in 0..100 {
            let step = (self.arc(theta) - target) / (self.pitch * (1.0 + theta * theta).sqrt());
            theta -= step;
            if step.abs() <= 1e-14 * theta.abs().max(1.0) {
                break;
            }
        }
        theta
    }

    pub fn map(&self, u: f64, v: f64) -> [f64; 3] {
        let t = self.angle_at(u);
        let r = self.pitch * t;
        [r * t.cos(), v, r * t.sin()]
    }
}

/// A 2-D Gaussian in truth coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl GaussianMode {
    pub fn isotropic(mean: [f64; 2], sigma: f64) -> Self {
        let v = sigma * sigma;
        Self { mean, cov: [[v, 0.0], [0.0, v]] }
    }

    fn cholesky(&self) -> Result<[[f64; 2]; 2]> {
        let [[a, b], [b2, c]] = self.cov;
        if a < 0.0 || c < 0.0 || (b - b2).abs() > 1e-12 * (a.abs() + c.abs()).max(1.0) || a * c - b * b < -1e-12 {
            return Err(Error::InvalidInput(format!("covariance {:?} is not symmetric positive semidefinite", self.cov)));
        }
        let l11 = a.sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (c - l21 * l21).max(0.0).sqrt();
        Ok([[l11, 0.0], [l21, l22]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwissRollParams {
    pub roll: SwissRoll,
    pub modes: Vec<GaussianMode>,
    pub n_per_mode: usize,
    pub seed: u64,
}

/// Samples each mode in truth space, maps it onto the roll, and splits every
/// mode evenly into train and test halves at random.
pub fn gen_swiss_roll(params: &SwissRollParams) -> Result<LabeledDataset> {
    if params.modes.is_empty() {
        return Err(Error::InvalidInput("at least one mode is required".into()));
    }
    if params.n_per_mode == 0 {
        return Err(Error::InvalidInput("n_per_mode must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let total = params.modes.len() * params.n_per_mode;
    let mut data = Vec::with_capacity(total * 3);
    let mut truth = DMatrix::zeros(2, total);
    let mut mode = Vec::with_capacity(total);
    let mut split = Vec::with_capacity(total);
    for (m, g) in params.modes.iter().enumerate() {
        let l = g.cholesky()?;
        let mut order: Vec<usize> = (0..params.n_per_mode).collect();
        order.shuffle(&mut rng);
        let mut tags = vec![Split::Test; params.n_per_mode];
        for &i in &order[..params.n_per_mode.div_ceil(2)] {
            tags[i] = Split::Train;
        }
        for tag in tags {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            let u = g.mean[0] + l[0][0] * z0;
            let v = g.mean[1] + l[1][0] * z0 + l[1][1] * z1;
            let col = mode.len();
            truth[(0, col)] = u;
            truth[(1, col)] = v;
            data.extend_from_slice(&params.roll.map(u, v));
            mode.push(m);
            split.push(tag);
        }
    }
    Ok(LabeledDataset { cloud: PointCloud::from_rows(data, 3)?, truth: Some(truth), mode, split })
}

/// Re-tags every mode's points as half train, half test, chosen at random.
pub fn split_evenly(dataset: &mut LabeledDataset, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 0..dataset.mode_count() {
        let mut rows = dataset.indices(&[m], None);
        rows.shuffle(&mut rng);
        let half = rows.len().div_ceil(2);
        for (k, &r) in rows.iter().enumerate() {
            dataset.split[r] = if k < half { Split::Train } else { Split::Test };
        }
    }
}

/// Points drawn uniformly from an axis-aligned truth-space box whose centre
/// slides linearly from `from` to `to` over the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformDrift {
    pub roll: SwissRoll,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub half_width: [f64; 2],
    pub count: usize,
    pub seed: u64,
}

pub fn gen_uniform_drift(params: &UniformDrift) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.count;
    let mut data = Vec::with_capacity(n * 3);
    let mut truth = DMatrix::zeros(2, n);
    for t in 0..n {
        let s = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.0 };
        let mut uv = [0.0; 2];
        for k in 0..2 {
            let c = params.from[k] + s * (params.to[k] - params.from[k]);
            let w = params.half_width[k];
            uv[k] = if w > 0.0 { rng.gen_range(c - w..c + w) } else { c };
            truth[(k, t)] = uv[k];
        }
        data.extend_from_slice(&params.roll.map(uv[0], uv[1]));
    }
    Ok(LabeledDataset {
        cloud: PointCloud::from_rows(data, 3)?,
        truth: Some(truth),
        mode: vec![0; n],
        split: vec![Split::Test; n],
    })
}

/// One block of a stream schedule: `count` points drawn from `modes`
/// (pooled and shuffled) restricted to `split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSegment {
    pub modes: Vec<usize>,
    pub count: usize,
    pub split: Split,
}

/// A stream assembled from dataset points; `source[i]` is the dataset row of
/// stream point `i`.
#[derive(Debug, Clone)]
pub struct DriftStream {
    pub cloud: PointCloud,
    pub source: Vec<usize>,
    /// Index of the first point of every segment.
    pub boundaries: Vec<usize>,
}

/// Builds an arrival-ordered stream. Points are drawn without replacement:
/// later segments touching the same mode and split continue where earlier
/// ones stopped.
pub fn gen_drift_stream(dataset: &LabeledDataset, schedule: &[StreamSegment], seed: u64) -> Result<DriftStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = dataset.mode_count();
    let mut taken = vec![false; dataset.len()];
    let mut source = Vec::new();
    let mut boundaries = Vec::new();
    for seg in schedule {
        if let Some(&m) = seg.modes.iter().find(|&&m| m >= modes) {
            return Err(Error::InvalidInput(format!("schedule references mode {m}, dataset has {modes}")));
        }
        let mut candidates: Vec<usize> =
            dataset.indices(&seg.modes, Some(seg.split)).into_iter().filter(|&i| !taken[i]).collect();
        if candidates.len() < seg.count {
            return Err(Error::InvalidInput(format!(
                "segment over modes {:?} asks for {} points, only {} remain",
                seg.modes,
                seg.count,
                candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        boundaries.push(source.len());
        for &i in &candidates[..seg.count] {
            taken[i] = true;
            source.push(i);
        }
    }
    Ok(DriftStream { cloud: dataset.cloud.select(&source)?, source, boundaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    /// Subtract the per-feature mean and divide by the standard deviation.
    #[default]
    Mean,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<usize>,
    pub label: Option<usize>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub normalize: Normalize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// Rows with an empty or non-finite feature.
    pub dropped_invalid: usize,
    /// Rows that could not be parsed at all (too few columns, non-numeric text).
    pub dropped_unparseable: usize,
    /// Schema positions of features removed for having zero variance.
    pub dropped_features: Vec<usize>,
}

const UNPARSEABLE_LIMIT: f64 = 0.10;

enum RowError {
    Invalid,
    Unparseable(String),
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(LabeledDataset, LoadReport)> {
    if schema.features.is_empty() {
        return Err(Error::InvalidInput("schema lists no feature columns".into()));
    }
    let data_err = |message: String| Error::Data { path: path.to_path_buf(), message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_path(path)?;
    let dim = schema.features.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut report = LoadReport::default();
    let mut bad_lines = Vec::new();
    let mut total = 0usize;
    for record in reader.records() {
        let record = record?;
        total += 1;
        let line = record.position().map_or(total, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, RowError> = schema
            .features
            .iter()
            .map(|&c| {
                let field = record.get(c).ok_or_else(|| RowError::Unparseable(format!("missing column {c}")))?;
                let field = field.trim();
                if field.is_empty() {
                    return Err(RowError::Invalid);
                }
                let x: f64 = field.parse().map_err(|_| RowError::Unparseable(format!("column {c}: {field:?}")))?;
                if x.is_finite() { Ok(x) } else { Err(RowError::Invalid) }
            })
            .collect();
        let label = match schema.label {
            Some(c) => match record.get(c) {
                Some(l) => Some(l.trim().to_string()),
                None => {
                    bad_lines.push(format!("line {line}: missing label column {c}"));
                    report.dropped_unparseable += 1;
                    continue;
                }
            },
            None => None,
        };
        match parsed {
            Ok(v) => {
                rows.extend(v);
                labels.extend(label);
            }
            Err(RowError::Invalid) => report.dropped_invalid += 1,
            Err(RowError::Unparseable(why)) => {
                bad_lines.push(format!("line {line}: {why}"));
                report.dropped_unparseable += 1;
            }
        }
    }
    if total == 0 {
        return Err(data_err("no data rows".into()));
    }
    if report.dropped_unparseable as f64 > UNPARSEABLE_LIMIT * total as f64 {
        let shown: Vec<_> = bad_lines.iter().take(10).cloned().collect();
        return Err(data_err(format!(
            "{} of {} rows unparseable (limit {:.0}%): {}",
            report.dropped_unparseable,
            total,
            UNPARSEABLE_LIMIT * 100.0,
            shown.join("; ")
        )));
    }
    if rows.is_empty() {
        return Err(data_err("every row was dropped".into()));
    }
    if report.dropped_invalid + report.dropped_unparseable > 0 {
        warn!(
            "{}: dropped {} invalid and {} unparseable rows",
            path.display(),
            report.dropped_invalid,
            report.dropped_unparseable
        );
    }

    let n = rows.len() / dim;
    let (rows, dim) = match schema.normalize {
        Normalize::None => (rows, dim),
        Normalize::Mean => {
            let (data, kept, dropped) = standardize(&rows, n, dim);
            if !dropped.is_empty() {
                warn!("{}: dropped zero-variance features at schema positions {:?}", path.display(), dropped);
            }
            report.dropped_features = dropped;
            (data, kept)
        }
    };
    let cloud = PointCloud::new(rows, dim, (0..n as u64).collect(), schema.label.map(|_| labels.clone()))?;
    let mode = mode_indices(&labels, n);
    Ok((LabeledDataset { cloud, truth: None, mode, split: vec![Split::Train; n] }, report))
}

/// Maps label strings to mode indices in order of first appearance.
fn mode_indices(labels: &[String], n: usize) -> Vec<usize> {
    if labels.is_empty() {
        return vec![0; n];
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(l.as_str()).or_insert(next)
        })
        .collect()
}

/// Column-wise z-scoring with the population standard deviation. A single row
/// is only centred; with more rows, constant columns are removed.
fn standardize(rows: &[f64], n: usize, dim: usize) -> (Vec<f64>, usize, Vec<usize>) {
    let mut mean = vec![0.0; dim];
    for r in rows.chunks(dim) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n as f64;
        }
    }
    let mut sd = vec![0.0; dim];
    for r in rows.chunks(dim) {
        for ((s, x), m) in sd.iter_mut().zip(r).zip(&mean) {
            *s += (x - m) * (x - m) / n as f64;
        }
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt());
    let keep: Vec<usize> = (0..dim).filter(|&j| n == 1 || sd[j] > 1e-12 * mean[j].abs().max(1.0)).collect();
    let dropped = (0..dim).filter(|j| !keep.contains(j)).collect();
    let mut out = Vec::with_capacity(n * keep.len());
    for r in rows.chunks(dim) {
        for &j in &keep {
            let scale = if sd[j] > 0.0 { sd[j] } else { 1.0 };
            out.push((r[j] - mean[j]) / scale);
        }
    }
    (out, keep.len(), dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_knn_graph, geodesic_distances, GraphOptions};
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn roll_is_arc_length_parameterized() {
        let roll = SwissRoll::default();
        let (u0, u1) = (5.0, 5.001);
        let a = roll.map(u0, 0.0);
        let b = roll.map(u1, 0.0);
        let chord = ((a[0] - b[0]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        assert!((chord / (u1 - u0) - 1.0).abs() < 1e-5);
        assert!(roll.angle_at(0.0) - roll.start_angle < 1e-12);
    }

    #[test]
    fn zero_variance_mode_repeats_one_point() {
        let p = SwissRollParams {
            roll: SwissRoll::default(),
            modes: vec![GaussianMode::isotropic([4.0, 1.0], 0.0)],
            n_per_mode: 5,
            seed: 0,
        };
        let ds = gen_swiss_roll(&p).unwrap();
        for i in 1..5 {
            assert_eq!(ds.cloud.point(i), ds.cloud.point(0));
        }
    }

    #[test]
    fn generator_is_seed_deterministic_and_splits_evenly() {
        let p = SwissRollParams {
            roll: SwissRoll::default(),
            modes: vec![GaussianMode::isotropic([10.0, 0.0], 1.0), GaussianMode::isotropic([30.0, 5.0], 1.0)],
            n_per_mode: 40,
            seed: 7,
        };
        let a = gen_swiss_roll(&p).unwrap();
        let b = gen_swiss_roll(&p).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.split, b.split);
        assert_eq!(a.indices(&[0], Some(Split::Train)).len(), 20);
        assert_eq!(a.indices(&[1], Some(Split::Test)).len(), 20);
    }

    #[test]
    fn graph_geodesics_track_truth_distances() {
        let p = SwissRollParams {
            roll: SwissRoll::default(),
            modes: vec![GaussianMode::isotropic([12.0, 0.0], 2.5)],
            n_per_mode: 200,
            seed: 3,
        };
        let ds = gen_swiss_roll(&p).unwrap();
        let geo = geodesic_distances(&build_knn_graph(&ds.cloud, 10, GraphOptions::default()).unwrap()).unwrap();
        let t = ds.truth.as_ref().unwrap();
        let mut rel = Vec::new();
        for i in 0..200 {
            for j in i + 1..200 {
                let truth = (t.column(i) - t.column(j)).norm();
                if truth > 1e-9 {
                    rel.push((geo.g[(i, j)] - truth).abs() / truth);
                }
            }
        }
        rel.sort_by(f64::total_cmp);
        assert!(rel[rel.len() / 2] < 0.05, "median relative error {}", rel[rel.len() / 2]);
    }

    #[test]
    fn single_mode_stream_is_a_shuffle_of_its_test_split() {
        let p = SwissRollParams {
            roll: SwissRoll::default(),
            modes: vec![GaussianMode::isotropic([10.0, 0.0], 1.0), GaussianMode::isotropic([30.0, 0.0], 1.0)],
            n_per_mode: 30,
            seed: 1,
        };
        let ds = gen_swiss_roll(&p).unwrap();
        let seg = StreamSegment { modes: vec![1], count: 15, split: Split::Test };
        let s = gen_drift_stream(&ds, &[seg.clone()], 9).unwrap();
        let mut got = s.source.clone();
        got.sort();
        assert_eq!(got, ds.indices(&[1], Some(Split::Test)));
        assert_eq!(s.source, gen_drift_stream(&ds, &[seg], 9).unwrap().source);
    }

    #[test]
    fn sudden_shift_boundary_and_no_reuse() {
        let p = SwissRollParams {
            roll: SwissRoll::default(),
            modes: (0..4).map(|m| GaussianMode::isotropic([10.0 + 20.0 * m as f64, 0.0], 1.0)).collect(),
            n_per_mode: 40,
            seed: 2,
        };
        let ds = gen_swiss_roll(&p).unwrap();
        let sched = [
            StreamSegment { modes: vec![0, 1, 2], count: 30, split: Split::Test },
            StreamSegment { modes: vec![3], count: 20, split: Split::Test },
            StreamSegment { modes: vec![3], count: 20, split: Split::Train },
            StreamSegment { modes: vec![0, 1, 2], count: 30, split: Split::Test },
        ];
        let s = gen_drift_stream(&ds, &sched, 4).unwrap();
        assert_eq!(s.boundaries, vec![0, 30, 50, 70]);
        assert!(s.source[30..50].iter().all(|&i| ds.mode[i] == 3));
        let mut all = s.source.clone();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
        let over = [StreamSegment { modes: vec![0], count: 21, split: Split::Test }];
        assert!(gen_drift_stream(&ds, &over, 4).is_err());
    }

    #[test]
    fn even_split_of_ingested_data() {
        let f = write_csv("1,A\n2,A\n3,B\n4,A\n5,B\n");
        let schema = CsvSchema { features: vec![0], label: Some(1), has_header: false, normalize: Normalize::None };
        let (mut ds, _) = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.mode, vec![0, 0, 1, 0, 1]);
        split_evenly(&mut ds, 3);
        assert_eq!(ds.indices(&[0], Some(Split::Train)).len(), 2);
        assert_eq!(ds.indices(&[1], Some(Split::Train)).len(), 1);
        assert_eq!(ds.indices(&[1], Some(Split::Test)).len(), 1);
    }

    #[test]
    fn drift_stream_moves_away_from_start() {
        let d = gen_uniform_drift(&UniformDrift {
            roll: SwissRoll::default(),
            from: [10.0, 0.0],
            to: [30.0, 0.0],
            half_width: [1.0, 1.0],
            count: 50,
            seed: 0,
        })
        .unwrap();
        let t = d.truth.unwrap();
        assert!(t[(0, 0)] < 11.0 && t[(0, 49)] > 29.0);
    }

    #[test]
    fn single_row_is_centred_to_zero() {
        let f = write_csv("1,2,3,A\n");
        let schema = CsvSchema { features: vec![0, 1, 2], label: Some(3), has_header: false, normalize: Normalize::Mean };
        let (ds, report) = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.cloud.point(0), &[0.0, 0.0, 0.0]);
        assert_eq!(ds.cloud.labels().unwrap(), &["A".to_string()]);
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn empty_field_drops_the_row() {
        let f = write_csv("1,,3\n4,5,6\n");
        let schema = CsvSchema { features: vec![0, 1, 2], label: None, has_header: false, normalize: Normalize::None };
        let (ds, report) = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.cloud.point(0), &[4.0, 5.0, 6.0]);
        assert_eq!(report.dropped_invalid, 1);
    }

    #[test]
    fn too_many_unparseable_rows_is_an_error() {
        let f = write_csv("x,y\n1,2\nfoo,3\n4,5\n");
        let schema = CsvSchema { features: vec![0, 1], label: None, has_header: true, normalize: Normalize::None };
        let err = load_csv(f.path(), &schema).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn normalization_gives_zero_mean_unit_variance() {
        let f = write_csv("1,7,0\n2,7,5\n4,7,1\n9,7,-3\n");
        let schema = CsvSchema { features: vec![0, 1, 2], label: None, has_header: false, normalize: Normalize::Mean };
        let (ds, report) = load_csv(f.path(), &schema).unwrap();
        assert_eq!(report.dropped_features, vec![1]);
        assert_eq!(ds.cloud.dim(), 2);
        for j in 0..2 {
            let col: Vec<f64> = ds.cloud.points().map(|p| p[j]).collect();
            let m = col.iter().sum::<f64>() / 4.0;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
    }
}
