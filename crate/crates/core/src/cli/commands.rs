//! The subcommand bodies. Each reads its inputs, writes its artefacts into
//! the output directory and returns a [`Failure`] on anything that should
//! change the exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::experiments::{convergence_run, equivalence_run, ConvergenceRun, EquivalenceRun};
use super::format::{round_json, sig9};
use super::svg::{Plot, Series};
use super::verify::{verify, VerifyOptions, VerifyReport};
use crate::data::{gen_drift_stream, gen_swiss_roll, load_csv, split_evenly, LabeledDataset, Split, StreamSegment, SwissRollParams};
use crate::error::Error;
use crate::geometry::PointCloud;
use crate::manifold::batch_phase;
use crate::streaming::{calibrate_threshold, process_stream, variance_trace, StreamConfig, StreamOutcome, StreamVerdict};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Verification(Vec<String>),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Verification(fails) => write!(f, "verification failed:\n  {}", fails.join("\n  ")),
            Failure::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// A dataset plus the arrival-ordered stream drawn from it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: LabeledDataset,
    /// Dataset row of every stream point.
    pub stream_rows: Vec<usize>,
    pub boundaries: Vec<usize>,
}

impl Generated {
    pub fn stream_cloud(&self) -> CmdResult<PointCloud> {
        Ok(self.dataset.cloud.select(&self.stream_rows)?)
    }
}

/// Builds the dataset and stream described by `cfg`, without touching disk.
pub fn generate(cfg: &RunConfig) -> CmdResult<Generated> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dataset = match &cfg.csv {
        Some(input) => {
            let (mut ds, report) = load_csv(&input.path, &input.schema)?;
            info!("loaded {} rows, dropped {:?}", ds.len(), report);
            split_evenly(&mut ds, cfg.seed);
            ds
        }
        None => gen_swiss_roll(&SwissRollParams {
            roll: cfg.roll,
            modes: cfg.modes.clone(),
            n_per_mode: cfg.n_per_mode,
            seed: cfg.seed,
        })?,
    };
    let modes = dataset.mode_count();
    if let Some(m) = cfg.known_modes.iter().chain(&cfg.unknown_modes).find(|&&m| m >= modes) {
        return Err(Failure::Usage(format!("mode {m} does not exist; the dataset has {modes}")));
    }
    let mut schedule = vec![StreamSegment {
        modes: cfg.known_modes.clone(),
        count: cfg.known_per_mode * cfg.known_modes.len(),
        split: Split::Test,
    }];
    if !cfg.unknown_modes.is_empty() {
        for (count, split) in [(cfg.unknown_count, Split::Test), (cfg.followup_count, Split::Train)] {
            if count > 0 {
                schedule.push(StreamSegment { modes: cfg.unknown_modes.clone(), count, split });
            }
        }
    }
    let stream = gen_drift_stream(&dataset, &schedule, cfg.stream_seed).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Generated { dataset, stream_rows: stream.source, boundaries: stream.boundaries })
}

fn ensure_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

pub fn write_generated(g: &Generated, dir: &Path) -> CmdResult<()> {
    ensure_dir(dir)?;
    let ds = &g.dataset;
    let dim = ds.cloud.dim();
    let mut w = csv::Writer::from_path(dir.join("dataset.csv")).map_err(Error::from)?;
    let mut header = vec!["id".to_string(), "mode".into(), "split".into()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    if let Some(t) = &ds.truth {
        header.extend((0..t.nrows()).map(|k| format!("t{k}")));
    }
    w.write_record(&header).map_err(Error::from)?;
    for i in 0..ds.len() {
        let mut rec = vec![ds.cloud.ids()[i].to_string(), ds.mode[i].to_string(), split_name(ds.split[i]).into()];
        rec.extend(ds.cloud.point(i).iter().map(|&v| sig9(v)));
        if let Some(t) = &ds.truth {
            rec.extend(t.column(i).iter().map(|&v| sig9(v)));
        }
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("stream.csv")).map_err(Error::from)?;
    w.write_record(["index", "row", "segment"]).map_err(Error::from)?;
    for (i, &row) in g.stream_rows.iter().enumerate() {
        let seg = g.boundaries.iter().rposition(|&b| b <= i).unwrap_or(0);
        w.write_record([i.to_string(), row.to_string(), seg.to_string()]).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_generated(dir: &Path) -> CmdResult<Generated> {
    let data_err = |path: &Path, message: String| Failure::Runtime(Error::Data { path: path.to_path_buf(), message });
    let path = dir.join("dataset.csv");
    let mut r = csv::Reader::from_path(&path).map_err(Error::from)?;
    let header: Vec<String> = r.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
    let x_cols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with('x')).collect();
    let t_cols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with('t')).collect();
    if header.len() < 4 || header[..3] != ["id", "mode", "split"] || x_cols.is_empty() {
        return Err(data_err(&path, "expected columns id,mode,split,x0,...".into()));
    }
    let (mut ids, mut mode, mut split, mut xs, mut ts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let bad = |what: &str| data_err(&path, format!("line {}: bad {what}", line + 2));
        ids.push(rec[0].parse::<u64>().map_err(|_| bad("id"))?);
        mode.push(rec[1].parse::<usize>().map_err(|_| bad("mode"))?);
        split.push(match &rec[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => return Err(bad("split")),
        });
        for &c in &x_cols {
            xs.push(rec.get(c).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("coordinate"))?);
        }
        for &c in &t_cols {
            ts.push(rec.get(c).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("truth"))?);
        }
    }
    let n = ids.len();
    let cloud = PointCloud::new(xs, x_cols.len(), ids, None).map_err(|e| data_err(&path, e.to_string()))?;
    let truth = (!t_cols.is_empty()).then(|| DMatrix::from_column_slice(t_cols.len(), n, &ts));
    let dataset = LabeledDataset { cloud, truth, mode, split };

    let path = dir.join("stream.csv");
    let mut r = csv::Reader::from_path(&path).map_err(Error::from)?;
    let (mut stream_rows, mut boundaries) = (Vec::new(), Vec::new());
    let mut last_seg = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let parse = |c: usize| rec.get(c).and_then(|v| v.parse::<usize>().ok());
        let (Some(row), Some(seg)) = (parse(1), parse(2)) else {
            return Err(data_err(&path, format!("line {}: expected index,row,segment", line + 2)));
        };
        if row >= n {
            return Err(data_err(&path, format!("line {}: row {row} is outside the dataset", line + 2)));
        }
        if last_seg != Some(seg) {
            boundaries.push(stream_rows.len());
            last_seg = Some(seg);
        }
        stream_rows.push(row);
    }
    Ok(Generated { dataset, stream_rows, boundaries })
}

pub fn cmd_generate(cfg: &RunConfig) -> CmdResult<PathBuf> {
    let g = generate(cfg)?;
    let dir = cfg.output_dir();
    write_generated(&g, &dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg).map_err(Error::from)?)?;
    info!("wrote {} points and a {}-point stream to {}", g.dataset.len(), g.stream_rows.len(), dir.display());
    Ok(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub batch_size: usize,
    pub validation_size: usize,
    pub cluster_sizes: Vec<usize>,
    pub length_scales: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub sigma_t: f64,
    pub stream_length: usize,
    pub boundaries: Vec<usize>,
    /// First stream index drawn from an unknown mode.
    pub drift_onset: Option<usize>,
    pub known_mean_variance: f64,
    /// Over unknown-mode points seen before the first relearn.
    pub unknown_mean_variance: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub known_assigned_fraction: f64,
    pub unknown_assigned_before_relearn: usize,
    pub relearn_indices: Vec<usize>,
    pub relearn_delay: Option<usize>,
    /// Fraction of unknown-mode points arriving after the first relearn that
    /// were assigned on arrival.
    pub unknown_assigned_after_relearn: Option<f64>,
    pub final_clusters: usize,
    pub error: Option<String>,
}

pub struct RunResult {
    pub outcome: StreamOutcome,
    pub metrics: RunMetrics,
    /// Mode of every stream point.
    pub stream_modes: Vec<usize>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Batch phase, threshold calibration and the stream, all in memory.
pub fn execute_run(cfg: &RunConfig, g: &Generated) -> CmdResult<RunResult> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let ds = &g.dataset;
    let (mut batch_rows, mut val_rows) = (Vec::new(), Vec::new());
    for &m in &cfg.known_modes {
        let train = ds.indices(&[m], Some(Split::Train));
        let keep = train.len() - (cfg.validation_fraction * train.len() as f64).round() as usize;
        batch_rows.extend_from_slice(&train[..keep]);
        val_rows.extend_from_slice(&train[keep..]);
    }
    let batch = ds.cloud.select(&batch_rows)?;
    let atlas = batch_phase(&batch, &cfg.batch)?;
    let sigma_t = match cfg.sigma_t {
        Some(s) => s,
        None => {
            if val_rows.is_empty() {
                return Err(Failure::Usage("no validation points to calibrate sigma_t".into()));
            }
            calibrate_threshold(&atlas, &ds.cloud.select(&val_rows)?, cfg.calibration_percentile)?
        }
    };
    info!("batch of {} in {} clusters, sigma_t {}", batch.len(), atlas.p(), sigma_t);
    let cluster_sizes = atlas.assignment.sizes();
    let length_scales = atlas.clusters.iter().map(|c| c.gp.ell).collect();
    let noise_variances = atlas.clusters.iter().map(|c| c.gp.sigma_n_sq).collect();

    let stream = g.stream_cloud()?;
    let outcome = process_stream(atlas, &stream, StreamConfig { sigma_t, n_s: cfg.n_s })?;
    let stream_modes: Vec<usize> = g.stream_rows.iter().map(|&r| ds.mode[r]).collect();
    let unknown = |i: usize| cfg.unknown_modes.contains(&stream_modes[i]);

    let first = outcome.first_verdicts();
    let relearn_indices: Vec<usize> = outcome.state.events.iter().map(|e| e.index).collect();
    let cut = relearn_indices.first().copied().unwrap_or(usize::MAX);
    let known: Vec<&&StreamVerdict> = first.iter().filter(|v| !unknown(v.index)).collect();
    let unk_before: Vec<&&StreamVerdict> = first.iter().filter(|v| unknown(v.index) && v.index <= cut).collect();
    let unk_after: Vec<&&StreamVerdict> = first.iter().filter(|v| unknown(v.index) && v.index > cut).collect();
    let known_mean_variance = mean(known.iter().map(|v| v.variance)).unwrap_or(f64::NAN);
    let unknown_mean_variance = mean(unk_before.iter().map(|v| v.variance));
    let drift_onset = (0..stream_modes.len()).find(|&i| unknown(i));
    let metrics = RunMetrics {
        batch_size: batch.len(),
        validation_size: val_rows.len(),
        cluster_sizes,
        length_scales,
        noise_variances,
        sigma_t,
        stream_length: stream.len(),
        boundaries: g.boundaries.clone(),
        drift_onset,
        known_mean_variance,
        unknown_mean_variance,
        variance_ratio: unknown_mean_variance.map(|u| u / known_mean_variance),
        known_assigned_fraction: known.iter().filter(|v| v.assigned).count() as f64 / known.len().max(1) as f64,
        unknown_assigned_before_relearn: unk_before.iter().filter(|v| v.assigned).count(),
        relearn_delay: drift_onset.zip(relearn_indices.first()).map(|(d, &r)| r.saturating_sub(d)),
        relearn_indices,
        unknown_assigned_after_relearn: (!unk_after.is_empty())
            .then(|| unk_after.iter().filter(|v| v.assigned).count() as f64 / unk_after.len() as f64),
        final_clusters: outcome.atlas.p(),
        error: outcome.error.as_ref().map(|e| e.to_string()),
    };
    Ok(RunResult { outcome, metrics, stream_modes })
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult<()> {
    let v = round_json(serde_json::to_value(value).map_err(Error::from)?);
    fs::write(path, serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n")?;
    Ok(())
}

fn write_run(cfg: &RunConfig, res: &RunResult, dir: &Path) -> CmdResult<()> {
    ensure_dir(dir)?;
    let out = &res.outcome;
    let gdim = out.verdicts.iter().filter_map(|v| v.global.as_ref()).map(Vec::len).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join("embeddings.csv")).map_err(Error::from)?;
    let mut header = vec!["index".to_string(), "id".into(), "cluster".into()];
    header.extend((0..gdim).map(|k| format!("g{k}")));
    header.extend(["variance".into(), "assigned".into(), "relearned".into()]);
    w.write_record(&header).map_err(Error::from)?;
    for v in &out.verdicts {
        let mut rec = vec![v.index.to_string(), v.id.to_string(), v.chosen.to_string()];
        for k in 0..gdim {
            rec.push(v.global.as_ref().and_then(|g| g.get(k)).map_or(String::new(), |&x| sig9(x)));
        }
        rec.extend([sig9(v.variance), v.assigned.to_string(), v.relearned.to_string()]);
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush()?;

    let mut events = fs::File::create(dir.join("events.jsonl"))?;
    for e in &out.state.events {
        let v = round_json(json!({"kind": "relearn", "event": e}));
        writeln!(events, "{v}")?;
    }
    if let Some(e) = &out.error {
        writeln!(events, "{}", json!({"kind": "relearn_failed", "message": e.to_string()}))?;
    }
    write_json(&dir.join("metrics.json"), &res.metrics)?;

    if cfg.plots {
        let first = out.first_verdicts();
        let raw: Vec<f64> = first.iter().map(|v| v.variance).collect();
        let trace = variance_trace(&raw, cfg.trace_window);
        let mut plot = Plot {
            title: "Predictive variance".into(),
            x_label: "stream index".into(),
            y_label: "variance".into(),
            log_y: true,
            lines: vec![Series { label: format!("mean over {}", cfg.trace_window), points: trace.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect() }],
            h_rules: vec![("sigma_t".into(), res.metrics.sigma_t)],
            ..Default::default()
        };
        if let Some(d) = res.metrics.drift_onset {
            plot.v_rules.push(("drift".into(), d as f64));
        }
        for &i in &res.metrics.relearn_indices {
            plot.v_rules.push(("relearn".into(), i as f64));
        }
        fs::write(dir.join("variance_trace.svg"), plot.render())?;

        let mut latest: BTreeMap<usize, &StreamVerdict> = BTreeMap::new();
        for v in &out.verdicts {
            latest.insert(v.index, v);
        }
        let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        for v in latest.values() {
            if let Some(g) = v.global.as_ref().filter(|g| g.len() >= 2) {
                groups.entry(res.stream_modes[v.index]).or_default().push((g[0], g[1]));
            }
        }
        let plot = Plot {
            title: "Stream embedding".into(),
            x_label: "g0".into(),
            y_label: "g1".into(),
            scatter: groups.into_iter().map(|(m, points)| Series { label: format!("mode {m}"), points }).collect(),
            ..Default::default()
        };
        fs::write(dir.join("embedding.svg"), plot.render())?;
    }
    Ok(())
}

/// Reads `dataset.csv` and `stream.csv` from the input directory, runs, and
/// writes the results. A failed relearn is recorded and then reported.
pub fn cmd_run(cfg: &RunConfig) -> CmdResult<RunMetrics> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let g = read_generated(&cfg.input_dir())?;
    let res = execute_run(cfg, &g)?;
    write_run(cfg, &res, &cfg.output_dir())?;
    match res.outcome.error {
        Some(e) => Err(Failure::Runtime(e)),
        None => Ok(res.metrics),
    }
}

pub fn cmd_verify(opts: &VerifyOptions, dir: &Path) -> CmdResult<VerifyReport> {
    let report = verify(opts)?;
    ensure_dir(dir)?;
    write_json(&dir.join("report.json"), &report)?;
    if report.passed() {
        Ok(report)
    } else {
        Err(Failure::Verification(
            report
                .failures()
                .iter()
                .map(|c| format!("{}/{}: {} (bound {})", c.suite, c.name, sig9(c.value), sig9(c.bound)))
                .collect(),
        ))
    }
}

pub fn cmd_convergence(seeds: &[u64], sizes: &[usize], k_graph: usize, dir: &Path) -> CmdResult<ConvergenceRun> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Usage("sizes must be non-empty and strictly increasing".into()));
    }
    let run = convergence_run(seeds, sizes, k_graph)?;
    ensure_dir(dir)?;
    let mut w = csv::Writer::from_path(dir.join("convergence.csv")).map_err(Error::from)?;
    let mut header = vec!["n".to_string(), "mean".into()];
    header.extend(seeds.iter().map(|s| format!("seed{s}")));
    w.write_record(&header).map_err(Error::from)?;
    for (j, n) in sizes.iter().enumerate() {
        let mut rec = vec![n.to_string(), sig9(run.mean[j])];
        rec.extend(run.errors.iter().map(|r| sig9(r[j])));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush()?;
    write_json(&dir.join("threshold.json"), &json!({"theoretical_n0": run.theoretical_n0, "empirical_n0": run.empirical_n0, "k_graph": k_graph}))?;
    let plot = Plot {
        title: "Embedding error against batch size".into(),
        x_label: "n".into(),
        y_label: "Procrustes error".into(),
        log_y: true,
        lines: vec![Series { label: "mean".into(), points: sizes.iter().zip(&run.mean).map(|(&n, &e)| (n as f64, e)).collect() }],
        v_rules: run.empirical_n0.map(|n| vec![("empirical n0".into(), n as f64)]).unwrap_or_default(),
        ..Default::default()
    };
    fs::write(dir.join("convergence.svg"), plot.render())?;
    Ok(run)
}

pub fn cmd_equivalence(seed: u64, multipliers: &[f64], dir: &Path) -> CmdResult<EquivalenceRun> {
    if multipliers.is_empty() || multipliers.iter().any(|&m| !(m > 0.0)) {
        return Err(Failure::Usage("multipliers must be positive".into()));
    }
    let run = equivalence_run(seed, 500, 200, 8, multipliers)?;
    ensure_dir(dir)?;
    let mut w = csv::Writer::from_path(dir.join("equivalence.csv")).map_err(Error::from)?;
    w.write_record(["multiplier", "ell", "procrustes_error"]).map_err(Error::from)?;
    for (m, p) in multipliers.iter().zip(&run.points) {
        w.write_record([sig9(*m), sig9(p.ell), sig9(p.error)]).map_err(Error::from)?;
    }
    w.flush()?;
    let plot = Plot {
        title: "GP mean against S-Isomap".into(),
        x_label: "log10(ell / max geodesic)".into(),
        y_label: "Procrustes error".into(),
        log_y: true,
        lines: vec![Series { label: "error".into(), points: multipliers.iter().zip(&run.points).map(|(&m, p)| (m.log10(), p.error)).collect() }],
        ..Default::default()
    };
    fs::write(dir.join("equivalence.svg"), plot.render())?;
    Ok(run)
}
