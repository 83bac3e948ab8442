//! Run configuration: a JSON file whose fields can be overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, GaussianMode, SwissRoll};
use crate::error::{Error, Result};
use crate::manifold::BatchParams;

/// A real-data source used in place of the swiss-roll generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvInput {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub stream_seed: u64,
    pub roll: SwissRoll,
    pub modes: Vec<GaussianMode>,
    pub n_per_mode: usize,
    pub csv: Option<CsvInput>,
    /// Modes present in the batch.
    pub known_modes: Vec<usize>,
    /// Modes that only appear in the stream.
    pub unknown_modes: Vec<usize>,
    /// Stream points per known mode, from the test split.
    pub known_per_mode: usize,
    /// Unknown-mode test points streamed after the known segment.
    pub unknown_count: usize,
    /// Unknown-mode train points streamed last, to observe recovery after a relearn.
    pub followup_count: usize,
    /// Share of each known mode's train split held out for threshold calibration.
    pub validation_fraction: f64,
    pub batch: BatchParams,
    /// Fixed threshold; calibrated from the validation split when absent.
    pub sigma_t: Option<f64>,
    pub calibration_percentile: f64,
    pub n_s: usize,
    pub trace_window: usize,
    /// Dataset directory read by `run`; defaults to `output`.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let centres = [[10.0, 0.0], [20.0, 0.0], [10.0, 8.0], [20.0, 8.0]];
        Self {
            seed: 11,
            stream_seed: 5,
            roll: SwissRoll::default(),
            modes: centres.iter().map(|&c| GaussianMode::isotropic(c, 0.7)).collect(),
            n_per_mode: 2000,
            csv: None,
            known_modes: vec![0, 1, 2],
            unknown_modes: vec![3],
            known_per_mode: 1000,
            unknown_count: 1000,
            followup_count: 1000,
            validation_fraction: 0.2,
            batch: BatchParams { eps: Some(0.5), ..BatchParams::default() },
            sigma_t: None,
            calibration_percentile: 99.0,
            n_s: 1000,
            trace_window: 100,
            input: None,
            output: None,
            plots: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.csv.is_none() && self.modes.is_empty() {
            return bad("no modes configured".into());
        }
        if self.csv.is_none() && self.n_per_mode < 2 {
            return bad("n_per_mode must be at least 2".into());
        }
        if self.known_modes.is_empty() {
            return bad("known_modes is empty".into());
        }
        if let Some(m) = self.known_modes.iter().find(|m| self.unknown_modes.contains(m)) {
            return bad(format!("mode {m} is both known and unknown"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)".into());
        }
        if self.sigma_t.is_none() && self.validation_fraction == 0.0 {
            return bad("calibrating sigma_t needs validation_fraction > 0".into());
        }
        if let Some(s) = self.sigma_t {
            if !(s >= 0.0) {
                return bad(format!("sigma_t must be non-negative, got {s}"));
            }
        }
        if !(0.0..=100.0).contains(&self.calibration_percentile) {
            return bad("calibration_percentile must lie in [0, 100]".into());
        }
        if self.n_s == 0 || self.trace_window == 0 {
            return bad("n_s and trace_window must be positive".into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(default_output_dir)
    }

    pub fn input_dir(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.output_dir())
    }
}

pub const OUTPUT_ENV: &str = "GP_ISOMAP_OUT";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("gp-isomap-out"), PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert_eq!((c.batch.k_pairs, c.batch.l_pairs, c.batch.ridge), (16, 1, 0.005));
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"n_s": 7, "batch": {"k_graph": 5}}"#).unwrap();
        assert_eq!(c.n_s, 7);
        assert_eq!(c.batch.k_graph, 5);
        assert_eq!(c.batch.k_pairs, 16);
        assert_eq!(c.known_modes, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(RunConfig { modes: vec![], ..Default::default() }.validate().is_err());
        assert!(RunConfig { known_modes: vec![3], ..Default::default() }.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
