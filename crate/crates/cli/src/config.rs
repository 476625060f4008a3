//! JSON configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use ivnnt_core::dgp::{DgpConfig, RootSelection};
use ivnnt_core::estimator::BaselineMode;
use ivnnt_core::harness::StudyConfig;
use ivnnt_core::{LinkKind, ModelSpec};
use serde::Deserialize;

use crate::ingest::{IngestSpec, Threshold};
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub dgp: Option<DgpSection>,
    #[serde(default)]
    pub study: Option<StudySection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub link: LinkKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub psi0: f64,
    pub psi1: f64,
    pub pi_z: f64,
    pub gamma1: f64,
    pub target_exposure: f64,
    pub target_outcome: f64,
    pub target_pb: f64,
    #[serde(default)]
    pub relax_outcome: Option<bool>,
    #[serde(default)]
    pub root_selection: Option<RootSelection>,
    #[serde(default)]
    pub concordant_confounding: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Relative paths resolve against the config file's directory.
    pub data: PathBuf,
    pub outcome_column: String,
    pub exposure_column: String,
    pub instrument_column: String,
    #[serde(default)]
    pub outcome_threshold: Option<Threshold>,
    #[serde(default)]
    pub exposure_threshold: Option<Threshold>,
    #[serde(default)]
    pub instrument_threshold: Option<Threshold>,
    #[serde(default = "default_header")]
    pub header: bool,
    #[serde(default = "default_level")]
    pub ci_level: f64,
}

fn default_level() -> f64 {
    0.95
}

fn default_header() -> bool {
    true
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.model.link)
    }

    pub fn dgp_config(&self) -> Result<DgpConfig, CliError> {
        let d = self.dgp.as_ref().ok_or_else(|| CliError::Config("missing `dgp` section".into()))?;
        let mut cfg = DgpConfig::new(
            self.spec(),
            [d.psi0, d.psi1],
            d.pi_z,
            d.gamma1,
            d.target_exposure,
            d.target_outcome,
            d.target_pb,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(v) = d.relax_outcome {
            cfg.relax_outcome = v;
        }
        if let Some(v) = d.root_selection {
            cfg.root_selection = v;
        }
        if let Some(v) = d.concordant_confounding {
            cfg.concordant_confounding = v;
        }
        Ok(cfg)
    }

    pub fn study_config(&self) -> Result<StudyConfig, CliError> {
        let s = self.study.as_ref().ok_or_else(|| CliError::Config("missing `study` section".into()))?;
        let cfg = StudyConfig {
            dgp: self.dgp_config()?,
            sample_sizes: s.sample_sizes.clone(),
            replications: s.replications,
            ci_level: s.ci_level,
            baseline_mode: s.baseline_mode,
            master_seed: s.master_seed,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn ingest_spec(&self, base_dir: &Path) -> Result<IngestSpec, CliError> {
        let e = self.estimate.as_ref().ok_or_else(|| CliError::Config("missing `estimate` section".into()))?;
        Ok(IngestSpec {
            path: base_dir.join(&e.data),
            outcome_column: e.outcome_column.clone(),
            exposure_column: e.exposure_column.clone(),
            instrument_column: e.instrument_column.clone(),
            outcome_threshold: e.outcome_threshold,
            exposure_threshold: e.exposure_threshold,
            instrument_threshold: e.instrument_threshold,
            header: e.header,
        })
    }

    pub fn estimate_level(&self) -> f64 {
        self.estimate.as_ref().map_or(0.95, |e| e.ci_level)
    }
}
