//! Subcommands behind the `ivnnt` binary: `truths`, `simulate`, `estimate`.

pub mod config;
pub mod ingest;
pub mod report;
pub mod svg;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ivnnt_core::dgp::{solve_beta, DgpTruth};
use ivnnt_core::error::{DgpError, EstimationError};
use ivnnt_core::harness::{run_study, StudySummary};
use ivnnt_core::variance::estimate_report;
use ivnnt_core::{Index, Report};
use thiserror::Error;

use crate::config::FileConfig;
use crate::ingest::{ingest, IngestError, IngestReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("estimation failed: {0}")]
    Estimation(#[from] EstimationError),
    #[error("infeasible data-generating process: {0}")]
    Infeasible(DgpError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            _ => 1,
        }
    }
}

fn dgp_error(e: DgpError) -> CliError {
    match e {
        DgpError::InvalidConfig(msg) => CliError::Config(msg),
        other => CliError::Infeasible(other),
    }
}

pub fn cmd_truths(cfg: &FileConfig) -> Result<(DgpTruth, serde_json::Value), CliError> {
    let dgp = cfg.dgp_config()?;
    let truth = solve_beta(&dgp).map_err(dgp_error)?;
    Ok((truth, report::truth_json(&truth, &dgp)))
}

/// Runs the study and writes `summary.csv`, `summary.json`, `estimates.csv`
/// and one `boxplot_<index>.svg` per index into `out_dir`.
pub fn cmd_simulate(cfg: &FileConfig, out_dir: &Path) -> Result<StudySummary, CliError> {
    let study = cfg.study_config()?;
    let summary = run_study(&study).map_err(dgp_error)?;
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let create = |name: &str| {
        let path = out_dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(io(&path))
    };
    let csv_err = |name: &str| {
        let path = out_dir.join(name);
        move |e: csv::Error| CliError::Io { path, source: e.into() }
    };
    report::write_summary_csv(&summary, create("summary.csv")?).map_err(csv_err("summary.csv"))?;
    report::write_estimates_csv(&summary, create("estimates.csv")?).map_err(csv_err("estimates.csv"))?;
    let json = serde_json::to_string_pretty(&report::summary_json(&summary, &study.dgp)).expect("JSON values serialize");
    let path = out_dir.join("summary.json");
    std::fs::write(&path, json + "\n").map_err(io(&path))?;
    for idx in Index::ALL {
        let truth = summary.rows.iter().find(|r| r.index == idx).map_or(f64::NAN, |r| r.truth);
        let svg = svg::boxplot(idx, truth, &svg::groups_for(&summary, idx));
        let path = out_dir.join(format!("boxplot_{}.svg", idx.name().to_lowercase()));
        std::fs::write(&path, svg).map_err(io(&path))?;
    }
    Ok(summary)
}

/// Ingests the configured file (or `data_override`) and fits the model.
/// Unsolvable causal parameters are reported, not treated as failures.
pub fn cmd_estimate(
    cfg: &FileConfig,
    base_dir: &Path,
    data_override: Option<&Path>,
) -> Result<(Report, IngestReport, serde_json::Value), CliError> {
    let mut spec = cfg.ingest_spec(base_dir)?;
    if let Some(p) = data_override {
        spec.path = p.to_owned();
    }
    let (data, ingestion) = ingest(&spec)?;
    let report = estimate_report::<f64>(&data, cfg.spec(), cfg.estimate_level())?;
    let json = report::estimate_json(&report, Some(&ingestion));
    Ok((report, ingestion, json))
}
