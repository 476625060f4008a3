//! Monte Carlo studies: repeated generate, estimate, summarize.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate_with, solve_beta, true_theta, DgpConfig, DgpTruth};
use crate::domain::{Index, Interval, ObservationSet, PerIndex, PsiStatus};
use crate::error::{DgpError, EstimationError};
use crate::estimator::{instrument_wald, naive_estimates, BaselineMode};
use crate::variance::estimate_report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: DgpConfig,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
    pub master_seed: u64,
}

fn default_level() -> f64 {
    0.95
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), DgpError> {
        self.dgp.validate()?;
        if self.replications == 0 {
            return Err(DgpError::InvalidConfig("replications must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(DgpError::InvalidConfig("sample sizes must be non-empty and positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(DgpError::InvalidConfig(format!("ci_level = {} is not in (0, 1)", self.ci_level)));
        }
        Ok(())
    }
}

/// Generator for replication `r` at sample size `n`: one ChaCha stream per
/// `(n, r)` pair under the master seed.
pub fn replication_rng(master_seed: u64, n: usize, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((n as u64) << 32) ^ r as u64);
    rng
}

/// Wald statistic of the instrument in the exposure model.
pub fn instrument_strength(data: &ObservationSet) -> Result<f64, EstimationError> {
    instrument_wald(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStatus {
    Estimated,
    /// Estimated benefit is not positive.
    Infinite,
    /// A causal parameter the index depends on had no root.
    NoSolution,
    /// Bread condition number at or above the threshold.
    Excluded,
    /// Empty cell in the generated data or separation in the association fit.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOutcome {
    pub estimate: f64,
    pub se: f64,
    pub ci: Option<Interval<f64>>,
    pub status: IndexStatus,
}

impl IndexOutcome {
    fn failed() -> Self {
        Self { estimate: f64::NAN, se: f64::NAN, ci: None, status: IndexStatus::Failed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub n: usize,
    pub replication: usize,
    pub iv: PerIndex<IndexOutcome>,
    /// Unadjusted index estimates; NaN when not computable.
    pub baseline: PerIndex<f64>,
    pub instrument_wald: f64,
}

fn run_replication(config: &StudyConfig, truth: &DgpTruth, n: usize, r: usize) -> ReplicationRecord {
    let mut rng = replication_rng(config.master_seed, n, r);
    let failed = |wald| ReplicationRecord {
        n,
        replication: r,
        iv: PerIndex::from_fn(|_| IndexOutcome::failed()),
        baseline: PerIndex::from_fn(|_| f64::NAN),
        instrument_wald: wald,
    };
    let Ok(data) = generate_with(truth, &config.dgp, n, &mut rng) else { return failed(f64::NAN) };
    let wald = instrument_wald::<f64>(&data).unwrap_or(f64::NAN);
    let baseline = naive_estimates::<f64>(&data, config.baseline_mode)
        .map(|b| b.index)
        .unwrap_or(PerIndex::from_fn(|_| f64::NAN));
    let Ok(report) = estimate_report::<f64>(&data, config.dgp.spec, config.ci_level) else {
        return ReplicationRecord { baseline, ..failed(wald) };
    };
    let d = &report.diagnostics;
    let iv = PerIndex::from_fn(|idx| {
        let solved = match idx {
            Index::Ein => d.psi1_status == PsiStatus::Solved,
            Index::Nne => d.psi0_status == PsiStatus::Solved,
            Index::Nnt => d.psi0_status == PsiStatus::Solved && d.psi1_status == PsiStatus::Solved,
        };
        let estimate = report.theta_hat.index(idx);
        let status = if !solved {
            IndexStatus::NoSolution
        } else if d.excluded {
            IndexStatus::Excluded
        } else if estimate.is_infinite() {
            IndexStatus::Infinite
        } else {
            IndexStatus::Estimated
        };
        let k = idx.param().index();
        IndexOutcome { estimate, se: report.se[k], ci: *report.ci.get(idx), status }
    });
    ReplicationRecord { n, replication: r, iv, baseline, instrument_wald: wald }
}

/// Aggregate metrics for one sample size and one index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub index: Index,
    pub truth: f64,
    pub replications: usize,
    pub n_excluded: usize,
    pub n_no_solution: usize,
    pub n_failed: usize,
    pub n_infinite: usize,
    /// Among replications that are neither excluded, unsolved nor failed.
    /// Infinite estimates count as not covering.
    pub coverage: f64,
    /// Standard deviation of finite estimates across replications.
    pub se_mc: f64,
    /// Mean sandwich standard error over replications with an interval.
    pub se_sandwich_mean: f64,
    /// Mean absolute deviation of finite estimates from the truth.
    pub avg_bias: f64,
    pub mean_estimate: f64,
    /// Share of intervals with upper limit above 1000, infinite estimates
    /// included, over the coverage denominator.
    pub pct_inf_ci: f64,
    pub pct_excluded: f64,
    pub mean_instrument_wald: f64,
    pub baseline_median: f64,
    pub baseline_mean_finite: f64,
    pub baseline_pct_infinite: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub truth: DgpTruth,
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
}

impl StudySummary {
    pub fn row(&self, n: usize, index: Index) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.n == n && r.index == index)
    }
}

/// Solve the DGP, then run every replication.
pub fn run_study(config: &StudyConfig) -> Result<StudySummary, DgpError> {
    config.validate()?;
    let truth = solve_beta(&config.dgp)?;
    Ok(run_study_with_truth(config, &truth))
}

/// Replications for a fixed truth. Deterministic given the master seed,
/// whatever the thread count.
pub fn run_study_with_truth(config: &StudyConfig, truth: &DgpTruth) -> StudySummary {
    let tasks: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let records: Vec<ReplicationRecord> =
        tasks.par_iter().map(|&(n, r)| run_replication(config, truth, n, r)).collect();

    let theta = true_theta(truth, &config.dgp);
    let mut rows = Vec::new();
    for &n in &config.sample_sizes {
        let reps: Vec<&ReplicationRecord> = records.iter().filter(|rec| rec.n == n).collect();
        let walds: Vec<f64> = reps.iter().map(|r| r.instrument_wald).filter(|w| w.is_finite()).collect();
        let mean_wald = mean(&walds);
        for idx in Index::ALL {
            rows.push(summarize(n, idx, theta.index(idx), &reps, mean_wald));
        }
    }
    StudySummary { truth: *truth, rows, records }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn summarize(n: usize, idx: Index, truth: f64, reps: &[&ReplicationRecord], mean_wald: f64) -> SummaryRow {
    let outcomes: Vec<&IndexOutcome> = reps.iter().map(|r| r.iv.get(idx)).collect();
    let count = |s: IndexStatus| outcomes.iter().filter(|o| o.status == s).count();
    let (n_excluded, n_no_solution, n_failed, n_infinite) = (
        count(IndexStatus::Excluded),
        count(IndexStatus::NoSolution),
        count(IndexStatus::Failed),
        count(IndexStatus::Infinite),
    );
    let eligible: Vec<&&IndexOutcome> = outcomes
        .iter()
        .filter(|o| matches!(o.status, IndexStatus::Estimated | IndexStatus::Infinite))
        .collect();
    let covered = eligible
        .iter()
        .filter(|o| o.status == IndexStatus::Estimated && o.ci.is_some_and(|ci| ci.contains(truth)))
        .count();
    let wide = eligible
        .iter()
        .filter(|o| o.status == IndexStatus::Infinite || o.ci.is_some_and(|ci| ci.is_noninformative()))
        .count();
    let finite: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.status == IndexStatus::Estimated)
        .map(|o| o.estimate)
        .collect();
    let sandwich_se: Vec<f64> = eligible
        .iter()
        .filter(|o| o.ci.is_some() && o.se.is_finite())
        .map(|o| o.se)
        .collect();
    let share = |k: usize, of: usize| if of == 0 { f64::NAN } else { k as f64 / of as f64 };

    let baseline: Vec<f64> = reps.iter().map(|r| *r.baseline.get(idx)).filter(|v| !v.is_nan()).collect();
    let baseline_finite: Vec<f64> = baseline.iter().copied().filter(|v| v.is_finite()).collect();

    SummaryRow {
        n,
        index: idx,
        truth,
        replications: reps.len(),
        n_excluded,
        n_no_solution,
        n_failed,
        n_infinite,
        coverage: share(covered, eligible.len()),
        se_mc: sample_sd(&finite),
        se_sandwich_mean: mean(&sandwich_se),
        avg_bias: mean(&finite.iter().map(|e| (e - truth).abs()).collect::<Vec<_>>()),
        mean_estimate: mean(&finite),
        pct_inf_ci: share(wide, eligible.len()),
        pct_excluded: share(n_excluded, reps.len()),
        mean_instrument_wald: mean_wald,
        baseline_median: median(baseline.clone()),
        baseline_mean_finite: mean(&baseline_finite),
        baseline_pct_infinite: share(baseline.len() - baseline_finite.len(), baseline.len()),
    }
}
