//! JSON and CSV rendering of truths, estimates and study summaries.

use std::io::Write;

use ivnnt_core::dgp::{DgpConfig, DgpTruth};
use ivnnt_core::domain::{Interval, PsiStatus};
use ivnnt_core::harness::{IndexStatus, StudySummary};
use ivnnt_core::{Index, Param, Report};
use serde_json::{json, Value};

use crate::ingest::IngestReport;

/// JSON has no infinities: they become the strings `"inf"` / `"-inf"`,
/// and NaN becomes `null`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x.is_infinite() {
        Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        json!(x)
    }
}

/// Locale-independent CSV cell: shortest round-trip decimal, `inf`, or `NA`.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn interval(ci: Option<Interval<f64>>) -> Value {
    ci.map_or(Value::Null, |c| json!([num(c.lower), num(c.upper)]))
}

fn psi_status(s: PsiStatus) -> &'static str {
    match s {
        PsiStatus::Solved => "Solved",
        PsiStatus::NoSolution => "NoSolution",
        PsiStatus::NotAttempted => "NotAttempted",
    }
}

pub fn truth_json(truth: &DgpTruth, config: &DgpConfig) -> Value {
    json!({
        "link": config.spec.link,
        "psi": nums(&config.psi),
        "gamma": nums(&config.gamma),
        "pi_z": num(config.pi_z),
        "beta": nums(&truth.beta),
        "pb0_true": num(truth.pb0_true),
        "pb1_true": num(truth.pb1_true),
        "pb_true": num(truth.pb_true),
        "nne_true": num(truth.nne_true),
        "ein_true": num(truth.ein_true),
        "nnt_true": num(truth.nnt_true),
        "root_multiplicity": truth.root_multiplicity,
        "solution": truth.solution,
        "achieved_outcome": num(truth.achieved_outcome),
        "residuals": nums(&truth.residuals),
    })
}

pub fn estimate_json(report: &Report, ingestion: Option<&IngestReport>) -> Value {
    let d = &report.diagnostics;
    let theta = report.theta_hat.to_array();
    let mut estimates = serde_json::Map::new();
    let mut se = serde_json::Map::new();
    for p in Param::ALL {
        estimates.insert(p.name().into(), num(theta[p.index()]));
        se.insert(p.name().into(), num(report.se[p.index()]));
    }
    let mut out = json!({
        "link": report.link,
        "n": report.n,
        "ci_level": num(report.ci_level),
        "estimates": estimates,
        "se": se,
        "psi0_status": psi_status(d.psi0_status),
        "psi1_status": psi_status(d.psi1_status),
        "diagnostics": {
            "bread_condition_number": num(d.bread_condition_number),
            "instrument_wald": num(d.instrument_wald),
            "weak_instrument": d.weak_instrument,
            "psi0_multiple_roots": d.psi0_multiple_roots,
            "psi1_multiple_roots": d.psi1_multiple_roots,
            "excluded": d.excluded,
        },
    });
    for idx in Index::ALL {
        let key = idx.name().to_lowercase();
        out[&key] = num(report.theta_hat.index(idx));
        out[format!("{key}_ci")] = interval(*report.ci.get(idx));
        out["diagnostics"][format!("{key}_noninformative_ci")] = json!(*d.noninformative_ci.get(idx));
    }
    if let Some(r) = ingestion {
        out["ingestion"] = json!(r);
    }
    out
}

pub const SUMMARY_COLUMNS: [&str; 19] = [
    "n",
    "index",
    "truth",
    "replications",
    "coverage",
    "se_mc",
    "se_sandwich_mean",
    "avg_bias",
    "mean_estimate",
    "pct_inf_ci",
    "pct_excluded",
    "n_excluded",
    "n_no_solution",
    "n_failed",
    "n_infinite",
    "mean_instrument_wald",
    "baseline_median",
    "baseline_mean_finite",
    "baseline_pct_infinite",
];

pub fn write_summary_csv<W: Write>(summary: &StudySummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in &summary.rows {
        w.write_record([
            r.n.to_string(),
            r.index.name().into(),
            cell(r.truth),
            r.replications.to_string(),
            cell(r.coverage),
            cell(r.se_mc),
            cell(r.se_sandwich_mean),
            cell(r.avg_bias),
            cell(r.mean_estimate),
            cell(r.pct_inf_ci),
            cell(r.pct_excluded),
            r.n_excluded.to_string(),
            r.n_no_solution.to_string(),
            r.n_failed.to_string(),
            r.n_infinite.to_string(),
            cell(r.mean_instrument_wald),
            cell(r.baseline_median),
            cell(r.baseline_mean_finite),
            cell(r.baseline_pct_infinite),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn status_name(s: IndexStatus) -> &'static str {
    match s {
        IndexStatus::Estimated => "estimated",
        IndexStatus::Infinite => "infinite",
        IndexStatus::NoSolution => "no_solution",
        IndexStatus::Excluded => "excluded",
        IndexStatus::Failed => "failed",
    }
}

/// Long format: one row per replication, index and method.
pub fn write_estimates_csv<W: Write>(summary: &StudySummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "n", "index", "method", "estimate", "ci_lower", "ci_upper", "status"])?;
    for rec in &summary.records {
        for idx in Index::ALL {
            let iv = rec.iv.get(idx);
            let (lo, hi) = iv.ci.map_or((String::new(), String::new()), |c| (cell(c.lower), cell(c.upper)));
            w.write_record([
                rec.replication.to_string(),
                rec.n.to_string(),
                idx.name().into(),
                "iv".into(),
                cell(iv.estimate),
                lo,
                hi,
                status_name(iv.status).into(),
            ])?;
            let b = *rec.baseline.get(idx);
            let status = if b.is_nan() {
                "failed"
            } else if b.is_infinite() {
                "infinite"
            } else {
                "estimated"
            };
            w.write_record([
                rec.replication.to_string(),
                rec.n.to_string(),
                idx.name().into(),
                "baseline".into(),
                cell(b),
                String::new(),
                String::new(),
                status.into(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &StudySummary, config: &DgpConfig) -> Value {
    let rows: Vec<Value> = summary
        .rows
        .iter()
        .map(|r| {
            json!({
                "n": r.n,
                "index": r.index,
                "truth": num(r.truth),
                "replications": r.replications,
                "coverage": num(r.coverage),
                "se_mc": num(r.se_mc),
                "se_sandwich_mean": num(r.se_sandwich_mean),
                "avg_bias": num(r.avg_bias),
                "mean_estimate": num(r.mean_estimate),
                "pct_inf_ci": num(r.pct_inf_ci),
                "pct_excluded": num(r.pct_excluded),
                "n_excluded": r.n_excluded,
                "n_no_solution": r.n_no_solution,
                "n_failed": r.n_failed,
                "n_infinite": r.n_infinite,
                "mean_instrument_wald": num(r.mean_instrument_wald),
                "baseline_median": num(r.baseline_median),
                "baseline_mean_finite": num(r.baseline_mean_finite),
                "baseline_pct_infinite": num(r.baseline_pct_infinite),
            })
        })
        .collect();
    json!({ "truth": truth_json(&summary.truth, config), "rows": rows })
}
