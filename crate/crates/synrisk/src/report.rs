//! The risk report: JSON document, text digest and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Per-record rows shown in the text digest before truncation.
pub const DIGEST_ROW_CAP: usize = 10_000;
/// Posterior vectors longer than this are left out of per-record detail.
pub const POSTERIOR_DETAIL_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub schema_version: u32,
    pub header: ReportHeader,
    pub body: ReportBody,
}

/// Run metadata; everything that may differ between identical runs lives
/// here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub pipeline: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub release: Option<ReleaseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute: Option<AttributeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification: Option<IdentificationSection>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSection {
    pub synthesizer: String,
    pub m: usize,
    pub retained_draws: usize,
    pub n_rows: usize,
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
    /// Manifest location relative to the output directory, when the run
    /// wrote the release.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCount {
    pub rank: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoSection {
    pub mean_r1: f64,
    pub median_r1: f64,
    pub mean_r2: f64,
    pub median_r2: f64,
    pub tied_modes: usize,
    pub map_correct_pct: f64,
    pub unique_map_correct_pct: f64,
    pub mean_map_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDetail {
    pub record_id: usize,
    pub guesses: usize,
    pub rank: usize,
    pub true_probability: f64,
    pub max_probability: f64,
    pub dropped_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSection {
    pub knowledge: String,
    pub prior: String,
    pub guesses: String,
    pub metadata_known: bool,
    pub records_assessed: usize,
    pub rank_distribution: Vec<RankCount>,
    pub mean_true_probability: f64,
    pub median_true_probability: f64,
    pub dropped_draws_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<RecordDetail>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub row_id: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDetail {
    pub target_id: String,
    pub true_row_id: Option<usize>,
    pub c: usize,
    pub t: Option<bool>,
    pub k: Option<bool>,
    pub f: Option<bool>,
    pub max_probability: f64,
    pub not_in_release: f64,
    pub matches: Vec<MatchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSection {
    pub in_sample: bool,
    pub metadata_known: bool,
    pub iterations: usize,
    pub targets: usize,
    pub evaluated: usize,
    pub excluded: usize,
    pub expected_match_risk: f64,
    pub true_match_rate: f64,
    pub false_match_rate: f64,
    pub unique_matches: usize,
    pub no_unique_matches: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_target: Option<Vec<TargetDetail>>,
}

/// Median of a list; zero when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Human-readable digest. Per-record and per-target tables stop after
/// [`DIGEST_ROW_CAP`] rows.
pub fn render_text(report: &RiskReport) -> String {
    let mut s = String::new();
    let h = &report.header;
    let b = &report.body;
    let _ = writeln!(s, "{} {} report", h.tool, h.version);
    let _ = writeln!(s, "config hash  {}", h.config_hash);
    let _ = writeln!(s, "pipeline     {}", b.pipeline);
    let _ = writeln!(s, "seed         {}", b.seed);

    if let Some(r) = &b.release {
        let _ = writeln!(s, "\n[release]");
        let _ = writeln!(s, "synthesizer  {}  m={}  draws={}  rows={}", r.synthesizer, r.m, r.retained_draws, r.n_rows);
        for (k, v) in &r.hyperparameters {
            let _ = writeln!(s, "  {k} = {v}");
        }
    }

    if let Some(a) = &b.attribute {
        let _ = writeln!(s, "\n[attribute risk]");
        let _ = writeln!(s, "knowledge {}, prior {}, guesses {}", a.knowledge, a.prior, a.guesses);
        let _ = writeln!(s, "records assessed     {}", a.records_assessed);
        let _ = writeln!(s, "mean true posterior  {:.6}", a.mean_true_probability);
        let _ = writeln!(s, "median true posterior {:.6}", a.median_true_probability);
        let _ = writeln!(s, "dropped draws        {}", a.dropped_draws_total);
        let _ = writeln!(s, "{:>6} {:>8} {:>8}", "rank", "records", "share");
        for rc in &a.rank_distribution {
            let share = rc.count as f64 / a.records_assessed.max(1) as f64;
            let _ = writeln!(s, "{:>6} {:>8} {:>8.4}", rc.rank, rc.count, share);
        }
        if let Some(g) = &a.geo {
            let _ = writeln!(s, "R1 mean/median       {:.4} / {:.4}", g.mean_r1, g.median_r1);
            let _ = writeln!(s, "R2 mean/median       {:.4} / {:.4}", g.mean_r2, g.median_r2);
            let _ = writeln!(s, "MAP correct          {:.2}%", g.map_correct_pct);
            let _ = writeln!(s, "unique + MAP correct {:.2}%", g.unique_map_correct_pct);
            let _ = writeln!(s, "mean MAP distance    {:.4}", g.mean_map_distance);
            let _ = writeln!(s, "tied modes           {}", g.tied_modes);
        }
        if let Some(records) = &a.records {
            let _ = writeln!(s, "{:>10} {:>7} {:>5} {:>12} {:>12} {:>10}", "record", "guesses", "rank", "p(true)", "p(max)", "r1");
            for r in records.iter().take(DIGEST_ROW_CAP) {
                let _ = writeln!(
                    s,
                    "{:>10} {:>7} {:>5} {:>12.6} {:>12.6} {:>10}",
                    r.record_id,
                    r.guesses,
                    r.rank,
                    r.true_probability,
                    r.max_probability,
                    opt(r.r1.map(|x| format!("{x:.4}")))
                );
            }
            if records.len() > DIGEST_ROW_CAP {
                let _ = writeln!(s, "... {} more records in attribute_records.csv", records.len() - DIGEST_ROW_CAP);
            }
        }
    }

    if let Some(i) = &b.identification {
        let _ = writeln!(s, "\n[identification risk]");
        let _ = writeln!(
            s,
            "in_sample {}, metadata_known {}, iterations {}",
            i.in_sample, i.metadata_known, i.iterations
        );
        let _ = writeln!(s, "targets              {} ({} evaluated, {} excluded)", i.targets, i.evaluated, i.excluded);
        let _ = writeln!(s, "expected match risk  {:.6}", i.expected_match_risk);
        let _ = writeln!(s, "true match rate      {:.6}", i.true_match_rate);
        let fmr = if i.no_unique_matches { "0 (no unique matches)".to_string() } else { format!("{:.6}", i.false_match_rate) };
        let _ = writeln!(s, "false match rate     {fmr}");
        let _ = writeln!(s, "unique matches       {}", i.unique_matches);
        if let Some(targets) = &i.per_target {
            let _ = writeln!(s, "{:>12} {:>8} {:>6} {:>6} {:>12} {:>12}", "target", "true", "c", "T", "p(max)", "p(outside)");
            for t in targets.iter().take(DIGEST_ROW_CAP) {
                let _ = writeln!(
                    s,
                    "{:>12} {:>8} {:>6} {:>6} {:>12.6} {:>12.6}",
                    t.target_id,
                    opt(t.true_row_id),
                    t.c,
                    opt(t.t.map(u8::from)),
                    t.max_probability,
                    t.not_in_release
                );
            }
            if targets.len() > DIGEST_ROW_CAP {
                let _ = writeln!(s, "... {} more targets in identification_targets.csv", targets.len() - DIGEST_ROW_CAP);
            }
        }
    }

    if !b.warnings.is_empty() {
        let _ = writeln!(s, "\n[warnings]");
        for w in &b.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::input(path, e))
}

fn finish(path: &Path, w: csv::Writer<fs::File>) -> Result<()> {
    w.into_inner().map_err(|e| CliError::input(path, e.to_string()))?;
    Ok(())
}

/// Writes the CSV tables for the sections present in the report.
pub fn write_tables(dir: &Path, report: &RiskReport) -> Result<Vec<String>> {
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| CliError::input(path, e)
    };
    let mut written = Vec::new();
    if let Some(a) = &report.body.attribute {
        let path = dir.join("rank_distribution.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["rank", "records", "share"]).map_err(csv_err(&path))?;
        for rc in &a.rank_distribution {
            let share = rc.count as f64 / a.records_assessed.max(1) as f64;
            w.write_record([rc.rank.to_string(), rc.count.to_string(), share.to_string()]).map_err(csv_err(&path))?;
        }
        finish(&path, w)?;
        written.push("rank_distribution.csv".to_string());

        if let Some(records) = &a.records {
            let path = dir.join("attribute_records.csv");
            let mut w = csv_writer(&path)?;
            w.write_record(["record_id", "guesses", "rank", "true_probability", "max_probability", "dropped_draws", "r1", "r2"])
                .map_err(csv_err(&path))?;
            for r in records {
                w.write_record([
                    r.record_id.to_string(),
                    r.guesses.to_string(),
                    r.rank.to_string(),
                    r.true_probability.to_string(),
                    r.max_probability.to_string(),
                    r.dropped_draws.to_string(),
                    r.r1.map(|x| x.to_string()).unwrap_or_default(),
                    r.r2.map(|x| x.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err(&path))?;
            }
            finish(&path, w)?;
            written.push("attribute_records.csv".to_string());
        }
    }
    if let Some(targets) = report.body.identification.as_ref().and_then(|i| i.per_target.as_ref()) {
        let path = dir.join("identification_targets.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["target_id", "true_row_id", "c", "t", "k", "f", "max_probability", "not_in_release"])
            .map_err(csv_err(&path))?;
        let b = |x: Option<bool>| x.map(|v| u8::from(v).to_string()).unwrap_or_default();
        for t in targets {
            w.write_record([
                t.target_id.clone(),
                t.true_row_id.map(|x| x.to_string()).unwrap_or_default(),
                t.c.to_string(),
                b(t.t),
                b(t.k),
                b(t.f),
                t.max_probability.to_string(),
                t.not_in_release.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
        finish(&path, w)?;
        written.push("identification_targets.csv".to_string());
    }
    Ok(written)
}
