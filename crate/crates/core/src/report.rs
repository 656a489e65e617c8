//! Aggregation of campaign records into summaries and tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::{count_anomalies, AnomalyCount, CampaignRecord, VerdictKind};
use crate::coverage::CoverageSummary;
use crate::domain::VARIANTS;
use crate::oracle::SearchVerdict;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub pass: u64,
    pub agent_errors: u64,
    pub env_errors: u64,
    pub undetermined: u64,
    pub anomalies: AnomalyCount,
}

/// One row per seed: task counts by oracle verdict and agent errors by variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub tasks: u64,
    pub feasible: u64,
    pub infeasible: u64,
    pub timeout: u64,
    pub agent_errors: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub agent: CoverageSummary,
    pub oracle: CoverageSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tasks: u64,
    pub records: u64,
    pub feasible: u64,
    pub infeasible: u64,
    pub timeout: u64,
    /// Tasks whose oracle run failed outright.
    pub oracle_errors: u64,
    pub agent_errors: BTreeMap<String, u64>,
    pub variants: BTreeMap<String, VariantSummary>,
    pub totals: u64,
    pub uniques: u64,
    pub seeds: Vec<SeedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_failures: Option<u64>,
}

/// Folds records in task-id order. Task-level counts use one oracle
/// verdict per task.
pub fn summarize(records: &[CampaignRecord]) -> Summary {
    let mut sorted: Vec<&CampaignRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.task_id, &a.agent_variant).cmp(&(&b.task_id, &b.agent_variant)));

    let mut s = Summary::default();
    let mut rows: BTreeMap<u64, SeedRow> = BTreeMap::new();
    let mut seen_tasks = BTreeSet::new();
    for r in &sorted {
        let row = rows.entry(r.seed).or_insert_with(|| SeedRow {
            seed: r.seed,
            ..SeedRow::default()
        });
        if seen_tasks.insert(r.task_id.as_str()) {
            s.tasks += 1;
            row.tasks += 1;
            match r.oracle_verdict {
                Some(SearchVerdict::Feasible) => {
                    s.feasible += 1;
                    row.feasible += 1;
                }
                Some(SearchVerdict::Infeasible) => {
                    s.infeasible += 1;
                    row.infeasible += 1;
                }
                Some(_) => {
                    s.timeout += 1;
                    row.timeout += 1;
                }
                None => s.oracle_errors += 1,
            }
        }
        s.records += 1;
        let v = s.variants.entry(r.agent_variant.clone()).or_default();
        match r.verdict {
            VerdictKind::Pass => v.pass += 1,
            VerdictKind::AgentError => {
                v.agent_errors += 1;
                *row.agent_errors.entry(r.agent_variant.clone()).or_default() += 1;
            }
            VerdictKind::EnvError => v.env_errors += 1,
            VerdictKind::Undetermined => v.undetermined += 1,
        }
    }
    for (name, v) in s.variants.iter_mut() {
        v.anomalies = count_anomalies(sorted.iter().copied().filter(|r| &r.agent_variant == name));
        s.agent_errors.insert(name.clone(), v.agent_errors);
    }
    for row in rows.values_mut() {
        for name in s.variants.keys() {
            row.agent_errors.entry(name.clone()).or_default();
        }
    }
    let all = count_anomalies(sorted.iter().copied());
    s.totals = all.total;
    s.uniques = all.unique;
    s.seeds = rows.into_values().collect();
    s
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed rows followed by `mean` and `std` rows. Columns are seed,
/// feasible, infeasible and one agent-error column per variant, the
/// standard four first.
pub fn seed_table_csv(summary: &Summary) -> String {
    let mut variants: Vec<String> = VARIANTS.iter().map(|v| v.to_string()).collect();
    variants.extend(
        summary
            .variants
            .keys()
            .filter(|k| !VARIANTS.contains(&k.as_str()))
            .cloned(),
    );

    let mut out = String::from("seed,feasible,infeasible");
    for v in &variants {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 2 + variants.len()];
    for row in &summary.seeds {
        let mut vals = vec![row.feasible, row.infeasible];
        vals.extend(variants.iter().map(|v| row.agent_errors.get(v).copied().unwrap_or(0)));
        let _ = write!(out, "{}", row.seed);
        for (i, x) in vals.iter().enumerate() {
            let _ = write!(out, ",{x}");
            columns[i].push(*x as f64);
        }
        out.push('\n');
    }
    let stats: Vec<(f64, f64)> = columns.iter().map(|c| mean_std(c)).collect();
    out.push_str("mean");
    for (m, _) in &stats {
        let _ = write!(out, ",{m:.1}");
    }
    out.push_str("\nstd");
    for (_, sd) in &stats {
        let _ = write!(out, ",{sd:.1}");
    }
    out.push('\n');
    out
}

/// Parsed records file.
#[derive(Debug, Clone, Default)]
pub struct RecordsFile {
    pub records: Vec<CampaignRecord>,
    /// Non-empty lines that did not parse.
    pub malformed: usize,
    /// Repeated (task, variant) pairs; only the first is kept.
    pub duplicates: usize,
}

pub fn parse_records(text: &str) -> RecordsFile {
    let mut out = RecordsFile::default();
    let mut seen = BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match serde_json::from_str::<CampaignRecord>(line) {
            Ok(r) => {
                if seen.insert((r.task_id.clone(), r.agent_variant.clone())) {
                    out.records.push(r);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(_) => out.malformed += 1,
        }
    }
    out
}

/// Plain-text report: task partition, per-variant tallies and the seed table.
pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "tasks {}  feasible {}  infeasible {}  timeout {}  oracle errors {}",
        summary.tasks, summary.feasible, summary.infeasible, summary.timeout, summary.oracle_errors
    );
    let _ = writeln!(out, "anomalies total {}  unique {}", summary.totals, summary.uniques);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<14} {:>8} {:>12} {:>10} {:>12} {:>8} {:>8}",
        "variant", "pass", "agent_error", "env_error", "undetermined", "total", "unique"
    );
    for (name, v) in &summary.variants {
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>12} {:>10} {:>12} {:>8} {:>8}",
            name, v.pass, v.agent_errors, v.env_errors, v.undetermined, v.anomalies.total, v.anomalies.unique
        );
    }
    if let Some(c) = &summary.coverage {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "coverage D={}  agent {} ({} bins)  oracle {} ({} bins)",
            c.agent.dims,
            c.agent.fraction_sci_notation,
            c.agent.unique_bins,
            c.oracle.fraction_sci_notation,
            c.oracle.unique_bins
        );
    }
    let _ = writeln!(out);
    out.push_str(&seed_table_csv(summary));
    out
}
