//! On-disk layout of generated task sets and campaign outputs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::CampaignOutput;
use crate::lhs::{SampleError, SeedBatch, Task};
use crate::report::{seed_table_csv, summarize, CoverageReport, Summary};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Task {
        path: PathBuf,
        #[source]
        source: SampleError,
    },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    fs::write(path, contents).map_err(fs_err(path))
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(fs_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub task_id: String,
    pub config_id: String,
    pub seed: u64,
    pub config_path: String,
    pub task_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub template: String,
    pub domain: String,
    pub bins: usize,
    pub tasks_per_config: usize,
    pub seeds: Vec<u64>,
    pub tasks: Vec<ManifestTask>,
}

/// Writes `configs/<config>.xml`, `tasks/<task>.xml` and `manifest.json`
/// under `out`. Paths in the manifest are relative to `out`.
pub fn write_generated(
    out: &Path,
    template: &str,
    domain: &str,
    bins: usize,
    tasks_per_config: usize,
    batches: &[SeedBatch],
) -> Result<Manifest, IoError> {
    let mut manifest = Manifest {
        template: template.to_string(),
        domain: domain.to_string(),
        bins,
        tasks_per_config,
        seeds: batches.iter().map(|b| b.seed).collect(),
        tasks: Vec::new(),
    };
    for batch in batches {
        for (id, cfg) in batch.config_ids.iter().zip(&batch.configs) {
            write_file(&out.join("configs").join(format!("{id}.xml")), cfg.to_xml().as_bytes())?;
        }
        for task in &batch.tasks {
            let task_path = format!("tasks/{}.xml", task.task_id);
            let xml = task.to_xml().map_err(|source| IoError::Task {
                path: out.join(&task_path),
                source,
            })?;
            write_file(&out.join(&task_path), xml.as_bytes())?;
            manifest.tasks.push(ManifestTask {
                task_id: task.task_id.clone(),
                config_id: task.config_id.clone(),
                seed: task.seed,
                config_path: format!("configs/{}.xml", task.config_id),
                task_path,
            });
        }
    }
    let path = out.join("manifest.json");
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|source| IoError::Json {
        path: path.clone(),
        source,
    })?;
    json.push(b'\n');
    write_file(&path, &json)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every task listed in a manifest, resolving paths against the
/// manifest's directory.
pub fn load_manifest_tasks(path: &Path, manifest: &Manifest) -> Result<Vec<Task>, IoError> {
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .tasks
        .iter()
        .map(|t| {
            let p = base.join(&t.task_path);
            Task::from_xml(&read_file(&p)?).map_err(|source| IoError::Task { path: p, source })
        })
        .collect()
}

fn jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        buf.write_all(b"\n").map_err(fs_err(path))?;
    }
    write_file(path, &buf)
}

/// Campaign summary including coverage and plan-replay checks.
pub fn campaign_summary(output: &CampaignOutput) -> Summary {
    let mut s = summarize(&output.records);
    s.coverage = Some(CoverageReport {
        agent: output.agent_coverage.summary(),
        oracle: output.oracle_coverage.summary(),
    });
    s.replay_failures = Some(output.replay_failures() as u64);
    s
}

/// Writes `records.jsonl`, `oracle.jsonl`, `timings.jsonl`, `summary.json`
/// and `seed_table.csv`. Only the timings file varies between identical runs.
pub fn write_campaign(out: &Path, output: &CampaignOutput) -> Result<Summary, IoError> {
    jsonl(&out.join("records.jsonl"), &output.records)?;
    jsonl(&out.join("oracle.jsonl"), &output.oracle)?;
    jsonl(&out.join("timings.jsonl"), &output.timings)?;
    let summary = campaign_summary(output);
    let path = out.join("summary.json");
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|source| IoError::Json {
        path: path.clone(),
        source,
    })?;
    json.push(b'\n');
    write_file(&path, &json)?;
    write_file(&out.join("seed_table.csv"), seed_table_csv(&summary).as_bytes())?;
    Ok(summary)
}
