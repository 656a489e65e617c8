use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use agentprobe::builtin;
use agentprobe::campaign::{generate_tasks_for, run_tasks, CampaignError, CampaignSpec};
use agentprobe::domain::domain;
use agentprobe::io::{self, load_manifest_tasks, read_manifest, write_campaign, write_generated, IoError};
use agentprobe::lhs::generate_batch;
use agentprobe::oracle::SearchParams;
use agentprobe::report::{parse_records, render_text, seed_table_csv, summarize};
use agentprobe::template::EnvironmentTemplate;
use clap::{Args, Parser, Subcommand};

/// Stratified scenario generation, feasibility oracle and error attribution
/// for goal-directed agents.
#[derive(Parser)]
#[command(name = "agentprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write configurations, tasks and a manifest.
    Generate(GenerateArgs),
    /// Run the oracle and agents, then write records and summaries.
    Run(RunArgs),
    /// Summarize a records file.
    Report(ReportArgs),
}

#[derive(Args)]
struct Sampling {
    /// Template XML file, or a builtin name (lava, lava_desk, pointnav).
    #[arg(long, default_value = "lava_desk")]
    template: String,
    /// Domain; defaults to the template's environment type.
    #[arg(long)]
    domain: Option<String>,
    /// Environment configurations per seed.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 10)]
    tasks_per_config: usize,
    /// Comma-separated seeds or ranges `a..b`; AIPROBE_SEED overrides.
    #[arg(long, default_value = "0")]
    seeds: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sampling: Sampling,
    /// Run tasks listed in a manifest instead of generating them.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated agent variants.
    #[arg(long, default_value = "base,inacc_state,inacc_reward,both")]
    agents: String,
    /// Random plans per search iteration.
    #[arg(long, default_value_t = 5)]
    oracle_n: usize,
    /// Maximum backtracking depth.
    #[arg(long, default_value_t = 50)]
    oracle_depth: usize,
    /// Bins per attribute for the search heuristic.
    #[arg(long, default_value_t = 100)]
    oracle_bins: usize,
    /// Simulator steps the search may spend per task.
    #[arg(long, default_value_t = 1_000_000)]
    oracle_steps: u64,
    /// Wall-clock oracle budget per task, in seconds.
    #[arg(long, default_value_t = 10.0)]
    task_timeout: f64,
    /// Agent step limit; defaults to a per-domain bound.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also run the breadth-first verifier on tasks the search solved.
    #[arg(long)]
    verify_all: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    records: PathBuf,
    /// Also write summary.json and seed_table.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Fs { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .trim()
                .parse()
                .map_err(|_| config(format!("bad seed range {part:?}")))?;
            let b: u64 = b
                .trim()
                .parse()
                .map_err(|_| config(format!("bad seed range {part:?}")))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| config(format!("bad seed {part:?}")))?);
        }
    }
    if seeds.is_empty() {
        return Err(config("no seeds given"));
    }
    Ok(seeds)
}

fn seeds(flag: &str) -> Result<Vec<u64>, Failure> {
    match std::env::var("AIPROBE_SEED") {
        Ok(v) if !v.trim().is_empty() => {
            log::info!("AIPROBE_SEED={v} overrides --seeds");
            parse_seeds(&v)
        }
        _ => parse_seeds(flag),
    }
}

fn load_template(name: &str) -> Result<EnvironmentTemplate, Failure> {
    let path = Path::new(name);
    let text = if path.exists() {
        io::read_file(path)?
    } else if let Some(t) = builtin::template(name) {
        t.to_string()
    } else {
        return Err(Failure::Io(format!("{name}: no such template file or builtin")));
    };
    EnvironmentTemplate::parse(&text).map_err(|e| config(format!("{name}: {e}")))
}

fn domain_name(s: &Sampling, template: &EnvironmentTemplate) -> String {
    s.domain.clone().unwrap_or_else(|| template.env_type.clone())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let s = &args.sampling;
    if s.bins == 0 || s.tasks_per_config == 0 {
        return Err(config("--bins and --tasks-per-config must be positive"));
    }
    let template = load_template(&s.template)?;
    let seeds = seeds(&s.seeds)?;
    let mut batches = Vec::new();
    for &seed in &seeds {
        batches.push(generate_batch(&template, s.bins, s.tasks_per_config, seed).map_err(config)?);
    }
    let manifest = write_generated(
        &args.out,
        &s.template,
        &domain_name(s, &template),
        s.bins,
        s.tasks_per_config,
        &batches,
    )?;
    println!(
        "wrote {} tasks over {} seeds to {}",
        manifest.tasks.len(),
        seeds.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let variants: Vec<String> = args
        .agents
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if !args.task_timeout.is_finite() || args.task_timeout <= 0.0 {
        return Err(config("--task-timeout must be positive"));
    }
    let search = SearchParams {
        bins: args.oracle_bins,
        paths_per_iteration: args.oracle_n,
        max_depth: args.oracle_depth,
        time_budget: Duration::from_secs_f64(args.task_timeout),
        max_sim_steps: args.oracle_steps,
        ..SearchParams::default()
    };
    let (template, domain_name, tasks, spec) = if let Some(path) = &args.manifest {
        let manifest = read_manifest(path)?;
        let template = load_template(&manifest.template)?;
        let spec = CampaignSpec {
            configs_per_seed: manifest.bins,
            tasks_per_config: manifest.tasks_per_config,
            seeds: manifest.seeds.clone(),
            variants,
            search,
            max_steps: args.max_steps,
            workers: args.workers,
            verify_all: args.verify_all,
        };
        let name = args.sampling.domain.clone().unwrap_or(manifest.domain.clone());
        let tasks = load_manifest_tasks(path, &manifest)?;
        (template, name, tasks, spec)
    } else {
        let s = &args.sampling;
        let template = load_template(&s.template)?;
        let spec = CampaignSpec {
            configs_per_seed: s.bins,
            tasks_per_config: s.tasks_per_config,
            seeds: seeds(&s.seeds)?,
            variants,
            search,
            max_steps: args.max_steps,
            workers: args.workers,
            verify_all: args.verify_all,
        };
        let name = domain_name(s, &template);
        (template, name, Vec::new(), spec)
    };
    let domain = domain(&domain_name).map_err(config)?;
    spec.validate(domain)?;
    let tasks = if args.manifest.is_some() {
        tasks
    } else {
        generate_tasks_for(&template, &spec)?
    };
    log::info!("running {} tasks with {} variants", tasks.len(), spec.variants.len());
    let output = run_tasks(&template, domain, &tasks, &spec)?;
    let summary = write_campaign(&args.out, &output)?;
    print!("{}", render_text(&summary));
    if output.replay_failures() > 0 {
        log::warn!("{} feasible plans failed to replay", output.replay_failures());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let text = io::read_file(&args.records)?;
    let parsed = parse_records(&text);
    if parsed.malformed > 0 {
        eprintln!("warning: skipped {} malformed record lines", parsed.malformed);
    }
    if parsed.duplicates > 0 {
        eprintln!(
            "warning: dropped {} duplicate (task, variant) records",
            parsed.duplicates
        );
    }
    let summary = summarize(&parsed.records);
    print!("{}", render_text(&summary));
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&summary).map_err(config)? + "\n";
        io::write_file(&out.join("summary.json"), json.as_bytes())?;
        io::write_file(&out.join("seed_table.csv"), seed_table_csv(&summary).as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
