use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use convertest_core::exec::{ExecMode, ExecutorConfig};
use convertest_core::model::{Generator, Strategy};
use convertest_core::pipeline::{
    load_tasks, run_pipeline, write_run_dir, ProviderMode, RunConfig, RunReport, Stage, ABLATION_LATTICE,
};
use convertest_core::report::{read_report, render_table, JSON_FILE};

#[derive(Parser)]
#[command(name = "convertest", version, about = "Generate and filter unit tests by consensus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate test suites and candidate solutions.
    Generate(RunArgs),
    /// Generate, then label tests by dual execution agreement.
    Verify(RunArgs),
    /// Full pipeline including metrics against ground truth.
    Evaluate(RunArgs),
    /// Print the table for one or more finished runs.
    Report {
        /// Run directories or report.json files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Evaluate the four ablation configurations on the same tasks.
    Ablate(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Htg,
    Tstg,
    Sctg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodegenArg {
    Vanilla,
    Cove,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Live,
    Replay,
    Mock,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long, value_enum, default_value = "sctg")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "cove")]
    codegen: CodegenArg,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    z: usize,
    #[arg(long, default_value_t = 3)]
    max_rounds: usize,
    /// Ask each verification question in a separate request.
    #[arg(long)]
    per_question: bool,
    #[arg(long, default_value = "mock")]
    model: String,
    #[arg(long, value_enum, default_value = "mock")]
    provider: ProviderArg,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Scripted responses for the mock provider.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// OpenAI-compatible endpoint for the live provider.
    #[arg(long)]
    endpoint: Option<String>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Harness command. Without it execution is simulated from --oracle.
    #[arg(long)]
    harness: Option<String>,
    /// Simulated execution fixture.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn config(&self, stage: Stage) -> RunConfig {
        let defaults = ExecutorConfig::default();
        let mode = if self.harness.is_some() { ExecMode::Harness } else { ExecMode::Simulated };
        RunConfig {
            strategy: match self.strategy {
                StrategyArg::Htg => Strategy::Htg,
                StrategyArg::Tstg => Strategy::Tstg,
                StrategyArg::Sctg => Strategy::Sctg,
            },
            generator: match self.codegen {
                CodegenArg::Vanilla => Generator::Vanilla,
                CodegenArg::Cove => Generator::Cove,
            },
            m: self.m,
            n: self.n,
            z: self.z,
            max_rounds: self.max_rounds,
            per_question: self.per_question,
            model_id: self.model.clone(),
            provider: match self.provider {
                ProviderArg::Live => ProviderMode::Live,
                ProviderArg::Replay => ProviderMode::Replay,
                ProviderArg::Mock => ProviderMode::Mock,
            },
            cache_dir: self.cache_dir.clone(),
            mock_script: self.mock_script.clone(),
            endpoint: self.endpoint.clone(),
            templates_dir: self.templates.clone(),
            executor: ExecutorConfig {
                timeout_ms: self.timeout_ms,
                worker_count: self.workers.unwrap_or(defaults.worker_count),
                harness_path: self.harness.clone(),
                mode,
                ..defaults
            },
            oracle: self.oracle.clone(),
            seed: self.seed,
            stage,
            // Each harness-mode task already starts one child per worker.
            parallel_tasks: mode == ExecMode::Simulated,
            ..RunConfig::default()
        }
    }
}

fn run_one(args: &RunArgs, cfg: &RunConfig) -> Result<RunReport> {
    let tasks = load_tasks(&args.tasks)?;
    let output = run_pipeline(&tasks, cfg)?;
    let dir = write_run_dir(&args.out, &output)?;
    eprintln!("{}: run written to {}", cfg.label(), dir.display());
    Ok(output.report)
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(JSON_FILE)
    } else {
        p.to_path_buf()
    }
}

fn exit_for(reports: &[RunReport]) -> ExitCode {
    let failed: Vec<&str> = reports.iter().flat_map(RunReport::failed_tasks).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("quarantined tasks: {}", failed.join(", "));
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (args, stage) = match &cli.command {
        Cmd::Generate(a) => (a, Stage::Generate),
        Cmd::Verify(a) => (a, Stage::Verify),
        Cmd::Evaluate(a) => (a, Stage::Evaluate),
        Cmd::Report { runs } => {
            let reports = runs
                .iter()
                .map(|p| read_report(&report_path(p)).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", render_table(&reports.iter().collect::<Vec<_>>()));
            return Ok(exit_for(&reports));
        }
        Cmd::Ablate(a) => {
            let base = a.config(Stage::Evaluate);
            if base.provider == ProviderMode::Replay && base.cache_dir.is_none() {
                bail!("replay mode needs --cache-dir");
            }
            let mut reports = Vec::new();
            for (strategy, generator) in ABLATION_LATTICE {
                let cfg = RunConfig { strategy, generator, ..base.clone() };
                reports.push(run_one(a, &cfg)?);
            }
            let table = render_table(&reports.iter().collect::<Vec<_>>());
            let path = a.out.join("ablation.md");
            std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
            return Ok(exit_for(&reports));
        }
    };
    let report = run_one(args, &args.config(stage))?;
    if stage == Stage::Evaluate {
        print!("{}", render_table(&[&report]));
    }
    Ok(exit_for(std::slice::from_ref(&report)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
