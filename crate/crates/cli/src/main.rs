//! `laabench`: run agent benchmarks over the simulated environments, emit
//! reports, sample stratified task sets, and validate trace files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use laabench_core::error::Result;
use laabench_core::fixtures;
use laabench_core::harness::{
    emit_report, load_results, run_benchmark, sample_stratified, validate_trace, BenchmarkSpec,
    ReportFormat, RunConfig,
};

#[derive(Parser)]
#[command(name = "laabench", version, about = "Benchmark LLM-augmented autonomous agents in simulated environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (architecture x task) episode of a benchmark spec.
    Run {
        /// Benchmark spec file (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for traces, results.json, and per-level CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for episode execution.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Reuse trace files already present in the output directory.
        #[arg(long)]
        resume: bool,
        /// Write each episode's rendered prompts to a sidecar file.
        #[arg(long)]
        debug_prompts: bool,
    },
    /// Render the results of a finished run.
    Report {
        /// Output directory of a previous run.
        #[arg(long = "in")]
        input: PathBuf,
        /// markdown or csv.
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Draw a complexity-stratified task sample from a universe file.
    Sample {
        #[arg(long)]
        universe: PathBuf,
        #[arg(long = "per-level")]
        per_level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated complexity levels; defaults to every level present.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u32>>,
    },
    /// Check a trace file: structure, grammar, and architecture shape.
    ValidateTrace { file: PathBuf },
    /// Write the builtin catalog, corpus, task, pool, and example fixtures.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { spec, out, workers, resume, debug_prompts } => {
            let spec = BenchmarkSpec::load(&spec)?;
            std::fs::create_dir_all(&out)?;
            let config = RunConfig { out_dir: out.clone(), workers, resume, debug_prompts };
            let (table, stats) = run_benchmark(&spec, &config)?;
            println!(
                "{} episodes executed, {} resumed, {} aborted",
                stats.executed, stats.resumed, stats.aborted_episodes
            );
            println!("{}", emit_report(&table.reward, ReportFormat::Markdown)?);
            if let Some(recall) = &table.recall {
                println!("{}", emit_report(recall, ReportFormat::Markdown)?);
            }
            println!("results written to {}", out.display());
            Ok(())
        }
        Command::Report { input, format } => {
            let format = ReportFormat::parse(&format)?;
            let results = load_results(&input)?;
            match format {
                ReportFormat::Markdown => {
                    println!("### Mean reward\n");
                    println!("{}", emit_report(&results.table.reward, format)?);
                    if let Some(recall) = &results.table.recall {
                        println!("### Mean recall\n");
                        println!("{}", emit_report(recall, format)?);
                    }
                    let total_aborts: usize =
                        results.table.aborts.values().flat_map(|m| m.values()).sum();
                    println!("Aborted episodes: {total_aborts}");
                }
                ReportFormat::Csv => {
                    print!("{}", emit_report(&results.table.reward, format)?);
                    if let Some(recall) = &results.table.recall {
                        print!("{}", emit_report(recall, format)?);
                    }
                }
            }
            Ok(())
        }
        Command::Sample { universe, per_level, seed, out, levels } => {
            let tasks = fixtures::load_tasks(&universe)?;
            let levels = match levels {
                Some(levels) => levels,
                None => {
                    let mut present: Vec<u32> = tasks.iter().map(|t| t.complexity).collect();
                    present.sort();
                    present.dedup();
                    present
                }
            };
            let sampled = sample_stratified(&tasks, &levels, per_level, seed)?;
            fixtures::save_tasks(&sampled, &out)?;
            println!("sampled {} tasks over levels {levels:?} into {}", sampled.len(), out.display());
            Ok(())
        }
        Command::ValidateTrace { file } => {
            let summary = validate_trace(&file)?;
            println!("ok: {summary}");
            Ok(())
        }
        Command::GenFixtures { out } => {
            let written = fixtures::write_all(&out)?;
            for name in &written {
                println!("wrote {}", out.join(name).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
