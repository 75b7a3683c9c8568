use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use udslab::harness::verify::{self, CaseGrid, Suite};
use udslab::harness::{emit_plotdata, emit_table, read_records, run_and_persist, ExperimentConfig};

#[derive(Parser)]
#[command(name = "udslab", version, about = "Tabular laboratory for sharing unlabeled data in offline RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write records.csv, timings.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Use seeds 0..N instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallel: Option<usize>,
        /// Override a config key, e.g. `--set solver.alpha=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Aggregate records into a mean ± 95% CI table (Markdown + CSV).
    Table {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        group_by: String,
        #[arg(long)]
        metric: String,
        /// Output root; defaults to the directory of the records file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long-format plot data: x, series, mean, ci_lo, ci_hi.
    Plotdata {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        series: String,
        #[arg(long, default_value = "j_true")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run acceptance suites: theorem1, theorem2, theorem3, cases, solver,
    /// determinism or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Print a built-in config as JSON (`cases`: the composition grid).
    Preset {
        #[arg(default_value = "cases")]
        name: String,
    },
}

fn out_root(out: Option<PathBuf>, records: &Path) -> PathBuf {
    out.unwrap_or_else(|| records.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            parallel,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load_with_overrides(&config, &overrides)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(n) = seeds {
                cfg.seeds = (0..n).collect();
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if parallel.is_some() {
                cfg.parallel = parallel;
            }
            cfg.validate()?;
            let sweep = run_and_persist(&cfg)?;
            let failed = sweep.records.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} records ({} failed) -> {}",
                sweep.records.len(),
                failed,
                cfg.output_dir.join("records.csv").display()
            );
        }
        Command::Table {
            records,
            group_by,
            metric,
            out,
        } => {
            let rows = read_records(&records).with_context(|| format!("reading {}", records.display()))?;
            let table = emit_table(&rows, &group_by, &metric)?;
            let dir = out_root(out, &records).join("tables");
            std::fs::create_dir_all(&dir)?;
            let stem = format!("{group_by}_{metric}");
            std::fs::write(dir.join(format!("{stem}.md")), &table.markdown)?;
            std::fs::write(dir.join(format!("{stem}.csv")), &table.csv)?;
            print!("{}", table.markdown);
        }
        Command::Plotdata {
            records,
            x,
            series,
            metric,
            out,
        } => {
            let rows = read_records(&records).with_context(|| format!("reading {}", records.display()))?;
            let csv = emit_plotdata(&rows, &x, &series, &metric)?;
            let dir = out_root(out, &records).join("plots");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{x}_{series}_{metric}.csv"));
            std::fs::write(&path, csv)?;
            println!("{}", path.display());
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let results = verify::run_suite(suite);
            for c in &results {
                println!("{}", c.line());
            }
            if results.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Preset { name } => {
            let cfg = match name.as_str() {
                "cases" => CaseGrid::canonical().experiment_config(),
                "determinism" => verify::determinism_config(),
                other => anyhow::bail!("unknown preset `{other}`"),
            };
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
