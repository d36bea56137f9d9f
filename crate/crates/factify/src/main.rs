use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use factify::config::{synthetic_config, ExperimentConfig, CACHE_ENV};
use factify::dataio::synth::{write_synth, SynthSpec};
use factify::grid::{run_grid, GridName};
use factify::pipeline::{evaluate_bundle, run_experiment};
use factify::report::{predictions_csv, render_run};
use factify::{Error, Result};

/// Multi-modal claim/document fact verification.
#[derive(Debug, Parser)]
#[command(name = "factify", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted-signal synthetic dataset and a matching config.
    Synth {
        #[arg(long)]
        per_category: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Make every image pair unrelated so only the text carries signal.
        #[arg(long)]
        text_only: bool,
    },
    /// Run an experiment: train, evaluate and persist a bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a split file with a persisted bundle.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Embedding cache; defaults to $FACTIFY_CACHE, then ./cache.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Write per-row predictions here as CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run a named grid of variants on top of a base config.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["table2", "table3", "table4"])]
        grid: String,
    },
    /// Print the evaluation reports of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            per_category,
            seed,
            out,
            text_only,
        } => synth(per_category, seed, &out, text_only),
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&cfg)?;
            println!("run directory: {}", outcome.run_dir.display());
            for (name, report) in [("val", &outcome.val), ("test", &outcome.test)] {
                if let Some(r) = report {
                    println!("{name} weighted F1: {:.4}", r.weighted_f1);
                }
            }
            if !outcome.report.image_failures.is_empty() {
                println!(
                    "{} image failures flagged in run_report.json",
                    outcome.report.image_failures.len()
                );
            }
            Ok(())
        }
        Command::Evaluate {
            bundle,
            split,
            cache,
            predictions,
            workers,
        } => {
            let cache = cache
                .or_else(|| {
                    std::env::var_os(CACHE_ENV)
                        .filter(|v| !v.is_empty())
                        .map(PathBuf::from)
                })
                .unwrap_or_else(|| PathBuf::from("cache"));
            let workers = if workers == 0 {
                std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
            } else {
                workers
            };
            let eval = evaluate_bundle(&bundle, &split, &cache, workers)?;
            if let Some(path) = predictions {
                std::fs::write(&path, predictions_csv(&eval.predictions))
                    .map_err(|e| Error::io(&path, e))?;
            }
            match &eval.report {
                Some(r) => print!("{}", r.to_text_table()),
                None => println!("{} rows scored; split is unlabeled", eval.predictions.len()),
            }
            if !eval.image_failures.is_empty() {
                println!(
                    "{} image failures (image_cosine set to 0)",
                    eval.image_failures.len()
                );
            }
            Ok(())
        }
        Command::Grid { config, grid } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid: GridName = grid.parse()?;
            let table = run_grid(&cfg, grid)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            let path = cfg.output_dir.join(format!(
                "grid-{}-{}.json",
                grid.as_str(),
                &cfg.content_hash()[..12]
            ));
            std::fs::write(&path, table.to_json()).map_err(|e| Error::io(&path, e))?;
            print!("{}", table.to_text());
            println!("written to {}", path.display());
            Ok(())
        }
        Command::Report { run } => {
            print!("{}", render_run(&run)?);
            Ok(())
        }
    }
}

fn synth(per_category: usize, seed: u64, out: &Path, text_only: bool) -> Result<()> {
    if per_category == 0 {
        return Err(Error::Config("--per-category must be at least 1".into()));
    }
    let spec = SynthSpec {
        per_category,
        seed,
        image_signal: !text_only,
    };
    let splits = write_synth(&spec, out)?;
    let cfg_path = out.join("experiment.toml");
    std::fs::write(&cfg_path, synthetic_config(seed).to_toml())
        .map_err(|e| Error::io(&cfg_path, e))?;
    for m in &splits {
        println!(
            "{}: {} rows -> {}",
            m.split,
            m.rows.len(),
            m.source_path.display()
        );
    }
    println!("config: {}", cfg_path.display());
    Ok(())
}
