use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use genlang::checkpoint::{list_checkpoints, read_population};
use genlang::experiment::{
    build_table, execute_run, execute_sweep, significance, write_accuracy_bars, write_pvalues_csv,
    write_run_rows, write_similarity_curve, RunConfig, SweepConfig,
};
use genlang::metrics::{
    estimate_distributions, similarity_curve, similarity_report, SimilarityConfig,
};
use genlang::world::{make_splits, AttributeSchema, SplitConfig, SplitManifest};

/// Population training and language-similarity analysis for attribute-guessing
/// dialog agents.
#[derive(Parser)]
#[command(name = "genlang", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one training run from a TOML config.
    Run(RunArgs),
    /// Execute a sweep matrix; completed runs are skipped on re-invocation.
    Sweep(SweepArgs),
    /// Aggregate a sweep directory: accuracy table, paired t-tests, figure
    /// bundles.
    Analyze(AnalyzeArgs),
    /// Compute language-similarity reports over a run's checkpoints.
    Similarity(SimilarityArgs),
    /// Build dataset splits and emit their JSON manifest.
    Splits(SplitsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to ./runs/<derived name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's cross-validation fold.
    #[arg(long)]
    fold: Option<usize>,
    /// Override the config's training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for all run artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 2)]
    jobs: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Sweep output directory to aggregate.
    #[arg(long)]
    dir: PathBuf,
    /// Where to write the bundles; defaults to <dir>/analysis.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Run directory holding checkpoints/.
    #[arg(long)]
    run: PathBuf,
    /// Sampled dialogues per context.
    #[arg(long, default_value_t = 10)]
    draws: usize,
    /// Additive smoothing per token.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also walk every checkpoint into a similarity curve CSV.
    #[arg(long)]
    curve: bool,
}

#[derive(Args)]
struct SplitsArgs {
    /// Cross-validation fold (0..=3).
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of non-forbidden objects additionally held out into test.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    /// Drop the stock forbidden attribute pairs.
    #[arg(long)]
    no_forbidden: bool,
    /// Output JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Similarity(args) => cmd_similarity(args),
        Command::Splits(args) => cmd_splits(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = RunConfig::from_toml(&text)?;
    if let Some(fold) = args.fold {
        config.split.fold = fold;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    config.validate()?;
    let dir = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(config.run_dir_name()));
    let result = execute_run(&config, &dir)?;
    println!(
        "run {} complete: test both {:.4}, one {:.4} (best val {:.4} at epoch {}, stopped at {})",
        config.name,
        result.test_both,
        result.test_one,
        result.best_validation,
        result.best_epoch,
        result.stop_epoch
    );
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let sweep = SweepConfig::from_toml(&text)?;
    let report = execute_sweep(&sweep, &args.out, args.jobs)?;
    let done = report.runs.iter().filter(|r| r.result.is_some()).count();
    let skipped = report.runs.iter().filter(|r| r.skipped).count();
    let failed = report.runs.len() - done;
    println!(
        "sweep complete: {done} runs ok ({skipped} reused), {failed} failed; report at {}",
        args.out.join("sweep_report.json").display()
    );
    for cell in &report.cells {
        println!(
            "  {} / {}: mean test both {:.4} (std {:.4}, n={})",
            cell.setting, cell.policy, cell.mean_test_both, cell.std_test_both, cell.runs
        );
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| args.dir.join("analysis"));
    std::fs::create_dir_all(&out)?;
    let table = build_table(&args.dir)?;
    if table.rows.is_empty() {
        bail!("no completed runs under {}", args.dir.display());
    }
    write_run_rows(&table, &out.join("runs.csv"))?;
    write_accuracy_bars(&table, &out.join("accuracy_bars.csv"))?;
    let sig = significance(&table.rows)?;
    write_pvalues_csv(&sig, &out.join("pvalues.csv"))?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(out.join("analysis.json"))?),
        &serde_json::json!({
            "cells": table.cells,
            "significance": sig,
        }),
    )?;
    println!(
        "{} runs across {} cells analyzed into {}",
        table.rows.len(),
        table.cells.len(),
        out.display()
    );
    Ok(())
}

fn cmd_similarity(args: SimilarityArgs) -> Result<()> {
    let config_text = std::fs::read_to_string(args.run.join("manifest.json"))
        .with_context(|| format!("reading manifest under {}", args.run.display()))?;
    let manifest: genlang::experiment::RunManifest = serde_json::from_str(&config_text)?;
    let schema = AttributeSchema::default();
    let split = make_splits(&schema, &manifest.config.split)?;
    let sim_config = SimilarityConfig {
        draws: args.draws,
        smoothing: args.alpha,
        rounds: manifest.config.train.rounds,
        seed: args.seed,
    };

    let best_dir = args.run.join("checkpoints").join("best");
    let (population, meta) = read_population(&best_dir)?;
    let table = estimate_distributions(
        &population.qbots,
        &population.abots,
        &split.test,
        &sim_config,
    )?;
    let report = similarity_report(&table)?;
    let report_path = args.run.join("similarity.json");
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&report_path)?),
        &report,
    )?;
    println!(
        "best checkpoint (epoch {}): D = {:.4} over {} answerers -> {}",
        meta.epoch,
        report.d,
        population.n_a(),
        report_path.display()
    );

    if args.curve {
        let listed = list_checkpoints(&args.run.join("checkpoints"))?;
        let mut checkpoints = Vec::new();
        for (epoch, phase, path) in listed {
            let (pop, _) = read_population(&path)?;
            checkpoints.push((epoch, phase, pop.qbots, pop.abots));
        }
        if checkpoints.len() < 2 {
            bail!(
                "need at least 2 epoch checkpoints for a curve (enable snapshots in the run config)"
            );
        }
        let points = similarity_curve(&checkpoints, &split.test, &sim_config)?;
        let curve_path = args.run.join("similarity_curve.csv");
        write_similarity_curve(&points, &curve_path)?;
        println!("curve with {} points -> {}", points.len(), curve_path.display());
    }
    Ok(())
}

fn cmd_splits(args: SplitsArgs) -> Result<()> {
    let schema = AttributeSchema::default();
    let config = SplitConfig {
        forbidden_pairs: if args.no_forbidden {
            vec![]
        } else {
            genlang::world::default_forbidden_pairs()
        },
        holdout_fraction: args.holdout,
        fold: args.fold,
        seed: args.seed,
    };
    let split = make_splits(&schema, &config)?;
    let manifest = SplitManifest::new(&schema, &config, &split);
    let json = serde_json::to_string_pretty(&manifest)?;
    match args.out {
        Some(path) => {
            std::fs::write(&path, json)?;
            println!(
                "fold {} seed {}: {} train / {} validation / {} test states -> {}",
                args.fold,
                args.seed,
                split.train.len(),
                split.validation.len(),
                split.test.len(),
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}
