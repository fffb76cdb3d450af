//! The `megp` command line.
//!
//! Exit codes: 0 on success, 1 on any validation, input or I/O error, 2 when
//! an experiment loses more than a fifth of its runs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{
    compare_metric, generate_synthetic, load_run_files, metric_names, model_order, read_run_file, run_experiment,
    score_matrix, write_atomic, ExperimentSpec, MetricSummary, RunFile, SyntheticSpec,
};
use crate::rng::derive_seed;
use crate::stats::{CompareOptions, Correction};

#[derive(Debug, Parser)]
#[command(name = "megp", version, about = "Multi-population ensemble genetic programming for classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a TOML or JSON file.
    Run(RunArgs),
    /// Write a synthetic classification dataset as CSV.
    Synth(SynthArgs),
    /// Recompute the statistics of one metric from persisted runs.
    Stats(StatsArgs),
    /// Summarise one persisted run.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment file (`.toml`, or `.json`).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a setting, e.g. `n_runs=2`, `split.seed=3` or `p_en=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output directory; replaces `output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Base seed; replaces `base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Destination CSV file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Standard deviation of the Gaussian noise around each class centre.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Euclidean distance of each class centre from the origin.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Experiment output directory, or a directory of run files.
    pub results: PathBuf,
    /// Metric to compare.
    #[arg(long)]
    pub metric: String,
    /// Adjustment across the pairwise post-hoc p-values.
    #[arg(long, default_value = "bh", value_parser = ["bonferroni", "bh"])]
    pub correction: String,
    /// Bonferroni multiplier applied to the Friedman p-value.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Bootstrap resamples for the effect-size interval.
    #[arg(long, default_value_t = 10_000)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; defaults to `stats_<metric>.json` inside the results directory.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A run file written by `run`.
    pub run_file: PathBuf,
}

/// The file written by `stats`.
#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub metric: String,
    pub correction: Correction,
    pub friedman_m: usize,
    pub runs: Vec<usize>,
    pub summary: MetricSummary,
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TooManyFailures { .. } => 2,
        _ => 1,
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Stats(a) => cmd_stats(&a).map(|_| ()),
        Command::Inspect(a) => {
            print!("{}", cmd_inspect(&a.run_file)?);
            Ok(())
        }
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    if !a.config.is_file() {
        return Err(Error::config("--config", format!("{} does not exist", a.config.display())));
    }
    let mut sets = a.sets.clone();
    if let Some(out) = &a.out {
        sets.push(format!("output_dir={}", toml_string(&out.display().to_string())));
    }
    if let Some(seed) = a.seed {
        sets.push(format!("base_seed={seed}"));
    }
    if let Some(w) = a.workers {
        sets.push(format!("workers={w}"));
    }
    let spec = ExperimentSpec::load(&a.config, &sets)?;
    let outcome = run_experiment(&spec, &|line| eprintln!("{line}"))?;
    eprintln!(
        "{} runs written to {} ({} failed)",
        outcome.runs.len(),
        outcome.output_dir.display(),
        outcome.failures.len()
    );
    Ok(())
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        n: a.n,
        f: a.features,
        classes: a.classes,
        noise: a.noise,
        separation: a.separation,
        seed: a.seed,
    })?;
    ds.write_csv(&a.out)?;
    eprintln!("wrote {} rows, {} features to {}", ds.n_rows(), ds.n_features(), a.out.display());
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> Result<StatsReport> {
    if !metric_names().contains(&a.metric.as_str()) {
        return Err(Error::config(
            "--metric",
            format!("unknown metric {:?}; valid names: {}", a.metric, metric_names().join(", ")),
        ));
    }
    let correction: Correction = a.correction.parse()?;
    let runs = load_run_files(&a.results)?;
    let names: Vec<String> = runs.iter().map(|r| r.model.clone()).collect();
    let models = model_order(&names);
    if models.len() < 2 {
        return Err(Error::config("results", format!("need at least 2 models, found {}", models.len())));
    }
    let (_, complete) = score_matrix(&models, &runs, &a.metric)?;
    if complete.len() < 2 {
        return Err(Error::config(
            "results",
            format!("need at least 2 runs completed by every model, found {}", complete.len()),
        ));
    }
    let opts = CompareOptions {
        friedman_m: a.m.max(1),
        correction,
        n_boot: a.n_boot,
        confidence: a.confidence,
        seed: derive_seed(a.seed, "bootstrap", 0),
    };
    let summary = compare_metric(&models, &runs, &a.metric, &opts)?;
    let report = StatsReport {
        metric: a.metric.clone(),
        correction,
        friedman_m: opts.friedman_m,
        runs: complete,
        summary,
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.results.join(format!("stats_{}.json", a.metric)));
    write_atomic(&out, &serde_json::to_vec_pretty(&report).expect("serialisable"))?;
    print!("{}", format_stats(&report));
    eprintln!("wrote {}", out.display());
    Ok(report)
}

fn format_stats(r: &StatsReport) -> String {
    let mut s = String::new();
    let c = r.summary.comparison.as_ref().expect("at least two runs");
    let _ = writeln!(s, "metric {} ({:?}), {} runs", r.metric, r.summary.orientation, r.runs.len());
    let _ = writeln!(
        s,
        "friedman p {:.4e} (adjusted {:.4e}, m = {})",
        c.friedman_p, c.adjusted_friedman_p, r.friedman_m
    );
    let _ = writeln!(s, "baseline {}", c.baseline);
    for (j, m) in c.models.iter().enumerate() {
        let _ = write!(s, "  {m:<10} mean {:.6} std {:.6}", r.summary.mean[j], r.summary.std[j]);
        if let Some(p) = c.pairs.iter().find(|p| &p.model == m) {
            let _ = write!(
                s,
                "  delta {:+.3} [{:+.3}, {:+.3}] {}  conover p {:.4e}  {:?}",
                p.delta, p.ci_lo, p.ci_hi, p.effect, p.conover_p, p.verdict
            );
        }
        s.push('\n');
    }
    s
}

/// Human-readable summary of a run file.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    let f = read_run_file(path)?;
    Ok(format_run(&f))
}

fn format_run(f: &RunFile) -> String {
    let r = &f.result;
    let mut s = String::new();
    let _ = writeln!(s, "model {} run {} seed {} split seed {}", f.model, f.run, f.seed, f.split_seed);
    let _ = writeln!(s, "config:");
    let cfg = serde_json::to_value(&r.config).expect("serialisable");
    if let Some(obj) = cfg.as_object() {
        for (k, v) in obj {
            let _ = writeln!(s, "  {k} = {v}");
        }
    }
    let _ = writeln!(s, "views:");
    for (p, v) in r.views.iter().enumerate() {
        let _ = writeln!(s, "  population {p}: {v:?}");
    }
    let fm = &r.final_model;
    let _ = writeln!(
        s,
        "final model from generation {}: train fitness {:.6}, validation fitness {:.6}",
        fm.generation, fm.train_fitness, fm.val_fitness
    );
    let m = &r.test_metrics;
    let _ = writeln!(
        s,
        "test: log-loss {:.6} precision {:.4} recall {:.4} f1 {:.4} auc {:.4}",
        m.log_loss, m.precision, m.recall, m.f1, m.auc
    );
    let _ = writeln!(
        s,
        "{} generations in {:.2}s, final entropy {:.4}",
        r.trajectory.len(),
        r.runtime_seconds,
        r.final_entropy
    );
    let ranks_header: String = (0..r.config.n_populations).map(|p| format!(" rank_p{p}")).collect();
    let _ = writeln!(s, "generation  best_so_far  val_best_so_far  crossovers improved{ranks_header}");
    let series = r.fitness_series();
    for (rec, ft) in r.trajectory.iter().zip(series) {
        let ranks: String = rec.member_ranks.iter().map(|k| format!(" {k:>7}")).collect();
        let _ = writeln!(
            s,
            "{:>10}  {:>11.6}  {:>15.6}  {:>10} {:>8}{ranks}",
            rec.generation, ft, rec.best_so_far_val_fitness, rec.crossover.events, rec.crossover.improved
        );
    }
    s
}
