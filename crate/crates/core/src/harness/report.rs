use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::experiment::{write_atomic, RunFailure, RunFile, StatsSpec};
use crate::error::{Error, Result};
use crate::evolution::{RunResult, PRESET_NAMES};
use crate::metrics::{convergence_rate, crossover_convergence_rate, interval_ft, pad_series};
use crate::rng::derive_seed;
use crate::stats::{compare_to_baseline, win_tie_loss, CompareOptions, ComparisonVerdict, Orientation, ScoreTable, Verdict, WinTieLoss};

/// Generational intervals `(suffix, lo, hi)`, inclusive.
pub const INTERVALS: [(&str, usize, usize); 4] = [("50", 0, 50), ("100", 51, 100), ("150", 101, 150), ("all", 0, 150)];

/// Length fitness series are padded to before interval metrics are taken.
pub const SERIES_LEN: usize = 151;

pub const CONVERGENCE_METRICS: [&str; 14] = [
    "ft_50", "ft_100", "ft_150", "ft_all", "cr_50", "cr_100", "cr_150", "cr_all", "ccr_50", "ccr_100", "ccr_150",
    "ccr_all", "entropy", "runtime_seconds",
];

pub const GENERALIZATION_METRICS: [&str; 5] = ["log_loss", "precision", "recall", "f1", "auc"];

/// Every metric name the report and the stats command accept.
pub fn metric_names() -> Vec<&'static str> {
    CONVERGENCE_METRICS.iter().chain(&GENERALIZATION_METRICS).copied().collect()
}

pub fn metric_orientation(name: &str) -> Option<Orientation> {
    if !metric_names().contains(&name) {
        return None;
    }
    let lower = name.starts_with("ft_") || name == "log_loss" || name == "runtime_seconds";
    Some(if lower { Orientation::LowerIsBetter } else { Orientation::HigherIsBetter })
}

fn unknown_metric(name: &str) -> Error {
    Error::config("metric", format!("unknown metric {name:?}; valid names: {}", metric_names().join(", ")))
}

/// Value of metric `name` for one run.
pub fn metric_value(run: &RunResult, name: &str) -> Result<f64> {
    let interval = |suffix: &str| {
        INTERVALS
            .iter()
            .find(|(s, _, _)| *s == suffix)
            .map(|&(_, lo, hi)| (lo, hi))
            .ok_or_else(|| unknown_metric(name))
    };
    let series = || pad_series(&run.fitness_series(), SERIES_LEN);
    if let Some(s) = name.strip_prefix("ft_") {
        let (lo, hi) = interval(s)?;
        return interval_ft(&series(), lo, hi);
    }
    if let Some(s) = name.strip_prefix("cr_") {
        let (lo, hi) = interval(s)?;
        return convergence_rate(&series(), lo, hi);
    }
    if let Some(s) = name.strip_prefix("ccr_") {
        let (lo, hi) = interval(s)?;
        return Ok(crossover_convergence_rate(&run.crossover_log(), lo, hi).value);
    }
    let m = &run.test_metrics;
    Ok(match name {
        "entropy" => run.final_entropy,
        "runtime_seconds" => run.runtime_seconds,
        "log_loss" => m.log_loss,
        "precision" => m.precision,
        "recall" => m.recall,
        "f1" => m.f1,
        "auc" => m.auc,
        _ => return Err(unknown_metric(name)),
    })
}

/// Roster order for a set of model names: presets in their canonical order, then the rest sorted.
pub fn model_order(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = PRESET_NAMES
        .iter()
        .filter(|p| names.iter().any(|n| n == *p))
        .map(|p| p.to_string())
        .collect();
    let mut rest: Vec<String> = names
        .iter()
        .filter(|n| !PRESET_NAMES.contains(&n.as_str()))
        .cloned()
        .collect();
    rest.sort();
    rest.dedup();
    out.extend(rest);
    out
}

/// Runs × models table of `metric`, keeping only run indices every model completed.
pub fn score_matrix(models: &[String], runs: &[RunFile], metric: &str) -> Result<(Array2<f64>, Vec<usize>)> {
    if metric_orientation(metric).is_none() {
        return Err(unknown_metric(metric));
    }
    let mut indices: Vec<usize> = runs.iter().map(|r| r.run).collect();
    indices.sort_unstable();
    indices.dedup();
    let complete: Vec<usize> = indices
        .into_iter()
        .filter(|&r| models.iter().all(|m| runs.iter().any(|f| f.run == r && &f.model == m)))
        .collect();
    let mut table = Array2::zeros((complete.len(), models.len()));
    for (i, &r) in complete.iter().enumerate() {
        for (j, m) in models.iter().enumerate() {
            let f = runs.iter().find(|f| f.run == r && &f.model == m).expect("complete block");
            table[[i, j]] = metric_value(&f.result, metric)?;
        }
    }
    Ok((table, complete))
}

/// Per-metric summary across runs plus the comparison against the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub family: String,
    pub orientation: Orientation,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Absent when fewer than two complete runs exist.
    pub comparison: Option<ComparisonVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WtlRow {
    pub family: String,
    pub model: String,
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub name: String,
    pub lo: usize,
    pub hi: usize,
}

/// The comparison report of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub models: Vec<String>,
    pub baseline: String,
    pub n_runs: usize,
    /// Run indices completed by every model; only these enter the statistics.
    pub complete_runs: Vec<usize>,
    pub failures: Vec<RunFailure>,
    pub intervals: Vec<IntervalSpec>,
    pub metrics: Vec<MetricSummary>,
    pub win_tie_loss: Vec<WtlRow>,
}

fn mean_std(col: &[f64]) -> (f64, f64) {
    if col.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = if col.len() > 1 {
        col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Baseline model: `BGP` if present, else the first model.
pub fn baseline_index(models: &[String]) -> usize {
    models.iter().position(|m| m == "BGP").unwrap_or(0)
}

/// Compares every model against the baseline on one metric.
pub fn compare_metric(
    models: &[String],
    runs: &[RunFile],
    metric: &str,
    opts: &CompareOptions,
) -> Result<MetricSummary> {
    let orientation = metric_orientation(metric).ok_or_else(|| unknown_metric(metric))?;
    let (table, _) = score_matrix(models, runs, metric)?;
    let (mean, std): (Vec<f64>, Vec<f64>) = (0..models.len())
        .map(|j| mean_std(&table.column(j).to_vec()))
        .unzip();
    let comparison = if table.nrows() >= 2 && models.len() >= 2 {
        let st = ScoreTable::new(table, orientation)?;
        Some(compare_to_baseline(&st, models, baseline_index(models), opts)?)
    } else {
        None
    };
    let family = if GENERALIZATION_METRICS.contains(&metric) { "generalization" } else { "convergence" };
    Ok(MetricSummary {
        name: metric.to_string(),
        family: family.to_string(),
        orientation,
        mean,
        std,
        comparison,
    })
}

/// Computes every metric summary and the win/tie/loss tallies.
pub fn build_report(
    roster: &[String],
    n_runs: usize,
    runs: &[RunFile],
    failures: &[RunFailure],
    stats: &StatsSpec,
    base_seed: u64,
) -> Result<ExperimentReport> {
    let models = roster.to_vec();
    let (_, complete_runs) = score_matrix(&models, runs, "log_loss")?;
    let mut metrics = Vec::new();
    for (k, name) in metric_names().into_iter().enumerate() {
        let m = if GENERALIZATION_METRICS.contains(&name) {
            stats.friedman_m_generalization
        } else {
            stats.friedman_m_convergence
        };
        let opts = CompareOptions {
            friedman_m: m,
            correction: stats.correction,
            n_boot: stats.n_boot,
            confidence: stats.confidence,
            seed: derive_seed(base_seed, "bootstrap", k as u64),
        };
        metrics.push(compare_metric(&models, runs, name, &opts)?);
    }
    let mut wtl = Vec::new();
    for family in ["convergence", "generalization"] {
        let verdicts: Vec<(&str, Verdict)> = metrics
            .iter()
            .filter(|m| m.family == family)
            .filter_map(|m| m.comparison.as_ref())
            .flat_map(|c| c.pairs.iter().map(|p| (p.model.as_str(), p.verdict)))
            .collect();
        for (model, WinTieLoss { win, tie, loss }) in win_tie_loss(verdicts) {
            wtl.push(WtlRow {
                family: family.to_string(),
                model,
                win,
                tie,
                loss,
            });
        }
    }
    Ok(ExperimentReport {
        baseline: models[baseline_index(&models)].clone(),
        models,
        n_runs,
        complete_runs,
        failures: failures.to_vec(),
        intervals: INTERVALS
            .iter()
            .map(|&(n, lo, hi)| IntervalSpec {
                name: n.to_string(),
                lo,
                hi,
            })
            .collect(),
        metrics,
        win_tie_loss: wtl,
    })
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExperimentReport {
    /// Metric rows: mean, spread and the comparison against the baseline per model.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "metric,family,orientation,model,mean,std,friedman_p,adjusted_friedman_p,conover_p,delta,ci_lo,ci_hi,effect,verdict\n",
        );
        for m in &self.metrics {
            let orient = match m.orientation {
                Orientation::LowerIsBetter => "lower",
                Orientation::HigherIsBetter => "higher",
            };
            for (j, model) in self.models.iter().enumerate() {
                let _ = write!(s, "{},{},{},{},{},{}", m.name, m.family, orient, model, fmt_f64(m.mean[j]), fmt_f64(m.std[j]));
                match &m.comparison {
                    Some(c) => {
                        let _ = write!(s, ",{},{}", fmt_f64(c.friedman_p), fmt_f64(c.adjusted_friedman_p));
                        match c.pairs.iter().find(|p| &p.model == model) {
                            Some(p) => {
                                let _ = write!(
                                    s,
                                    ",{},{},{},{},{},{:?}",
                                    fmt_f64(p.conover_p),
                                    fmt_f64(p.delta),
                                    fmt_f64(p.ci_lo),
                                    fmt_f64(p.ci_hi),
                                    p.effect,
                                    p.verdict
                                );
                            }
                            None => s.push_str(",,,,,,"),
                        }
                    }
                    None => s.push_str(",,,,,,,,"),
                }
                s.push('\n');
            }
        }
        s
    }

    /// Win/tie/loss counts of one metric family.
    pub fn wtl_csv(&self, family: &str) -> String {
        let mut s = String::from("model,win,tie,loss\n");
        for r in self.win_tie_loss.iter().filter(|r| r.family == family) {
            let _ = writeln!(s, "{},{},{},{}", r.model, r.win, r.tie, r.loss);
        }
        s
    }

    /// Writes `report.json`, `metrics.csv`, `wtl_convergence.csv` and `wtl_generalization.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("serialisable");
        write_atomic(&dir.join("report.json"), &json)?;
        write_atomic(&dir.join("metrics.csv"), self.metrics_csv().as_bytes())?;
        write_atomic(&dir.join("wtl_convergence.csv"), self.wtl_csv("convergence").as_bytes())?;
        write_atomic(&dir.join("wtl_generalization.csv"), self.wtl_csv("generalization").as_bytes())?;
        Ok(())
    }
}
