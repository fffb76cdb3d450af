use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::data::{generate_synthetic, load_csv_dataset, split_dataset, CsvOptions, Dataset, SplitSpec, SyntheticSpec};
use super::report::{build_report, ExperimentReport};
use crate::error::{Error, Result};
use crate::evolution::{run, MegpConfig, RunResult, PRESET_NAMES};
use crate::rng::derive_seed;
use crate::stats::Correction;

/// Settings of the statistics stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSpec {
    /// Bonferroni multiplier for Friedman p-values of convergence metrics.
    pub friedman_m_convergence: usize,
    /// Bonferroni multiplier for Friedman p-values of generalisation metrics.
    pub friedman_m_generalization: usize,
    /// Adjustment across Conover pairs.
    pub correction: Correction,
    pub n_boot: usize,
    pub confidence: f64,
}

impl Default for StatsSpec {
    fn default() -> Self {
        Self {
            friedman_m_convergence: 14,
            friedman_m_generalization: 5,
            correction: Correction::Bh,
            n_boot: 10_000,
            confidence: 0.95,
        }
    }
}

/// One experiment: a dataset, a roster of models and a number of seeded runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// CSV file to load; exclusive with `synthetic`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub csv: CsvOptions,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Preset names, see [`PRESET_NAMES`].
    #[serde(default = "default_roster")]
    pub models: Vec<String>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Split fractions and flags. The seed is replaced per run.
    #[serde(default)]
    pub split: SplitSpec,
    /// Configuration fields applied on top of every preset.
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
    #[serde(default)]
    pub stats: StatsSpec,
}

fn default_roster() -> Vec<String> {
    PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

fn default_runs() -> usize {
    30
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentSpec {
    /// A spec over `dataset` with every default.
    pub fn new(dataset: PathBuf) -> Self {
        Self {
            dataset: Some(dataset),
            csv: CsvOptions::default(),
            synthetic: None,
            models: default_roster(),
            n_runs: default_runs(),
            base_seed: 0,
            output_dir: default_output(),
            workers: 0,
            split: SplitSpec::default(),
            overrides: BTreeMap::new(),
            stats: StatsSpec::default(),
        }
    }

    /// Reads a TOML or JSON spec (by extension; anything but `.json` is TOML)
    /// and applies `KEY=VALUE` overrides.
    ///
    /// Keys are dotted paths into the spec (`split.seed=3`). A bare model
    /// configuration field such as `epochs` is short for `overrides.epochs`.
    /// Values are parsed as TOML literals, falling back to plain strings.
    pub fn load(path: &Path, sets: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                what: path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            let t: toml::Value = toml::from_str(&text).map_err(|e| Error::Parse {
                what: path.display().to_string(),
                message: e.to_string(),
            })?;
            serde_json::to_value(t).expect("toml values map to json")
        };
        for set in sets {
            apply_set(&mut value, set)?;
        }
        let mut spec: ExperimentSpec = serde_json::from_value(value).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let (Some(ds), Some(dir)) = (&spec.dataset, path.parent()) {
            if ds.is_relative() && !ds.exists() {
                spec.dataset = Some(dir.join(ds));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config("models", "the roster is empty"));
        }
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "must be at least 1"));
        }
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => return Err(Error::config("dataset", "give either dataset or synthetic, not both")),
            (None, None) => return Err(Error::config("dataset", "give a dataset path or a synthetic table")),
            _ => {}
        }
        let mut seen = Vec::new();
        for m in &self.models {
            if seen.contains(m) {
                return Err(Error::config("models", format!("{m} is listed twice")));
            }
            seen.push(m.clone());
            self.model_config(m, 0)?;
        }
        self.split.validate()?;
        if !(self.stats.confidence > 0.0 && self.stats.confidence < 1.0) {
            return Err(Error::config("stats.confidence", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    /// Preset `model` with the overrides applied and `seed` set, validated.
    pub fn model_config(&self, model: &str, seed: u64) -> Result<MegpConfig> {
        let mut cfg = apply_overrides(&MegpConfig::preset(model)?, &self.overrides)?;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.dataset, &self.synthetic) {
            (Some(p), _) => load_csv_dataset(p, &self.csv),
            (None, Some(s)) => generate_synthetic(s),
            (None, None) => Err(Error::config("dataset", "give a dataset path or a synthetic table")),
        }
    }
}

/// Field names accepted by [`MegpConfig`].
pub fn config_field_names() -> Vec<String> {
    match serde_json::to_value(MegpConfig::bgp()).expect("serialisable") {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => unreachable!("a struct serialises to an object"),
    }
}

/// Replaces fields of `base` by the entries of `overrides`; unknown names are rejected.
pub fn apply_overrides(base: &MegpConfig, overrides: &BTreeMap<String, Value>) -> Result<MegpConfig> {
    let mut v = serde_json::to_value(base).expect("serialisable");
    let obj = v.as_object_mut().expect("object");
    for (k, val) in overrides {
        if !obj.contains_key(k) {
            return Err(Error::config(
                k.clone(),
                format!("not a model setting; expected one of {}", config_field_names().join(", ")),
            ));
        }
        obj.insert(k.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| Error::config("overrides", e.to_string()))
}

fn parse_literal(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => serde_json::to_value(w.v).expect("toml values map to json"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies one `KEY=VALUE` override to a spec tree.
pub fn apply_set(spec: &mut Value, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::config("--set", format!("{set:?} is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config("--set", format!("{set:?} has an empty key")));
    }
    let mut path: Vec<&str> = key.split('.').collect();
    if path.len() == 1 && config_field_names().iter().any(|f| f == path[0]) {
        path.insert(0, "overrides");
    }
    let mut node = spec;
    for (depth, part) in path.iter().enumerate() {
        if !node.is_object() {
            return Err(Error::config(key, "cannot descend into a non-table value"));
        }
        let obj = node.as_object_mut().expect("checked");
        if depth + 1 == path.len() {
            obj.insert(part.to_string(), parse_literal(raw.trim()));
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Everything persisted for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub model: String,
    pub run: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub result: RunResult,
}

/// A run that errored and was left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub model: String,
    pub run: usize,
    pub error: String,
}

/// What [`run_experiment`] produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunFile>,
    pub failures: Vec<RunFailure>,
    pub report: ExperimentReport,
    pub output_dir: PathBuf,
}

/// Path of the JSON file for `model`'s run `run` under `out`.
pub fn run_file_path(out: &Path, model: &str, run: usize) -> PathBuf {
    out.join("runs").join(format!("{model}_run{run:02}.json"))
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Seed of the data split shared by every model in run `run`.
pub fn split_seed(base_seed: u64, run: usize) -> u64 {
    derive_seed(base_seed, "split", run as u64)
}

/// Executes every (model, run) pair, persists each run, and writes the
/// comparison report. `progress` receives one line per finished run.
///
/// Runs that fail are recorded and skipped; the experiment errors only when
/// more than a fifth of them fail.
pub fn run_experiment(spec: &ExperimentSpec, progress: &(dyn Fn(&str) + Sync)) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let dataset = spec.load_dataset()?;
    if !dataset.rejected.is_empty() {
        progress(&format!("warning: {} rows rejected during ingestion", dataset.rejected.len()));
    }
    let out = spec.output_dir.clone();
    fs::create_dir_all(out.join("runs")).map_err(|e| Error::io(&out, e))?;

    let splits = (0..spec.n_runs)
        .map(|r| {
            let split = SplitSpec {
                seed: split_seed(spec.base_seed, r),
                ..spec.split
            };
            split_dataset(&dataset, &split)
        })
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(String, usize)> = spec
        .models
        .iter()
        .flat_map(|m| (0..spec.n_runs).map(move |r| (m.clone(), r)))
        .collect();
    let total = tasks.len();
    let finished = Mutex::new(0usize);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if spec.workers > 0 {
        builder = builder.num_threads(spec.workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let results: Vec<std::result::Result<RunFile, RunFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(model, r)| {
                let seed = derive_seed(spec.base_seed, model, *r as u64);
                let outcome = spec
                    .model_config(model, seed)
                    .and_then(|cfg| run(&cfg, &splits[*r]))
                    .and_then(|result| {
                        let file = RunFile {
                            model: model.clone(),
                            run: *r,
                            seed,
                            split_seed: split_seed(spec.base_seed, *r),
                            result,
                        };
                        let json = serde_json::to_vec_pretty(&file).expect("serialisable");
                        write_atomic(&run_file_path(&out, model, *r), &json)?;
                        Ok(file)
                    });
                let mut done = finished.lock().expect("progress lock");
                *done += 1;
                match outcome {
                    Ok(file) => {
                        progress(&format!(
                            "[{done}/{total}] {model} run {r}: test log-loss {:.4}, {} generations, {:.1}s",
                            file.result.test_metrics.log_loss,
                            file.result.trajectory.len(),
                            file.result.runtime_seconds
                        ));
                        Ok(file)
                    }
                    Err(e) => {
                        progress(&format!("[{done}/{total}] {model} run {r} failed: {e}"));
                        Err(RunFailure {
                            model: model.clone(),
                            run: *r,
                            error: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => runs.push(f),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() * 5 > total {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
        });
    }
    let report = build_report(&spec.models, spec.n_runs, &runs, &failures, &spec.stats, spec.base_seed)?;
    report.write(&out)?;
    Ok(ExperimentOutcome {
        runs,
        failures,
        report,
        output_dir: out,
    })
}

/// Loads every run file under `dir/runs` (or `dir` itself), sorted by model roster order then run.
pub fn load_run_files(dir: &Path) -> Result<Vec<RunFile>> {
    let runs_dir = if dir.join("runs").is_dir() { dir.join("runs") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(|e| Error::io(&runs_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        files.push(read_run_file(&p)?);
    }
    Ok(files)
}

pub fn read_run_file(path: &Path) -> Result<RunFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}
