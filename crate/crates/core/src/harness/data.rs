//! Datasets: CSV ingestion, synthetic blobs, and stratified splitting with
//! training-only standardisation.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::LabelMatrix;
use crate::rng::GpRng;

/// A labelled feature matrix with dense 0-based class codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub class_count: usize,
    pub feature_names: Vec<String>,
    /// Original label text per class code, in first-appearance order.
    pub class_names: Vec<String>,
    pub source: Option<PathBuf>,
    /// Rows dropped during ingestion.
    pub rejected: Vec<RejectedRow>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Builds a dataset from in-memory parts, checking labels and finiteness.
    pub fn from_parts(x: Array2<f64>, y: Vec<usize>, class_count: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::contract(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if class_count < 2 {
            return Err(Error::config("class_count", "need at least 2 classes"));
        }
        if let Some(&l) = y.iter().find(|&&l| l >= class_count) {
            return Err(Error::contract(format!("label {l} is outside 0..{class_count}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("features must be finite"));
        }
        let feature_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Ok(Self {
            x,
            y,
            class_count,
            feature_names,
            class_names,
            source: None,
            rejected: Vec::new(),
        })
    }

    /// Writes a canonical CSV: a header, features with round-trip precision, label last.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for (row, &label) in self.x.rows().into_iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.class_names[label].clone());
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Ingest {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Which column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelColumn {
    Last,
    Index(usize),
    /// Requires a header row.
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    pub label: LabelColumn,
    /// A single ASCII character.
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::Last,
            delimiter: ',',
            has_header: true,
        }
    }
}

/// Reads a delimited file of numeric features and one label column.
///
/// Labels are factorised in first-appearance order. A row with a cell that does
/// not parse as a finite number, or with the wrong number of cells, is dropped
/// and listed in [`Dataset::rejected`].
pub fn load_csv_dataset(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let ingest = |line: usize, message: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    if !opts.delimiter.is_ascii() {
        return Err(Error::config("csv.delimiter", "must be a single ASCII character"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(opts.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Option<Vec<String>> = if opts.has_header {
        let h = reader.headers().map_err(|e| csv_err(path, e))?;
        Some(h.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };

    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| csv_err(path, e))?);
    }
    let width = match (&header, records.first()) {
        (Some(h), _) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.len(),
        (_, Some(r)) => r.len(),
        _ => return Err(ingest(1, "file holds no data rows".into())),
    };
    if width < 2 {
        return Err(ingest(1, "need at least one feature column and a label column".into()));
    }
    let label_idx = match &opts.label {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(ingest(1, format!("label column {i} but rows have {width} cells"))),
        LabelColumn::Name(name) => {
            let h = header
                .as_ref()
                .ok_or_else(|| ingest(1, format!("label column {name:?} given by name but the file has no header")))?;
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| ingest(1, format!("no column named {name:?}")))?
        }
    };
    let feature_names: Vec<String> = (0..width)
        .filter(|&j| j != label_idx)
        .map(|j| match &header {
            Some(h) => h[j].clone(),
            None => format!("x{}", if j < label_idx { j } else { j - 1 }),
        })
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut rejected = Vec::new();
    for rec in &records {
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            rejected.push(RejectedRow {
                line,
                reason: format!("expected {width} cells, found {}", rec.len()),
            });
            continue;
        }
        let mut row = Vec::with_capacity(width - 1);
        let mut bad = None;
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    bad = Some(format!("column {j}: {:?} is not a finite number", cell));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            rejected.push(RejectedRow { line, reason });
            continue;
        }
        let label = rec[label_idx].trim();
        if label.is_empty() {
            rejected.push(RejectedRow {
                line,
                reason: "empty label".into(),
            });
            continue;
        }
        let code = match class_names.iter().position(|c| c == label) {
            Some(c) => c,
            None => {
                class_names.push(label.to_string());
                class_names.len() - 1
            }
        };
        values.extend(row);
        labels.push(code);
    }
    if labels.is_empty() {
        return Err(ingest(1, format!("no usable rows ({} rejected)", rejected.len())));
    }
    if class_names.len() < 2 {
        return Err(ingest(1, format!("need at least 2 classes, found {}", class_names.len())));
    }
    let x = Array2::from_shape_vec((labels.len(), width - 1), values).expect("row-major fill");
    Ok(Dataset {
        x,
        y: labels,
        class_count: class_names.len(),
        feature_names,
        class_names,
        source: Some(path.to_path_buf()),
        rejected,
    })
}

/// Gaussian class blobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub f: usize,
    pub classes: usize,
    /// Standard deviation of the per-feature Gaussian noise.
    pub noise: f64,
    /// Euclidean distance of every class mean from the origin.
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    1.0
}

/// Class `c` has mean `separation·s_c/√f` with a sign vector `s_c ∈ {−1, +1}^f`
/// (opposite vectors for two classes, seeded random ones otherwise), so the
/// difficulty does not change with the number of features. Labels
/// are assigned round-robin, so class counts differ by at most one.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::config("classes", "need at least 2 classes"));
    }
    if spec.f == 0 {
        return Err(Error::config("f", "need at least one feature"));
    }
    if spec.n < 10 * spec.classes {
        return Err(Error::config("n", format!("need at least {} rows for {} classes", 10 * spec.classes, spec.classes)));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config("noise", "must be a finite standard deviation ≥ 0"));
    }
    let mut rng = GpRng::new(spec.seed);
    let signs: Vec<Vec<f64>> = if spec.classes == 2 {
        let s: Vec<f64> = (0..spec.f).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        vec![s.iter().map(|v| -v).collect(), s]
    } else {
        (0..spec.classes)
            .map(|_| {
                (0..spec.f)
                    .map(|_| if rand::Rng::gen_bool(&mut rng, 0.5) { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect()
    };
    let y: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let offset = spec.separation / (spec.f as f64).sqrt();
    let mut x = Array2::zeros((spec.n, spec.f));
    for (i, &c) in y.iter().enumerate() {
        for j in 0..spec.f {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = offset * signs[c][j] + spec.noise * z;
        }
    }
    Dataset::from_parts(x, y, spec.classes)
}

/// Split fractions and options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub stratified: bool,
    /// Standardise features with training-split statistics.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.54,
            val_frac: 0.13,
            test_frac: 0.33,
            stratified: true,
            standardize: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("split", "fractions must lie in [0, 1]"));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "train, validation and test fractions must sum to 1"));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }
}

/// One part of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub x: Array2<f64>,
    pub y: LabelMatrix,
    /// Row indices into the source dataset, ascending.
    pub indices: Vec<usize>,
}

/// Train, validation and test partitions of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Partition,
    pub val: Partition,
    pub test: Partition,
    pub n_classes: usize,
    /// Per-feature training mean and standard deviation, when standardised.
    pub standardization: Option<(Vec<f64>, Vec<f64>)>,
}

impl SplitDataset {
    pub fn n_features(&self) -> usize {
        self.train.x.ncols()
    }
}

/// Hamilton (largest-remainder) apportionment of `n` over `fracs`; ties go to the earlier part.
pub fn largest_remainder(n: usize, fracs: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class part sizes. Each class gets the floor of its quota in every part
/// plus its leftover units, placed so the part totals equal the overall
/// largest-remainder apportionment; larger fractional remainders are preferred.
pub fn stratified_counts(class_sizes: &[usize], fracs: &[f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = class_sizes.iter().sum();
    let target = largest_remainder(total, fracs);
    let mut counts: Vec<[usize; 3]> = Vec::with_capacity(class_sizes.len());
    let mut rems: Vec<[f64; 3]> = Vec::with_capacity(class_sizes.len());
    for &n in class_sizes {
        let q: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
        counts.push([q[0].floor() as usize, q[1].floor() as usize, q[2].floor() as usize]);
        rems.push([q[0] - q[0].floor(), q[1] - q[1].floor(), q[2] - q[2].floor()]);
    }
    let mut need = [0i64; 3];
    for s in 0..3 {
        need[s] = target[s] as i64 - counts.iter().map(|c| c[s] as i64).sum::<i64>();
    }
    let leftover: Vec<usize> = class_sizes
        .iter()
        .zip(&counts)
        .map(|(&n, c)| n - c.iter().sum::<usize>())
        .collect();
    let mut extra = vec![[0usize; 3]; class_sizes.len()];
    if !assign_leftovers(0, &leftover, &rems, &mut need, &mut extra) {
        // Infeasible as a 0/1 table (cannot happen for 3 parts, kept as a safe fallback).
        for (c, &l) in leftover.iter().enumerate() {
            let per = largest_remainder(l, &rems[c]);
            extra[c].copy_from_slice(&per);
        }
    }
    counts
        .iter()
        .zip(&extra)
        .map(|(c, e)| [c[0] + e[0], c[1] + e[1], c[2] + e[2]])
        .collect()
}

fn assign_leftovers(
    class: usize,
    leftover: &[usize],
    rems: &[[f64; 3]],
    need: &mut [i64; 3],
    extra: &mut [[usize; 3]],
) -> bool {
    if class == leftover.len() {
        return need.iter().all(|&n| n == 0);
    }
    let l = leftover[class];
    // Candidate part subsets of size l, most-preferred first.
    let mut subsets: Vec<[bool; 3]> = (0u8..8)
        .filter(|m| m.count_ones() as usize == l)
        .map(|m| [m & 1 != 0, m & 2 != 0, m & 4 != 0])
        .collect();
    let score = |s: &[bool; 3]| -> f64 { (0..3).filter(|&i| s[i]).map(|i| rems[class][i]).sum() };
    subsets.sort_by(|a, b| score(b).total_cmp(&score(a)));
    for s in subsets {
        if (0..3).any(|i| s[i] && need[i] <= 0) {
            continue;
        }
        for i in 0..3 {
            if s[i] {
                need[i] -= 1;
                extra[class][i] = 1;
            }
        }
        if assign_leftovers(class + 1, leftover, rems, need, extra) {
            return true;
        }
        for i in 0..3 {
            if s[i] {
                need[i] += 1;
                extra[class][i] = 0;
            }
        }
    }
    false
}

/// Random train/validation/test split, stratified by class unless disabled.
///
/// Every class needs at least 3 instances when stratifying. With
/// `standardize` set, every part is centred and scaled by the training
/// means and standard deviations (constant features are only centred).
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<SplitDataset> {
    spec.validate()?;
    let n = ds.n_rows();
    if n < 10 {
        return Err(Error::config("dataset", format!("need at least 10 rows to split, found {n}")));
    }
    let mut rng = GpRng::new(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    if spec.stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
        for (i, &l) in ds.y.iter().enumerate() {
            by_class[l].push(i);
        }
        if let Some((c, m)) = by_class.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < 3) {
            return Err(Error::config(
                "dataset",
                format!("class {c} has {} instances; stratifying needs at least 3", m.len()),
            ));
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let counts = stratified_counts(&sizes, &spec.fractions());
        for (members, cnt) in by_class.iter_mut().zip(&counts) {
            members.shuffle(&mut rng);
            let mut it = members.iter();
            for s in 0..3 {
                parts[s].extend(it.by_ref().take(cnt[s]));
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let counts = largest_remainder(n, &spec.fractions());
        let mut it = all.iter();
        for s in 0..3 {
            parts[s].extend(it.by_ref().take(counts[s]));
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let take = |idx: &[usize]| -> Result<Partition> {
        let x = ds.x.select(Axis(0), idx);
        let labels: Vec<usize> = idx.iter().map(|&i| ds.y[i]).collect();
        Ok(Partition {
            x,
            y: LabelMatrix::from_labels(&labels, ds.class_count)?,
            indices: idx.to_vec(),
        })
    };
    let mut train = take(&parts[0])?;
    let mut val = take(&parts[1])?;
    let mut test = take(&parts[2])?;
    if train.indices.is_empty() {
        return Err(Error::config("split", "training partition is empty"));
    }
    let standardization = if spec.standardize {
        let (means, stds) = column_moments(&train.x);
        for part in [&mut train, &mut val, &mut test] {
            for mut row in part.x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - means[j]) / stds[j];
                }
            }
        }
        Some((means, stds))
    } else {
        None
    };
    Ok(SplitDataset {
        train,
        val,
        test,
        n_classes: ds.class_count,
        standardization,
    })
}

/// Column means and population standard deviations; a zero deviation is reported as 1.
fn column_moments(x: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
    let stds = x
        .columns()
        .into_iter()
        .zip(&means)
        .map(|(c, m)| {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}
