//! Convergence and generalisation metrics.
//!
//! Convergence metrics read a best-so-far fitness series (index = generation)
//! and the crossover log; generalisation metrics read predicted class
//! probabilities on held-out data.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{check_probs_shape, isolated_fitness, LabelMatrix};

/// Guard against division by a zero parent fitness in [`crossover_convergence_rate`].
pub const CCR_EPS: f64 = 1e-12;

/// Default histogram resolution for [`population_entropy`].
pub const DEFAULT_ENTROPY_BINS: usize = 30;

fn check_interval(series: &[f64], lo: usize, hi: usize) -> Result<()> {
    if lo > hi || hi >= series.len() {
        return Err(Error::contract(format!(
            "interval {lo}..={hi} is outside a series of length {}",
            series.len()
        )));
    }
    Ok(())
}

/// Mean of the series over generations `lo..=hi`.
pub fn interval_ft(series: &[f64], lo: usize, hi: usize) -> Result<f64> {
    check_interval(series, lo, hi)?;
    let window = &series[lo..=hi];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Average per-generation improvement: `(series[lo] − series[hi]) / (hi − lo)`.
pub fn convergence_rate(series: &[f64], lo: usize, hi: usize) -> Result<f64> {
    check_interval(series, lo, hi)?;
    if hi == lo {
        return Err(Error::contract("convergence rate needs hi > lo"));
    }
    Ok((series[lo] - series[hi]) / (hi - lo) as f64)
}

/// Extends a series to `len` entries by repeating its last value.
///
/// A run that stops early holds its best-so-far fitness for the remaining generations.
pub fn pad_series(series: &[f64], len: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    if let Some(&last) = series.last() {
        out.resize(len.max(series.len()), last);
    }
    out
}

/// One crossover offspring: the mean isolated fitness of its parents and its
/// own isolated fitness once evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverEvent {
    /// Generation in which the offspring was evaluated.
    pub generation: usize,
    pub parent_mean: f64,
    pub offspring: f64,
}

/// Crossover convergence rate over an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ccr {
    pub value: f64,
    pub events: usize,
    /// No crossover event fell inside the interval; `value` is 0.
    pub insufficient: bool,
}

/// Mean relative improvement of crossover offspring over their parents for
/// events evaluated in generations `lo..=hi`, each floored at zero.
pub fn crossover_convergence_rate(log: &[CrossoverEvent], lo: usize, hi: usize) -> Ccr {
    let gains: Vec<f64> = log
        .iter()
        .filter(|e| (lo..=hi).contains(&e.generation))
        .map(|e| (e.parent_mean - e.offspring).max(0.0) / e.parent_mean.max(CCR_EPS))
        .collect();
    if gains.is_empty() {
        return Ccr {
            value: 0.0,
            events: 0,
            insufficient: true,
        };
    }
    Ccr {
        value: gains.iter().sum::<f64>() / gains.len() as f64,
        events: gains.len(),
        insufficient: false,
    }
}

/// Shannon entropy (nats) of an equal-width histogram of `fitnesses` over
/// `[min, max]`. Non-finite values are ignored.
pub fn population_entropy(fitnesses: &[f64], n_bins: usize) -> f64 {
    let vals: Vec<f64> = fitnesses.iter().copied().filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        return 0.0;
    }
    let n_bins = n_bins.max(1);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for v in &vals {
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = vals.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Held-out classification quality. Precision, recall, F1 and AUC are macro
/// averages over classes present in the labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub log_loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    /// Classes with no instance in the labels, left out of the macro averages.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent_classes: Vec<usize>,
}

/// Row argmax; ties go to the lowest class index.
pub fn predicted_classes(pr: ArrayView2<'_, f64>) -> Vec<usize> {
    pr.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Rank-based (Mann-Whitney) AUC of `scores` for the instances flagged
/// positive. Ties count one half. `None` unless both groups are non-empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Log-loss plus macro precision, recall, F1 and one-vs-rest AUC.
///
/// Zero denominators in precision, recall and F1 count as 0. When no present
/// class has both positives and negatives the AUC is reported as 0.5.
pub fn classification_metrics(pr: ArrayView2<'_, f64>, y: &LabelMatrix) -> Result<ClassificationReport> {
    check_probs_shape(pr, y)?;
    let log_loss = isolated_fitness(pr, y)?;
    let c = y.n_classes();
    let labels = y.labels();
    let pred = predicted_classes(pr);
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let (mut precision, mut recall, mut f1, mut aucs) = (0.0, 0.0, 0.0, Vec::new());
    let mut present = 0usize;
    let mut absent = Vec::new();
    for class in 0..c {
        let support = labels.iter().filter(|&&l| l == class).count();
        if support == 0 {
            absent.push(class);
            continue;
        }
        present += 1;
        let tp = labels.iter().zip(&pred).filter(|(&l, &p)| l == class && p == class).count();
        let predicted = pred.iter().filter(|&&p| p == class).count();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        precision += p;
        recall += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let scores: Vec<f64> = pr.column(class).to_vec();
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        if let Some(a) = binary_auc(&scores, &positive) {
            aucs.push(a);
        }
    }
    let denom = present.max(1) as f64;
    let auc = if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };
    Ok(ClassificationReport {
        log_loss,
        precision: precision / denom,
        recall: recall / denom,
        f1: f1 / denom,
        auc,
        absent_classes: absent,
    })
}
