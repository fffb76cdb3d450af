//! Nonparametric comparison of models across runs.
//!
//! A [`ScoreTable`] holds one row per run (block) and one column per model
//! (treatment). The pipeline is Friedman, then Conover post-hoc pairs, then
//! multiplicity corrections, then Cliff's δ with a bootstrap interval, and
//! finally a win/tie/loss verdict per model against the baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng::GpRng;

/// Significance level used by the verdict rule.
pub const ALPHA: f64 = 0.05;

/// Largest number of distinct rank-sum states the exact Friedman null is allowed to track.
const EXACT_STATE_CAP: usize = 200_000;
/// Largest number of state transitions one row of the exact Friedman null may cost.
const EXACT_WORK_CAP: usize = 1_000_000;
/// Largest number of models for which row permutations are enumerated.
const EXACT_MAX_MODELS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

/// Runs × models scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    scores: Array2<f64>,
    orientation: Orientation,
}

impl ScoreTable {
    pub fn new(scores: Array2<f64>, orientation: Orientation) -> Result<Self> {
        let (r, m) = scores.dim();
        if r < 2 || m < 2 {
            return Err(Error::contract(format!(
                "a score table needs at least 2 runs and 2 models, got {r}×{m}"
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("score table entries must be finite"));
        }
        Ok(Self { scores, orientation })
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn n_runs(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.scores.ncols()
    }

    /// Within-row ranks, 1 = best, ties share their mean rank.
    pub fn ranks(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.scores.dim());
        for (i, row) in self.scores.rows().into_iter().enumerate() {
            let oriented: Vec<f64> = match self.orientation {
                Orientation::LowerIsBetter => row.to_vec(),
                Orientation::HigherIsBetter => row.iter().map(|v| -v).collect(),
            };
            for (j, r) in mid_ranks(&oriented).into_iter().enumerate() {
                out[[i, j]] = r;
            }
        }
        out
    }
}

/// 1-based mid-ranks of `values` in ascending order.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Tie-corrected χ²_F.
    pub statistic: f64,
    /// Exact permutation p-value when the null distribution is small enough
    /// to enumerate, otherwise the chi-square approximation.
    pub p_value: f64,
    /// Chi-square approximation on `M − 1` degrees of freedom.
    pub p_asymptotic: f64,
    pub exact: bool,
}

/// Friedman rank test with the standard tie correction.
///
/// When all rows are fully tied the statistic is 0 and p is 1.
pub fn friedman_test(table: &ScoreTable) -> FriedmanResult {
    let ranks = table.ranks();
    let (r, m) = ranks.dim();
    let (rf, mf) = (r as f64, m as f64);
    let ties: f64 = ranks.rows().into_iter().map(|row| tie_term(&row.to_vec())).sum();
    let denom = 1.0 - ties / (rf * mf * (mf * mf - 1.0));
    if denom <= 1e-12 {
        return FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            p_asymptotic: 1.0,
            exact: true,
        };
    }
    let centre = (mf + 1.0) / 2.0;
    let dev: f64 = (0..m)
        .map(|j| {
            let mean = ranks.column(j).sum() / rf;
            (mean - centre).powi(2)
        })
        .sum();
    let statistic = 12.0 * rf / (mf * (mf + 1.0)) * dev / denom;
    let chi = ChiSquared::new(mf - 1.0).expect("m ≥ 2");
    let p_asymptotic = chi.sf(statistic).clamp(0.0, 1.0);
    match friedman_exact_p(&ranks) {
        Some(p) => FriedmanResult {
            statistic,
            p_value: p,
            p_asymptotic,
            exact: true,
        },
        None => FriedmanResult {
            statistic,
            p_value: p_asymptotic,
            p_asymptotic,
            exact: false,
        },
    }
}

/// `Σ (t³ − t)` over tie groups of one row of ranks.
fn tie_term(row: &[f64]) -> f64 {
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for v in row {
        *counts.entry(v.to_bits()).or_default() += 1.0;
    }
    counts.values().map(|t| t * t * t - t).sum()
}

/// Exact upper-tail probability of the Friedman statistic under the null
/// that each row's ranks are a uniformly random permutation.
///
/// With the row multisets fixed the statistic is increasing in `Σ_j S_j²`
/// (`S_j` = column rank sums), so only that quantity is tracked. The joint law
/// of the rank sums is exchangeable across columns, which lets each state be
/// stored sorted.
fn friedman_exact_p(ranks: &Array2<f64>) -> Option<f64> {
    let (_, m) = ranks.dim();
    if m > EXACT_MAX_MODELS {
        return None;
    }
    // Doubled ranks are integers even with ties.
    let rows: Vec<Vec<i64>> = ranks
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| (v * 2.0).round() as i64).collect())
        .collect();
    let observed: i64 = (0..m)
        .map(|j| rows.iter().map(|row| row[j]).sum::<i64>())
        .map(|s| s * s)
        .sum();

    let mut states: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    states.insert(vec![0; m], 1.0);
    for row in &rows {
        let perms = distinct_permutations(row);
        if states.len() * perms.len() > EXACT_WORK_CAP {
            return None;
        }
        let mut next: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (state, p_state) in &states {
            for (perm, p_perm) in &perms {
                let mut s: Vec<i64> = state.iter().zip(perm).map(|(a, b)| a + b).collect();
                s.sort_unstable();
                *next.entry(s).or_default() += p_state * p_perm;
            }
        }
        if next.len() > EXACT_STATE_CAP {
            return None;
        }
        states = next;
    }
    let p: f64 = states
        .iter()
        .filter(|(s, _)| s.iter().map(|v| v * v).sum::<i64>() >= observed)
        .map(|(_, p)| p)
        .sum();
    Some(p.clamp(0.0, 1.0))
}

/// Distinct orderings of `row` with their probability under a uniform shuffle.
fn distinct_permutations(row: &[i64]) -> Vec<(Vec<i64>, f64)> {
    let mut out: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut items = row.to_vec();
    let total = (1..=row.len()).product::<usize>() as f64;
    permute(&mut items, 0, &mut |p| *out.entry(p.to_vec()).or_default() += 1.0 / total);
    let mut v: Vec<_> = out.into_iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn permute(items: &mut [i64], k: usize, visit: &mut impl FnMut(&[i64])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Conover's pairwise test after Friedman: two-sided p-values from the
/// t-distribution on `(R − 1)(M − 1)` degrees of freedom. Symmetric, unit diagonal.
///
/// If every row is fully tied all p-values are 1. If the rankings agree
/// perfectly across rows the residual variance vanishes: pairs with equal rank
/// sums get p = 1 and all others p = 0.
pub fn conover_posthoc(table: &ScoreTable) -> Array2<f64> {
    let ranks = table.ranks();
    let (b, k) = ranks.dim();
    let (bf, kf) = (b as f64, k as f64);
    let sums: Vec<f64> = (0..k).map(|j| ranks.column(j).sum()).collect();
    let a1: f64 = ranks.iter().map(|r| r * r).sum();
    let c1 = bf * kf * (kf + 1.0).powi(2) / 4.0;
    let sum_sq: f64 = sums.iter().map(|s| s * s).sum();
    let resid = 2.0 * (bf * a1 - sum_sq) / ((bf - 1.0) * (kf - 1.0));
    let t_dist = StudentsT::new(0.0, 1.0, (bf - 1.0) * (kf - 1.0)).expect("b, k ≥ 2");
    let rank_var_zero = (a1 - c1).abs() <= 1e-9 * c1.max(1.0);
    let mut p = Array2::from_elem((k, k), 1.0);
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = (sums[i] - sums[j]).abs();
            let pij = if rank_var_zero || diff <= 1e-12 {
                1.0
            } else if resid <= 1e-12 {
                0.0
            } else {
                let t = diff / resid.sqrt();
                (2.0 * t_dist.sf(t)).clamp(0.0, 1.0)
            };
            p[[i, j]] = pij;
            p[[j, i]] = pij;
        }
    }
    p
}

/// `p ↦ min(1, p·m)`.
pub fn bonferroni(pvals: &[f64], m: usize) -> Vec<f64> {
    pvals.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn benjamini_hochberg(pvals: &[f64]) -> Vec<f64> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let adj = (pvals[i] * m as f64 / (pos + 1) as f64).min(1.0);
        running = running.min(adj);
        out[i] = running;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Bonferroni,
    Bh,
}

impl Correction {
    pub fn apply(self, pvals: &[f64]) -> Vec<f64> {
        match self {
            Correction::Bonferroni => bonferroni(pvals, pvals.len()),
            Correction::Bh => benjamini_hochberg(pvals),
        }
    }
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Correction::Bonferroni),
            "bh" | "benjamini-hochberg" => Ok(Correction::Bh),
            other => Err(Error::config(
                "correction",
                format!("unknown correction {other:?}; expected bonferroni or bh"),
            )),
        }
    }
}

/// Numerator `#{x > y} − #{x < y}` of Cliff's δ, computed exactly from doubled mid-ranks.
fn cliff_numerator(x: &[f64], y: &[f64]) -> i64 {
    let (m, n) = (x.len() as i64, y.len() as i64);
    let merged: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = mid_ranks(&merged);
    let doubled_x: i64 = ranks[..x.len()].iter().map(|r| (r * 2.0).round() as i64).sum();
    // 2U = 2·R_x − m(m+1) = 2·#gt + #ties, and #gt − #lt = 2U − mn.
    doubled_x - m * (m + 1) - m * n
}

/// Cliff's δ = `(#{x_i > y_j} − #{x_i < y_j}) / (|x|·|y|)` via merged ranks.
/// Empty samples give 0.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> f64 {
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    cliff_numerator(x, y) as f64 / (x.len() * y.len()) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectLabel {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for EffectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EffectLabel::Negligible => "negligible",
            EffectLabel::Small => "small",
            EffectLabel::Medium => "medium",
            EffectLabel::Large => "large",
        };
        f.write_str(s)
    }
}

/// Magnitude label with thresholds 0.147, 0.33 and 0.474, each inclusive on its lower edge.
pub fn effect_label(delta: f64) -> EffectLabel {
    let a = delta.abs();
    if a < 0.147 {
        EffectLabel::Negligible
    } else if a < 0.33 {
        EffectLabel::Small
    } else if a < 0.474 {
        EffectLabel::Medium
    } else {
        EffectLabel::Large
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for Cliff's δ, resampling `x` and `y`
/// independently with replacement.
pub fn bootstrap_delta_ci(x: &[f64], y: &[f64], n_boot: usize, confidence: f64, rng: &mut GpRng) -> (f64, f64) {
    if x.is_empty() || y.is_empty() {
        return (0.0, 0.0);
    }
    let n_boot = n_boot.max(1);
    let mut bx = vec![0.0; x.len()];
    let mut by = vec![0.0; y.len()];
    let mut deltas = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        bx.iter_mut().for_each(|v| *v = x[rng.gen_range(0..x.len())]);
        by.iter_mut().for_each(|v| *v = y[rng.gen_range(0..y.len())]);
        deltas.push(cliffs_delta(&bx, &by));
    }
    deltas.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    (quantile_sorted(&deltas, tail), quantile_sorted(&deltas, 1.0 - tail))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Win,
    Tie,
    Loss,
}

/// Win or loss needs both adjusted p-values below [`ALPHA`] and a nonzero δ
/// (positive = the compared model is better); anything else is a tie.
pub fn verdict(adjusted_friedman_p: f64, adjusted_conover_p: f64, delta: f64) -> Verdict {
    let significant = adjusted_friedman_p < ALPHA && adjusted_conover_p < ALPHA;
    if significant && delta > 0.0 {
        Verdict::Win
    } else if significant && delta < 0.0 {
        Verdict::Loss
    } else {
        Verdict::Tie
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

/// Tallies `(model, verdict)` pairs, typically one per dataset, keeping first-seen model order.
pub fn win_tie_loss<'a>(verdicts: impl IntoIterator<Item = (&'a str, Verdict)>) -> Vec<(String, WinTieLoss)> {
    let mut out: Vec<(String, WinTieLoss)> = Vec::new();
    for (model, v) in verdicts {
        let pos = match out.iter().position(|(m, _)| m == model) {
            Some(p) => p,
            None => {
                out.push((model.to_string(), WinTieLoss::default()));
                out.len() - 1
            }
        };
        let t = &mut out[pos].1;
        match v {
            Verdict::Win => t.win += 1,
            Verdict::Tie => t.tie += 1,
            Verdict::Loss => t.loss += 1,
        }
    }
    out
}

/// Knobs for [`compare_to_baseline`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Bonferroni multiplier for the Friedman p-value.
    pub friedman_m: usize,
    /// Adjustment applied across the Conover pairs.
    pub correction: Correction,
    pub n_boot: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            friedman_m: 1,
            correction: Correction::Bh,
            n_boot: 10_000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

/// One model compared against the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub model: String,
    /// Oriented so that positive means the model beats the baseline.
    pub delta: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub effect: EffectLabel,
    pub conover_p: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub models: Vec<String>,
    pub baseline: String,
    pub orientation: Orientation,
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    pub friedman_p_asymptotic: f64,
    pub adjusted_friedman_p: f64,
    /// Adjusted Conover p-values, `models × models`.
    pub conover_p: Vec<Vec<f64>>,
    pub pairs: Vec<PairVerdict>,
}

/// Full pipeline on one score table: every non-baseline column is compared
/// against column `baseline`.
pub fn compare_to_baseline(
    table: &ScoreTable,
    models: &[String],
    baseline: usize,
    opts: &CompareOptions,
) -> Result<ComparisonVerdict> {
    let m = table.n_models();
    if models.len() != m || baseline >= m {
        return Err(Error::contract("model names or baseline index do not match the score table"));
    }
    let fr = friedman_test(table);
    let adjusted_friedman_p = bonferroni(&[fr.p_value], opts.friedman_m.max(1))[0];
    let raw = conover_posthoc(table);
    let mut upper = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            upper.push(raw[[i, j]]);
        }
    }
    let adj = opts.correction.apply(&upper);
    let mut conover = vec![vec![1.0; m]; m];
    let mut it = adj.into_iter();
    for i in 0..m {
        for j in (i + 1)..m {
            let v = it.next().expect("one per pair");
            conover[i][j] = v;
            conover[j][i] = v;
        }
    }
    let scores = table.scores();
    let base: Vec<f64> = scores.column(baseline).to_vec();
    let mut rng = GpRng::new(opts.seed);
    let mut pairs = Vec::new();
    for (j, name) in models.iter().enumerate() {
        if j == baseline {
            continue;
        }
        let col: Vec<f64> = scores.column(j).to_vec();
        let (better, worse) = match table.orientation() {
            Orientation::HigherIsBetter => (&col, &base),
            Orientation::LowerIsBetter => (&base, &col),
        };
        let delta = cliffs_delta(better, worse);
        let (ci_lo, ci_hi) = bootstrap_delta_ci(better, worse, opts.n_boot, opts.confidence, &mut rng);
        pairs.push(PairVerdict {
            model: name.clone(),
            delta,
            ci_lo,
            ci_hi,
            effect: effect_label(delta),
            conover_p: conover[baseline][j],
            verdict: verdict(adjusted_friedman_p, conover[baseline][j], delta),
        });
    }
    Ok(ComparisonVerdict {
        models: models.to_vec(),
        baseline: models[baseline].clone(),
        orientation: table.orientation(),
        friedman_statistic: fr.statistic,
        friedman_p: fr.p_value,
        friedman_p_asymptotic: fr.p_asymptotic,
        adjusted_friedman_p,
        conover_p: conover,
        pairs,
    })
}
