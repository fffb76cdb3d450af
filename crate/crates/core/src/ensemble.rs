//! Cross-population linear ensembling.
//!
//! One member is drawn from each of the `P` populations. Their class
//! probabilities are mixed per class with nonnegative weights, the mixture is
//! renormalised per row, the weights are fitted by minimising the mean
//! squared error against the one-hot labels, and the mixture is scored with
//! mean cross-entropy (the ensemble fitness).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{check_probs_shape, isolated_fitness, LabelMatrix, PROB_FLOOR};
use crate::optim::{minimize_nonnegative, Minimum, TrustRegion};

/// Mixing weights `w[p, c]` for `P` members and `C` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub w: Array2<f64>,
}

impl EnsembleWeights {
    /// Every weight equal to `1/P`: plain averaging.
    pub fn uniform(n_members: usize, n_classes: usize) -> Self {
        Self {
            w: Array2::from_elem((n_members, n_classes), 1.0 / n_members.max(1) as f64),
        }
    }

    pub fn n_members(&self) -> usize {
        self.w.nrows()
    }
}

/// One individual per population, the fitted weights, and the resulting ensemble fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCandidate {
    /// `members[p]` indexes into population `p`.
    pub members: Vec<usize>,
    pub weights: EnsembleWeights,
    pub ft_en: f64,
}

/// Default optimiser budget: `200·P·C` evaluations.
pub fn default_max_evals(n_members: usize, n_classes: usize) -> usize {
    200 * n_members * n_classes
}

fn check_members(members: &[ArrayView2<'_, f64>], w: &EnsembleWeights) -> Result<(usize, usize)> {
    let first = members
        .first()
        .ok_or_else(|| Error::contract("an ensemble needs at least one member"))?;
    let (n, c) = first.dim();
    if members.iter().any(|m| m.dim() != (n, c)) {
        return Err(Error::contract("ensemble members disagree in shape"));
    }
    if w.w.dim() != (members.len(), c) {
        return Err(Error::contract(format!(
            "weights are {:?} but there are {} members over {c} classes",
            w.w.dim(),
            members.len()
        )));
    }
    if w.w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::contract("ensemble weights must be finite and nonnegative"));
    }
    Ok((n, c))
}

/// Mixes member probabilities: `Σ_p w[p,c]·Pr_p[i,c]`, clipped below at
/// [`PROB_FLOOR`] and renormalised so each row sums to one.
pub fn ensemble_probs(members: &[ArrayView2<'_, f64>], w: &EnsembleWeights) -> Result<Array2<f64>> {
    let (n, c) = check_members(members, w)?;
    let mut out = Array2::zeros((n, c));
    for (p, m) in members.iter().enumerate() {
        for ((i, cc), v) in m.indexed_iter() {
            out[[i, cc]] += w.w[[p, cc]] * v;
        }
    }
    for mut row in out.rows_mut() {
        row.mapv_inplace(|v: f64| v.max(PROB_FLOOR));
        let s = row.sum();
        row /= s;
    }
    Ok(out)
}

/// Mean over instances of the squared error summed over classes.
pub fn ensemble_mse(members: &[ArrayView2<'_, f64>], w: &EnsembleWeights, y: &LabelMatrix) -> Result<f64> {
    let pr = ensemble_probs(members, w)?;
    check_probs_shape(pr.view(), y)?;
    if y.is_empty() {
        return Err(Error::contract("mse of an empty sample is undefined"));
    }
    let mut total = 0.0;
    for (i, &l) in y.labels().iter().enumerate() {
        for (c, &p) in pr.row(i).iter().enumerate() {
            let t = if c == l { 1.0 } else { 0.0 };
            total += (t - p) * (t - p);
        }
    }
    Ok(total / y.len() as f64)
}

/// Mean cross-entropy of the mixture, same convention as the isolated fitness.
pub fn ensemble_fitness(members: &[ArrayView2<'_, f64>], w: &EnsembleWeights, y: &LabelMatrix) -> Result<f64> {
    let pr = ensemble_probs(members, w)?;
    isolated_fitness(pr.view(), y)
}

/// Result of [`optimize_ensemble_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFit {
    pub weights: EnsembleWeights,
    pub mse: f64,
    /// MSE at the uniform starting point.
    pub start_mse: f64,
    pub evals: usize,
}

/// Fits nonnegative mixing weights by derivative-free minimisation of
/// [`ensemble_mse`], starting from uniform `1/P` weights.
///
/// Half the budget is spent on a search from the uniform start; the all-zero
/// corner (which the floor turns into the uniform predictor) is scored, and the
/// remainder restarts the search from each single-member mixture.
///
/// Deterministic. An exhausted budget is not an error: the best point seen is returned.
pub fn optimize_ensemble_weights(
    members: &[ArrayView2<'_, f64>],
    y: &LabelMatrix,
    max_evals: usize,
) -> Result<WeightFit> {
    let start = EnsembleWeights::uniform(members.len(), y.n_classes());
    let (n, c) = check_members(members, &start)?;
    if n != y.len() || c != y.n_classes() {
        return Err(Error::contract("member probabilities and labels disagree in shape"));
    }
    if n == 0 {
        return Err(Error::contract("cannot fit ensemble weights on an empty sample"));
    }
    let p = members.len();
    // Member-major flat copy: flat[(m * n + i) * c + class].
    let mut flat = Vec::with_capacity(p * n * c);
    for m in members {
        flat.extend(m.iter().copied());
    }
    let labels = y.labels();
    let mut mix = vec![0.0; c];
    let mut objective = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            mix.iter_mut().for_each(|v| *v = 0.0);
            for m in 0..p {
                let row = &flat[(m * n + i) * c..(m * n + i + 1) * c];
                let wr = &w[m * c..(m + 1) * c];
                for cc in 0..c {
                    mix[cc] += wr[cc] * row[cc];
                }
            }
            let mut s = 0.0;
            for v in mix.iter_mut() {
                *v = v.max(PROB_FLOOR);
                s += *v;
            }
            for (cc, v) in mix.iter().enumerate() {
                let e = if cc == l { 1.0 } else { 0.0 } - v / s;
                total += e * e;
            }
        }
        total / n as f64
    };
    let budget = max_evals.max(1);
    let x0: Vec<f64> = start.w.iter().copied().collect();
    // Half the budget goes to the search from uniform weights.
    let first = budget.div_ceil(2);
    let mut best = minimize_nonnegative(&mut objective, &x0, &local_opts(p, first));
    let mut evals = best.evals;
    // All-zero weights clip every row to the floor: the uniform predictor.
    if evals < budget {
        let zero = vec![0.0; p * c];
        let v = objective(&zero);
        evals += 1;
        if v < best.value {
            best = Minimum { x: zero, value: v, evals: 0 };
        }
    }
    // Restarts from each single-member mixture share what is left.
    if p > 1 {
        for m in 0..p {
            let left = budget - evals;
            let share = left / (p - m);
            if share == 0 {
                continue;
            }
            let mut xs = vec![0.0; p * c];
            xs[m * c..(m + 1) * c].iter_mut().for_each(|v| *v = 1.0);
            let run = minimize_nonnegative(&mut objective, &xs, &local_opts(p, share));
            evals += run.evals;
            if run.value < best.value {
                best = run;
            }
        }
    }
    let mut x = best.x;
    let mut value = best.value;
    // The mixture is scale-free away from the floor; report weights with max 1 when that costs nothing.
    let top = x.iter().copied().fold(0.0, f64::max);
    if top > 0.0 && top != 1.0 && evals < budget {
        let scaled: Vec<f64> = x.iter().map(|v| v / top).collect();
        let v = objective(&scaled);
        evals += 1;
        if v <= value {
            x = scaled;
            value = v;
        }
    }
    let start_mse = ensemble_mse(members, &start, y)?;
    let weights = EnsembleWeights {
        w: Array2::from_shape_vec((p, c), x).expect("p×c"),
    };
    Ok(WeightFit {
        weights,
        mse: value,
        start_mse,
        evals,
    })
}

fn local_opts(p: usize, max_evals: usize) -> TrustRegion {
    TrustRegion {
        rho_begin: 0.5 / p as f64,
        rho_end: 1e-7,
        max_evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn single_member_identity_mixture() {
        let m = array![[0.7, 0.3], [0.2, 0.8]];
        let w = EnsembleWeights { w: array![[1.0, 1.0]] };
        let pr = ensemble_probs(&[m.view()], &w).unwrap();
        for (a, b) in pr.iter().zip(m.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn equal_members_half_weights() {
        let m = array![[0.1, 0.6, 0.3]];
        let w = EnsembleWeights::uniform(2, 3);
        let pr = ensemble_probs(&[m.view(), m.view()], &w).unwrap();
        for (a, b) in pr.iter().zip(m.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn mse_closed_forms() {
        let y = LabelMatrix::from_labels(&[0], 2).unwrap();
        let half = array![[0.5, 0.5]];
        let w = EnsembleWeights::uniform(1, 2);
        assert_abs_diff_eq!(ensemble_mse(&[half.view()], &w, &y).unwrap(), 0.5, epsilon = 1e-15);
        let exact = array![[1.0, 0.0]];
        assert!(ensemble_mse(&[exact.view()], &w, &y).unwrap() < 1e-28);
    }

    #[test]
    fn fitness_closed_forms() {
        let y = LabelMatrix::from_labels(&[0, 1, 2], 3).unwrap();
        let uniform = Array2::from_elem((3, 3), 1.0 / 3.0);
        let w = EnsembleWeights::uniform(2, 3);
        let ft = ensemble_fitness(&[uniform.view(), uniform.view()], &w, &y).unwrap();
        assert_abs_diff_eq!(ft, 3f64.ln(), epsilon = 1e-12);
        let perfect = y.to_dense();
        assert!(ensemble_fitness(&[perfect.view(), perfect.view()], &w, &y).unwrap() <= 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = array![[0.5, 0.5]];
        let y = LabelMatrix::from_labels(&[0], 2).unwrap();
        let neg = EnsembleWeights { w: array![[-1.0, 1.0]] };
        assert!(ensemble_probs(&[m.view()], &neg).is_err());
        let wrong = EnsembleWeights::uniform(2, 2);
        assert!(ensemble_probs(&[m.view()], &wrong).is_err());
        let empty_y = LabelMatrix::from_labels(&[], 2).unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(ensemble_fitness(&[empty.view()], &EnsembleWeights::uniform(1, 2), &empty_y).is_err());
        assert!(ensemble_probs(&[], &EnsembleWeights::uniform(0, 2)).is_err());
        let _ = y;
    }

    #[test]
    fn identical_members_keep_single_member_mse() {
        let m = array![[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]];
        let y = LabelMatrix::from_labels(&[0, 1, 1], 2).unwrap();
        let single = ensemble_mse(&[m.view()], &EnsembleWeights::uniform(1, 2), &y).unwrap();
        let fit = optimize_ensemble_weights(&[m.view(), m.view()], &y, 800).unwrap();
        assert!(fit.mse <= fit.start_mse + 1e-12);
        assert_abs_diff_eq!(fit.start_mse, single, epsilon = 1e-12);
        assert!(fit.mse <= single + 1e-9);
    }

    #[test]
    fn optimiser_is_deterministic() {
        let a = array![[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]];
        let b = array![[0.2, 0.8], [0.5, 0.5], [0.1, 0.9]];
        let y = LabelMatrix::from_labels(&[0, 1, 0], 2).unwrap();
        let f1 = optimize_ensemble_weights(&[a.view(), b.view()], &y, 800).unwrap();
        let f2 = optimize_ensemble_weights(&[a.view(), b.view()], &y, 800).unwrap();
        assert_eq!(f1, f2);
    }
}
