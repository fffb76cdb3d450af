//! The softmax layer that turns gene outputs into class probabilities, and its
//! minibatch gradient-descent trainer.
//!
//! Given a gene matrix `G` (`N×K`), the head computes logits
//! `Z[i,c] = Σ_k W[k,c]·G[i,k] + b[c]`, applies a row softmax, and scores the
//! result with mean cross-entropy (the isolated fitness).

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GpRng;

/// Probabilities are clipped below at this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-15;

/// Per-class gene weights `W` (`K×C`) and biases `b` (`C`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl HeadParams {
    pub fn zeros(k_genes: usize, n_classes: usize) -> Self {
        Self {
            w: Array2::zeros((k_genes, n_classes)),
            b: Array1::zeros(n_classes),
        }
    }

    pub fn n_genes(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.b.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// One-hot class labels for `N` instances over `C` classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelMatrix {
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            labels: labels.to_vec(),
            n_classes,
        })
    }

    /// Accepts a dense matrix whose rows each hold a single 1 and zeros elsewhere.
    pub fn from_one_hot(y: ArrayView2<'_, f64>) -> Result<Self> {
        let mut labels = Vec::with_capacity(y.nrows());
        for (i, row) in y.rows().into_iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(c, _)| c)
                .collect();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones.len() != 1 || zeros + 1 != row.len() {
                return Err(Error::contract(format!("row {i} of the label matrix is not one-hot")));
            }
            labels.push(ones[0]);
        }
        Ok(Self {
            labels,
            n_classes: y.ncols(),
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.labels.len(), self.n_classes));
        for (i, &l) in self.labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        y
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
        }
    }
}

pub fn logits(g: ArrayView2<'_, f64>, params: &HeadParams) -> Result<Array2<f64>> {
    if g.ncols() != params.n_genes() {
        return Err(Error::contract(format!(
            "gene matrix has {} columns but the head expects {}",
            g.ncols(),
            params.n_genes()
        )));
    }
    Ok(g.dot(&params.w) + &params.b)
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_probs(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = z.as_standard_layout().into_owned();
    for mut row in out.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    out
}

/// Class probabilities the head assigns to each row of `g`.
pub fn predict_probs(g: ArrayView2<'_, f64>, params: &HeadParams) -> Result<Array2<f64>> {
    Ok(softmax_probs(logits(g, params)?.view()))
}

/// Mean cross-entropy of `pr` against the labels, with probabilities clipped at [`PROB_FLOOR`].
pub fn isolated_fitness(pr: ArrayView2<'_, f64>, y: &LabelMatrix) -> Result<f64> {
    check_probs_shape(pr, y)?;
    if y.is_empty() {
        return Err(Error::contract("fitness of an empty sample is undefined"));
    }
    let total: f64 = y
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -pr[[i, l]].clamp(PROB_FLOOR, 1.0).ln())
        .sum();
    Ok(total / y.len() as f64)
}

pub(crate) fn check_probs_shape(pr: ArrayView2<'_, f64>, y: &LabelMatrix) -> Result<()> {
    if pr.dim() != (y.len(), y.n_classes()) {
        return Err(Error::contract(format!(
            "probability matrix is {:?} but labels are {}×{}",
            pr.dim(),
            y.len(),
            y.n_classes()
        )));
    }
    Ok(())
}

/// Analytic gradient of [`isolated_fitness`] with respect to `W` and `b`.
///
/// With `Δ = (Pr − Y)/N`: `dW = Gᵀ·Δ`, `db = Σ_i Δ[i,·]`.
pub fn head_gradients(
    g: ArrayView2<'_, f64>,
    params: &HeadParams,
    y: &LabelMatrix,
) -> Result<(Array2<f64>, Array1<f64>)> {
    if g.nrows() != y.len() || params.n_classes() != y.n_classes() {
        return Err(Error::contract("gene matrix, head and labels disagree in shape"));
    }
    let mut delta = predict_probs(g, params)?;
    let n = y.len().max(1) as f64;
    for (i, &l) in y.labels.iter().enumerate() {
        delta[[i, l]] -= 1.0;
    }
    delta /= n;
    let dw = g.t().dot(&delta);
    let db = delta.sum_axis(ndarray::Axis(0));
    Ok((dw, db))
}

/// Minibatch gradient-descent settings for [`train_head`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once the full-data loss improved by less than `min_improvement`
    /// over this many consecutive epochs.
    pub patience: usize,
    pub min_improvement: f64,
}

impl TrainSettings {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            patience: 20,
            min_improvement: 1e-8,
        }
    }
}

/// Outcome of [`train_head`].
#[derive(Clone, Debug)]
pub struct TrainedHead {
    pub params: HeadParams,
    /// Full-data isolated fitness of `params`.
    pub ft_iso: f64,
    /// Full-data loss before training (index 0) and after each completed epoch.
    pub loss_trace: Vec<f64>,
    /// Set when a non-finite loss cut training short.
    pub aborted: bool,
}

/// Writes the softmax probabilities of one gene row into `z`.
#[inline]
fn probs_row(row: &[f64], w: &[f64], b: &[f64], z: &mut [f64]) {
    let c = z.len();
    z.copy_from_slice(b);
    for (kk, &gv) in row.iter().enumerate() {
        if gv != 0.0 {
            for (zc, &wc) in z.iter_mut().zip(&w[kk * c..(kk + 1) * c]) {
                *zc += gv * wc;
            }
        }
    }
    softmax_in_place(z);
}

fn mean_loss(g: &[f64], labels: &[usize], w: &[f64], b: &[f64], z: &mut [f64]) -> f64 {
    let k = g.len() / labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            probs_row(&g[i * k..(i + 1) * k], w, b, z);
            -z[l].clamp(PROB_FLOOR, 1.0).ln()
        })
        .sum();
    total / labels.len() as f64
}

/// Fits the head by minibatch gradient descent from zero-initialised weights.
///
/// Minibatches are reshuffled every epoch. Training stops after `epochs`, on a
/// plateau (see [`TrainSettings::patience`]), or when the loss turns
/// non-finite, in which case the last finite parameters are returned.
pub fn train_head(
    g: ArrayView2<'_, f64>,
    y: &LabelMatrix,
    settings: &TrainSettings,
    rng: &mut GpRng,
) -> Result<TrainedHead> {
    let (n, k) = g.dim();
    let c = y.n_classes();
    if n != y.len() {
        return Err(Error::contract(format!(
            "gene matrix has {n} rows but there are {} labels",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::contract("cannot train a head on an empty sample"));
    }
    if settings.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    let g_std = g.as_standard_layout();
    let gs = g_std.as_slice().expect("standard layout");
    let labels = y.labels();
    let mut z = vec![0.0; c];
    let mut w = vec![0.0; k * c];
    let mut b = vec![0.0; c];
    let mut dw = vec![0.0; k * c];
    let mut db = vec![0.0; c];
    let mut best = (w.clone(), b.clone());
    let mut trace = vec![mean_loss(gs, labels, &w, &b, &mut z)];
    let mut order: Vec<usize> = (0..n).collect();
    let lr = settings.learning_rate;
    let mut aborted = false;

    for _epoch in 0..settings.epochs {
        order.shuffle(rng);
        for batch in order.chunks(settings.batch_size) {
            dw.iter_mut().for_each(|v| *v = 0.0);
            db.iter_mut().for_each(|v| *v = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let row = &gs[i * k..(i + 1) * k];
                probs_row(row, &w, &b, &mut z);
                z[labels[i]] -= 1.0;
                for (cc, &zc) in z.iter().enumerate() {
                    let delta = zc * scale;
                    db[cc] += delta;
                    for (kk, &gv) in row.iter().enumerate() {
                        dw[kk * c + cc] += gv * delta;
                    }
                }
            }
            for (wv, dv) in w.iter_mut().zip(&dw) {
                *wv -= lr * dv;
            }
            for (bv, dv) in b.iter_mut().zip(&db) {
                *bv -= lr * dv;
            }
        }
        let loss = mean_loss(gs, labels, &w, &b, &mut z);
        if !loss.is_finite() || !w.iter().chain(&b).all(|v| v.is_finite()) {
            aborted = true;
            break;
        }
        best.0.copy_from_slice(&w);
        best.1.copy_from_slice(&b);
        trace.push(loss);
        let e = trace.len() - 1;
        if e >= settings.patience
            && trace[e - settings.patience] - loss < settings.min_improvement
        {
            break;
        }
    }
    let ft_iso = *trace.last().expect("initial loss recorded");
    Ok(TrainedHead {
        params: HeadParams {
            w: Array2::from_shape_vec((k, c), best.0).expect("k×c"),
            b: Array1::from(best.1),
        },
        ft_iso,
        loss_trace: trace,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_head_gives_zero_logits() {
        let g = array![[1.0, -2.0], [3.0, 0.5]];
        let z = logits(g.view(), &HeadParams::zeros(2, 3)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_affine_logit() {
        let p = HeadParams {
            w: array![[3.0]],
            b: array![1.0],
        };
        assert_eq!(logits(array![[2.0]].view(), &p).unwrap(), array![[7.0]]);
    }

    #[test]
    fn logits_shape_mismatch() {
        let p = HeadParams::zeros(3, 2);
        assert!(logits(array![[1.0, 2.0]].view(), &p).is_err());
    }

    #[test]
    fn softmax_closed_forms() {
        let p = softmax_probs(array![[0.0, 0.0, 0.0], [1000.0, 0.0, 0.0]].view());
        for c in 0..3 {
            assert_abs_diff_eq!(p[[0, c]], 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p[[1, 0]], 1.0, epsilon = 1e-15);
        assert!(p[[1, 1]] >= 0.0 && p[[1, 1]] < 1e-300);
        let p = softmax_probs(array![[2f64.ln(), 0.0]].view());
        assert_abs_diff_eq!(p[[0, 0]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn fitness_closed_forms() {
        let y = LabelMatrix::from_labels(&[0, 1], 2).unwrap();
        let perfect = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(isolated_fitness(perfect.view(), &y).unwrap() <= 1e-14);
        let uniform = array![[0.5, 0.5], [0.5, 0.5]];
        assert_abs_diff_eq!(isolated_fitness(uniform.view(), &y).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let pr = array![[0.8, 0.2], [0.4, 0.6]];
        let want = -(0.8f64.ln() + 0.6f64.ln()) / 2.0;
        assert_abs_diff_eq!(isolated_fitness(pr.view(), &y).unwrap(), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.366_985, epsilon = 1e-6);
    }

    #[test]
    fn fitness_rejects_empty() {
        let y = LabelMatrix::from_labels(&[], 2).unwrap();
        assert!(isolated_fitness(Array2::zeros((0, 2)).view(), &y).is_err());
    }

    #[test]
    fn one_hot_round_trip() {
        let y = LabelMatrix::from_labels(&[2, 0, 1], 3).unwrap();
        assert_eq!(LabelMatrix::from_one_hot(y.to_dense().view()).unwrap(), y);
        assert!(LabelMatrix::from_one_hot(array![[0.5, 0.5]].view()).is_err());
        assert!(LabelMatrix::from_labels(&[3], 3).is_err());
    }

    #[test]
    fn gradient_zero_at_optimum_limit() {
        // Saturated logits reproduce Y to machine precision, so the gradient vanishes.
        let g = array![[1.0, 0.0], [0.0, 1.0]];
        let p = HeadParams {
            w: array![[800.0, -800.0], [-800.0, 800.0]],
            b: array![0.0, 0.0],
        };
        let y = LabelMatrix::from_labels(&[0, 1], 2).unwrap();
        let (dw, db) = head_gradients(g.view(), &p, &y).unwrap();
        assert!(dw.iter().chain(db.iter()).all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn binary_gradient_columns_are_antisymmetric() {
        let g = array![[0.3, -1.2], [2.0, 0.7], [-0.4, 0.1]];
        let p = HeadParams {
            w: array![[0.2, -0.1], [0.5, 0.3]],
            b: array![0.1, -0.2],
        };
        let y = LabelMatrix::from_labels(&[0, 1, 1], 2).unwrap();
        let (dw, db) = head_gradients(g.view(), &p, &y).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(dw[[k, 0]], -dw[[k, 1]], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(db[0], -db[1], epsilon = 1e-15);
    }

    #[test]
    fn zero_epochs_returns_zero_head() {
        let g = array![[1.0], [2.0], [3.0], [4.0]];
        let y = LabelMatrix::from_labels(&[0, 1, 0, 1], 2).unwrap();
        let out = train_head(g.view(), &y, &TrainSettings::new(0, 2, 1e-3), &mut GpRng::new(0)).unwrap();
        assert_eq!(out.params, HeadParams::zeros(1, 2));
        assert_abs_diff_eq!(out.ft_iso, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let g = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let y = LabelMatrix::from_labels(&[0, 1, 0, 1, 0, 1], 2).unwrap();
        let out = train_head(g.view(), &y, &TrainSettings::new(1000, 1, 1e-3), &mut GpRng::new(0)).unwrap();
        assert!(out.ft_iso < out.loss_trace[0]);
        assert!(!out.aborted);
    }

    #[test]
    fn non_finite_training_keeps_last_finite_params() {
        let g = array![[1e308], [-1e308]];
        let y = LabelMatrix::from_labels(&[0, 1], 2).unwrap();
        let out = train_head(g.view(), &y, &TrainSettings::new(50, 1, 1e10), &mut GpRng::new(0)).unwrap();
        assert!(out.aborted);
        assert!(out.params.is_finite());
        assert!(out.ft_iso.is_finite());
    }
}
