//! Multi-gene expression-tree genotypes and the genetic operators that act on them.
//!
//! An [`Individual`] carries `K` expression trees (genes). Each gene maps a row
//! of its population's feature view to one scalar; the resulting `N×K` gene
//! matrix feeds the softmax head in [`crate::head`].

mod init;
mod ops;
mod select;
mod tree;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::HeadParams;

pub use init::{full_tree, grow_tree, init_half_and_half, random_terminal};
pub use ops::{subtree_crossover, subtree_mutation, CROSSOVER_RETRIES};
pub use select::{tournament_select, FitnessKey};
pub use tree::{BinOp, ExprTree, Node, EVAL_CLAMP, PROTECTED_DIV_EPS};

/// The terminal set and size bounds trees are built within.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeSpace {
    /// Width of the feature view; feature terminals index `0..n_features`.
    pub n_features: usize,
    pub max_depth: usize,
    pub const_range: (f64, f64),
}

impl TreeSpace {
    pub fn new(n_features: usize, max_depth: usize, const_range: (f64, f64)) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::config("n_view_features", "a view needs at least one feature"));
        }
        if max_depth == 0 {
            return Err(Error::config("max_tree_depth", "must be at least 1"));
        }
        if !(const_range.0 <= const_range.1) {
            return Err(Error::config("const_range", "lower bound exceeds upper bound"));
        }
        Ok(Self {
            n_features,
            max_depth,
            const_range,
        })
    }
}

/// K genes plus the trained softmax head and both fitness values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<ExprTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft_iso: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft_en: Option<f64>,
    /// Training-split class probabilities from the last evaluation.
    #[serde(skip)]
    pub(crate) train_probs: Option<Arc<Array2<f64>>>,
    /// Validation-split class probabilities, filled by the evolutionary loop.
    #[serde(skip)]
    pub(crate) val_probs: Option<Arc<Array2<f64>>>,
}

impl Individual {
    pub fn new(genes: Vec<ExprTree>) -> Self {
        Self {
            genes,
            head: None,
            ft_iso: None,
            ft_en: None,
            train_probs: None,
            val_probs: None,
        }
    }

    /// Drops the head, both fitness values and cached probabilities.
    pub fn clear_evaluation(&mut self) {
        self.head = None;
        self.ft_iso = None;
        self.ft_en = None;
        self.train_probs = None;
        self.val_probs = None;
    }

    pub fn is_evaluated(&self) -> bool {
        self.ft_iso.is_some() && self.head.is_some()
    }

    pub fn fitness(&self, key: FitnessKey) -> Option<f64> {
        match key {
            FitnessKey::Iso => self.ft_iso,
            FitnessKey::En => self.ft_en,
        }
    }

    pub fn max_depth(&self) -> usize {
        self.genes.iter().map(ExprTree::depth).max().unwrap_or(0)
    }

    /// Training probabilities cached by the last evaluation, if any.
    pub fn train_probs(&self) -> Option<&Array2<f64>> {
        self.train_probs.as_deref()
    }
}

/// Evaluates every gene on every row: entry `(i, k)` is gene `k` applied to row `i`.
pub fn eval_gene_matrix(ind: &Individual, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n_cols = data.ncols();
    for (k, gene) in ind.genes.iter().enumerate() {
        if let Some(f) = gene.max_feature() {
            if f >= n_cols {
                return Err(Error::contract(format!(
                    "gene {k} references feature {f} but the view has {n_cols} columns"
                )));
            }
        }
    }
    let k = ind.genes.len();
    let mut out = Array2::zeros((data.nrows(), k));
    let mut buf = vec![0.0; n_cols];
    for (i, row) in data.rows().into_iter().enumerate() {
        let row = match row.as_slice() {
            Some(s) => s,
            None => {
                buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
                &buf[..]
            }
        };
        for (j, gene) in ind.genes.iter().enumerate() {
            out[[i, j]] = gene.eval(row);
        }
    }
    Ok(out)
}

/// A fixed-size set of individuals bound to one feature view for the whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub view_id: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Index of the individual with the lowest isolated fitness (ties: lowest index).
    pub fn best_iso(&self) -> Option<usize> {
        argmin(self.individuals.iter().map(|i| i.ft_iso))
    }

    pub fn iso_fitnesses(&self) -> Vec<f64> {
        self.individuals.iter().filter_map(|i| i.ft_iso).collect()
    }
}

pub(crate) fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}
