//! The MEGP and BGP evolutionary loops.
//!
//! Each generation: train every unevaluated individual's head on its
//! population's feature view, assemble cross-population ensembles, score the
//! candidates on the validation split, record the generation, then keep the
//! elites and breed the rest.

mod config;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{MegpConfig, Pairing, ELITE_TOTAL_TOLERANCE, PRESET_NAMES};

use crate::ensemble::{
    ensemble_fitness, ensemble_probs, optimize_ensemble_weights, EnsembleCandidate, EnsembleWeights,
};
use crate::error::{Error, Result};
use crate::gp::{
    eval_gene_matrix, init_half_and_half, subtree_crossover, subtree_mutation, tournament_select, FitnessKey,
    Individual, Population, TreeSpace,
};
use crate::harness::SplitDataset;
use crate::head::{isolated_fitness, predict_probs, train_head, LabelMatrix, TrainSettings};
use crate::metrics::{classification_metrics, population_entropy, ClassificationReport, CrossoverEvent, DEFAULT_ENTROPY_BINS};
use crate::rng::GpRng;

/// Shuffles `0..n_features` and cuts it into `n_views` contiguous chunks whose
/// sizes differ by at most one. Each view is returned sorted.
pub fn partition_features(n_features: usize, n_views: usize, rng: &mut GpRng) -> Result<Vec<Vec<usize>>> {
    if n_views == 0 {
        return Err(Error::config("n_populations", "need at least one view"));
    }
    if n_features < n_views {
        return Err(Error::config(
            "n_populations",
            format!("{n_features} features cannot be split into {n_views} non-empty views"),
        ));
    }
    let mut all: Vec<usize> = (0..n_features).collect();
    all.shuffle(rng);
    let base = n_features / n_views;
    let extra = n_features % n_views;
    let mut views = Vec::with_capacity(n_views);
    let mut it = all.into_iter();
    for v in 0..n_views {
        let mut view: Vec<usize> = it.by_ref().take(base + usize::from(v < extra)).collect();
        view.sort_unstable();
        views.push(view);
    }
    Ok(views)
}

fn train_settings(cfg: &MegpConfig, n_train: usize) -> TrainSettings {
    TrainSettings::new(cfg.epochs, cfg.batch_size(n_train), cfg.learning_rate)
}

/// Trains the head of every unevaluated individual on `train` and sets its
/// isolated fitness. Evaluated individuals (elites) are left untouched.
///
/// Individuals train in parallel; each gets an RNG forked in index order, so
/// the outcome does not depend on scheduling.
pub fn evaluate_population(
    pop: &mut Population,
    train: ArrayView2<'_, f64>,
    y: &LabelMatrix,
    cfg: &MegpConfig,
    rng: &mut GpRng,
) -> Result<()> {
    let settings = train_settings(cfg, y.len());
    let jobs: Vec<(usize, GpRng)> = pop
        .individuals
        .iter()
        .enumerate()
        .filter(|(_, ind)| !ind.is_evaluated())
        .map(|(i, _)| i)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|i| (i, rng.fork()))
        .collect();
    let individuals = &pop.individuals;
    let done: Vec<(usize, crate::head::TrainedHead, Array2<f64>)> = jobs
        .into_par_iter()
        .map(|(i, mut r)| {
            let g = eval_gene_matrix(&individuals[i], train)?;
            let trained = train_head(g.view(), y, &settings, &mut r)?;
            let probs = predict_probs(g.view(), &trained.params)?;
            Ok((i, trained, probs))
        })
        .collect::<Result<_>>()?;
    for (i, trained, probs) in done {
        let ind = &mut pop.individuals[i];
        ind.ft_iso = Some(trained.ft_iso);
        ind.head = Some(trained.params);
        ind.train_probs = Some(probs.into());
        ind.val_probs = None;
    }
    Ok(())
}

/// Class probabilities of an evaluated individual on `data`.
pub fn individual_probs(ind: &Individual, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let head = ind
        .head
        .as_ref()
        .ok_or_else(|| Error::contract("individual has no trained head"))?;
    let g = eval_gene_matrix(ind, data)?;
    predict_probs(g.view(), head)
}

fn attach_val_probs(pop: &mut Population, val: ArrayView2<'_, f64>) -> Result<()> {
    let missing: Vec<usize> = (0..pop.len())
        .filter(|&i| pop.individuals[i].val_probs.is_none())
        .collect();
    let individuals = &pop.individuals;
    let probs: Vec<(usize, Array2<f64>)> = missing
        .into_par_iter()
        .map(|i| Ok((i, individual_probs(&individuals[i], val)?)))
        .collect::<Result<_>>()?;
    for (i, p) in probs {
        pop.individuals[i].val_probs = Some(p.into());
    }
    Ok(())
}

/// Indices of `pop` ordered by isolated fitness, ties by index.
fn iso_order(pop: &Population) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = pop.individuals[a].ft_iso.unwrap_or(f64::INFINITY);
        let fb = pop.individuals[b].ft_iso.unwrap_or(f64::INFINITY);
        fa.total_cmp(&fb).then(a.cmp(&b))
    });
    order
}

/// 1-based rank of every individual by isolated fitness.
pub fn iso_ranks(pop: &Population) -> Vec<usize> {
    let mut ranks = vec![0; pop.len()];
    for (pos, i) in iso_order(pop).into_iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Builds `pop_size` ensembles of one member per population, fits their
/// weights on the training labels, and stores each candidate's ensemble
/// fitness on its members. Candidates come back sorted by ensemble fitness.
///
/// With a single population every candidate is one individual with unit
/// weights, so its ensemble fitness is its own renormalised cross-entropy.
pub fn form_ensembles(
    pops: &mut [Population],
    y: &LabelMatrix,
    cfg: &MegpConfig,
    rng: &mut GpRng,
) -> Result<Vec<EnsembleCandidate>> {
    let first = pops.first().ok_or_else(|| Error::contract("no populations"))?;
    let size = first.len();
    if pops.iter().any(|p| p.len() != size) {
        return Err(Error::contract("populations differ in size"));
    }
    for (p, pop) in pops.iter().enumerate() {
        if let Some(i) = pop.individuals.iter().position(|ind| ind.train_probs.is_none() || ind.ft_iso.is_none()) {
            return Err(Error::contract(format!("individual {i} of population {p} is unevaluated")));
        }
    }
    let n_pop = pops.len();
    let c = y.n_classes();
    let mut orders: Vec<Vec<usize>> = pops.iter().map(iso_order).collect();
    if cfg.pairing == Pairing::Random {
        for o in orders.iter_mut() {
            o.shuffle(rng);
        }
    }
    let budget = cfg.ensemble_budget_factor * n_pop * c;
    let pops_ref = &*pops;
    let mut candidates: Vec<EnsembleCandidate> = (0..size)
        .into_par_iter()
        .map(|i| {
            let members: Vec<usize> = orders.iter().map(|o| o[i]).collect();
            let probs: Vec<ArrayView2<'_, f64>> = members
                .iter()
                .enumerate()
                .map(|(p, &m)| pops_ref[p].individuals[m].train_probs().expect("checked").view())
                .collect();
            let weights = if n_pop == 1 {
                EnsembleWeights {
                    w: Array2::ones((1, c)),
                }
            } else {
                optimize_ensemble_weights(&probs, y, budget)?.weights
            };
            let ft_en = ensemble_fitness(&probs, &weights, y)?;
            Ok(EnsembleCandidate {
                members,
                weights,
                ft_en,
            })
        })
        .collect::<Result<_>>()?;
    candidates.sort_by(|a, b| a.ft_en.total_cmp(&b.ft_en));
    for pop in pops.iter_mut() {
        for ind in pop.individuals.iter_mut() {
            ind.ft_en = None;
        }
    }
    for cand in &candidates {
        for (p, &m) in cand.members.iter().enumerate() {
            let slot = &mut pops[p].individuals[m].ft_en;
            *slot = Some(slot.map_or(cand.ft_en, |v: f64| v.min(cand.ft_en)));
        }
    }
    Ok(candidates)
}

/// `⌈frac·n⌉`, forgiving floating-point noise just above an integer.
pub fn elite_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Elite indices of population `pop_index`, ascending.
///
/// Set (a) is the `⌈ef_iso·n⌉` best by isolated fitness; set (b) is this
/// population's members of the `⌈ef_en·n⌉` best candidates. The union is cut
/// to `⌈(ef_iso + ef_en)·n⌉`, taking (a) in fitness order first and then (b)
/// in candidate order; slack left by overlap goes to the next-best isolated fitness.
pub fn select_elites(
    pop: &Population,
    pop_index: usize,
    candidates: &[EnsembleCandidate],
    ef_iso: f64,
    ef_en: f64,
) -> Vec<usize> {
    let n = pop.len();
    let n_iso = elite_count(ef_iso, n).min(n);
    let n_en = elite_count(ef_en, n).min(candidates.len());
    let budget = elite_count(ef_iso + ef_en, n).min(n);
    let order = iso_order(pop);
    let mut by_en: Vec<&EnsembleCandidate> = candidates.iter().collect();
    by_en.sort_by(|a, b| a.ft_en.total_cmp(&b.ft_en));

    let mut chosen: Vec<usize> = Vec::with_capacity(budget);
    let push = |i: usize, chosen: &mut Vec<usize>| {
        if chosen.len() < budget && !chosen.contains(&i) {
            chosen.push(i);
        }
    };
    for &i in order.iter().take(n_iso) {
        push(i, &mut chosen);
    }
    for cand in by_en.iter().take(n_en) {
        if let Some(&m) = cand.members.get(pop_index) {
            push(m, &mut chosen);
        }
    }
    let wanted = (n_iso + n_en).min(budget);
    for &i in &order {
        if chosen.len() >= wanted {
            break;
        }
        push(i, &mut chosen);
    }
    chosen.sort_unstable();
    chosen
}

/// A breeding operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Crossover,
    Mutation,
    Reproduction,
}

/// Draws an operation with probabilities `(p_c, p_m, p_r)`.
pub fn draw_operation(cfg: &MegpConfig, rng: &mut GpRng) -> Operation {
    let u: f64 = rng.gen();
    if u < cfg.p_c {
        Operation::Crossover
    } else if u < cfg.p_c + cfg.p_m {
        Operation::Mutation
    } else {
        Operation::Reproduction
    }
}

/// A population after breeding, with the mean parental isolated fitness of
/// every crossover-born individual.
#[derive(Clone, Debug)]
pub struct Offspring {
    pub population: Population,
    pub parent_means: Vec<Option<f64>>,
}

/// Produces the next generation of every population.
///
/// Elites are copied unchanged, evaluation included. Other slots are filled by
/// crossover, mutation or reproduction. A crossover draws its tournament key
/// once: ensemble fitness with probability `p_en`, isolated fitness otherwise;
/// mutation and reproduction always use isolated fitness. Offspring are unevaluated.
pub fn breed_generation(
    pops: &[Population],
    candidates: &[EnsembleCandidate],
    spaces: &[TreeSpace],
    cfg: &MegpConfig,
    rng: &mut GpRng,
) -> Result<Vec<Offspring>> {
    if spaces.len() != pops.len() {
        return Err(Error::contract("one tree space per population is required"));
    }
    let mut out = Vec::with_capacity(pops.len());
    for (p, pop) in pops.iter().enumerate() {
        let n = pop.len();
        let elites = select_elites(pop, p, candidates, cfg.ef_iso, cfg.ef_en_value());
        let mut next: Vec<Individual> = elites.iter().map(|&i| pop.individuals[i].clone()).collect();
        let mut parent_means: Vec<Option<f64>> = vec![None; next.len()];
        let inds = &pop.individuals;
        while next.len() < n {
            match draw_operation(cfg, rng) {
                Operation::Crossover => {
                    let key = match cfg.p_en {
                        Some(p_en) if !cfg.is_baseline() => {
                            if rng.gen::<f64>() < p_en {
                                FitnessKey::En
                            } else {
                                FitnessKey::Iso
                            }
                        }
                        _ => FitnessKey::Iso,
                    };
                    let a = tournament_select(inds, key, cfg.tournament_size, rng)?;
                    let b = tournament_select(inds, key, cfg.tournament_size, rng)?;
                    let mean = (inds[a].ft_iso.expect("evaluated") + inds[b].ft_iso.expect("evaluated")) / 2.0;
                    let (c1, c2) = subtree_crossover(&inds[a], &inds[b], cfg.max_tree_depth, rng);
                    next.push(c1);
                    parent_means.push(Some(mean));
                    if next.len() < n {
                        next.push(c2);
                        parent_means.push(Some(mean));
                    }
                }
                Operation::Mutation => {
                    let a = tournament_select(inds, FitnessKey::Iso, cfg.tournament_size, rng)?;
                    next.push(subtree_mutation(&inds[a], &spaces[p], rng));
                    parent_means.push(None);
                }
                Operation::Reproduction => {
                    let a = tournament_select(inds, FitnessKey::Iso, cfg.tournament_size, rng)?;
                    next.push(Individual::new(inds[a].genes.clone()));
                    parent_means.push(None);
                }
            }
        }
        out.push(Offspring {
            population: Population {
                individuals: next,
                view_id: pop.view_id,
            },
            parent_means,
        });
    }
    Ok(out)
}

/// Counts generations without strict improvement of a minimised signal.
#[derive(Clone, Debug, PartialEq)]
pub struct StallTracker {
    limit: usize,
    best: Option<f64>,
    since: usize,
}

impl StallTracker {
    pub fn new(limit: usize) -> Self {
        Self {
            limit,
            best: None,
            since: 0,
        }
    }

    /// Feeds one generation's value; returns whether it set a new best.
    pub fn observe(&mut self, value: f64) -> bool {
        match self.best {
            Some(b) if !(value < b) => {
                self.since += 1;
                false
            }
            _ => {
                self.best = Some(value);
                self.since = 0;
                true
            }
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn generations_since_improvement(&self) -> usize {
        self.since
    }

    pub fn stalled(&self) -> bool {
        self.best.is_some() && self.since >= self.limit
    }
}

/// Crossover outcomes of the individuals evaluated in one generation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossoverStats {
    pub events: usize,
    /// Offspring strictly better than their parents' mean.
    pub improved: usize,
    pub log: Vec<CrossoverEvent>,
}

/// One generation of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best isolated fitness of each population in this generation (training split).
    pub best_ft_iso: Vec<f64>,
    pub best_so_far_ft_iso: Vec<f64>,
    /// Best training ensemble fitness this generation; absent for a single population.
    pub best_ft_en: Option<f64>,
    pub best_so_far_ft_en: Option<f64>,
    /// Best validation fitness this generation: ensemble fitness, or isolated for one population.
    pub best_val_fitness: f64,
    pub best_so_far_val_fitness: f64,
    /// 1-based isolated-fitness rank, within its population, of each member of the best ensemble.
    pub member_ranks: Vec<usize>,
    pub crossover: CrossoverStats,
    pub wall_seconds: f64,
}

/// The model kept at the end of a run: the best candidate by validation fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub generation: usize,
    /// One individual per population.
    pub members: Vec<Individual>,
    /// Mixing weights; absent for a single population.
    pub weights: Option<EnsembleWeights>,
    pub train_fitness: f64,
    pub val_fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: MegpConfig,
    /// Source-dataset feature indices of each population's view.
    pub views: Vec<Vec<usize>>,
    pub trajectory: Vec<GenerationRecord>,
    pub final_model: FinalModel,
    pub test_metrics: ClassificationReport,
    /// Isolated fitness of every individual in the last generation, per population.
    pub final_ft_iso: Vec<Vec<f64>>,
    /// Histogram entropy of all last-generation isolated fitnesses.
    pub final_entropy: f64,
    pub runtime_seconds: f64,
}

impl RunResult {
    /// Best-so-far training fitness per generation: ensemble fitness with
    /// several populations, isolated fitness with one.
    pub fn fitness_series(&self) -> Vec<f64> {
        self.trajectory
            .iter()
            .map(|r| match r.best_so_far_ft_en {
                Some(v) => v,
                None => r.best_so_far_ft_iso.iter().copied().fold(f64::INFINITY, f64::min),
            })
            .collect()
    }

    /// Every crossover event of the run in generation order.
    pub fn crossover_log(&self) -> Vec<CrossoverEvent> {
        self.trajectory.iter().flat_map(|r| r.crossover.log.iter().copied()).collect()
    }
}

/// Runs the configured model; dispatches on `n_populations`.
pub fn run(cfg: &MegpConfig, data: &SplitDataset) -> Result<RunResult> {
    run_observed(cfg, data, &mut |_, _| {})
}

/// The multi-population model; requires `n_populations ≥ 2`.
pub fn run_megp(cfg: &MegpConfig, data: &SplitDataset) -> Result<RunResult> {
    if cfg.n_populations < 2 {
        return Err(Error::config("n_populations", "the ensemble model needs at least 2 populations"));
    }
    run(cfg, data)
}

/// The single-population baseline; requires `n_populations = 1`.
pub fn run_bgp(cfg: &MegpConfig, data: &SplitDataset) -> Result<RunResult> {
    if cfg.n_populations != 1 {
        return Err(Error::config("n_populations", "the baseline uses exactly 1 population"));
    }
    run(cfg, data)
}

/// As [`run`], calling `observer(generation, populations)` after each
/// generation is evaluated and its ensembles formed.
pub fn run_observed(
    cfg: &MegpConfig,
    data: &SplitDataset,
    observer: &mut dyn FnMut(usize, &[Population]),
) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    if data.n_classes < 2 {
        return Err(Error::config("dataset", "need at least 2 classes"));
    }
    if data.val.y.is_empty() || data.test.y.is_empty() {
        return Err(Error::config("split", "validation and test partitions must be non-empty"));
    }
    let n_pop = cfg.n_populations;
    let n_features = data.n_features();
    let mut rng = GpRng::new(cfg.seed);
    let views = if n_pop == 1 {
        vec![(0..n_features).collect::<Vec<_>>()]
    } else {
        partition_features(n_features, n_pop, &mut rng)?
    };
    let slice = |x: &Array2<f64>, v: &[usize]| x.select(Axis(1), v);
    let train_views: Vec<Array2<f64>> = views.iter().map(|v| slice(&data.train.x, v)).collect();
    let val_views: Vec<Array2<f64>> = views.iter().map(|v| slice(&data.val.x, v)).collect();
    let const_range = (cfg.const_range[0], cfg.const_range[1]);
    let spaces: Vec<TreeSpace> = views
        .iter()
        .map(|v| TreeSpace::new(v.len(), cfg.max_tree_depth, const_range))
        .collect::<Result<_>>()?;
    let mut pops: Vec<Population> = spaces
        .iter()
        .enumerate()
        .map(|(p, s)| init_half_and_half(cfg.pop_size, cfg.genes_per_individual, s, p, &mut rng))
        .collect::<Result<_>>()?;
    let mut parent_means: Vec<Vec<Option<f64>>> = vec![vec![None; cfg.pop_size]; n_pop];

    let mut trajectory = Vec::new();
    let mut stall = StallTracker::new(cfg.stall_generations);
    let mut so_far_iso = vec![f64::INFINITY; n_pop];
    let mut so_far_en = f64::INFINITY;
    let mut final_model: Option<FinalModel> = None;

    for generation in 0.. {
        let gen_start = Instant::now();
        for (p, pop) in pops.iter_mut().enumerate() {
            evaluate_population(pop, train_views[p].view(), &data.train.y, cfg, &mut rng)?;
            attach_val_probs(pop, val_views[p].view())?;
        }
        let mut crossover = CrossoverStats::default();
        for (p, pop) in pops.iter().enumerate() {
            for (ind, pm) in pop.individuals.iter().zip(&parent_means[p]) {
                if let (Some(parent_mean), Some(offspring)) = (*pm, ind.ft_iso) {
                    crossover.events += 1;
                    crossover.improved += usize::from(offspring < parent_mean);
                    crossover.log.push(CrossoverEvent {
                        generation,
                        parent_mean,
                        offspring,
                    });
                }
            }
        }

        let candidates = if n_pop > 1 {
            form_ensembles(&mut pops, &data.train.y, cfg, &mut rng)?
        } else {
            Vec::new()
        };

        // Validation scoring and model choice.
        let (val_best, best_snapshot) = if n_pop > 1 {
            let scores: Vec<f64> = candidates
                .iter()
                .map(|cand| {
                    let probs: Vec<ArrayView2<'_, f64>> = cand
                        .members
                        .iter()
                        .enumerate()
                        .map(|(p, &m)| pops[p].individuals[m].val_probs.as_deref().expect("attached").view())
                        .collect();
                    ensemble_fitness(&probs, &cand.weights, &data.val.y)
                })
                .collect::<Result<_>>()?;
            let bi = argmin_f64(&scores);
            let cand = &candidates[bi];
            let snapshot = FinalModel {
                generation,
                members: cand
                    .members
                    .iter()
                    .enumerate()
                    .map(|(p, &m)| pops[p].individuals[m].clone())
                    .collect(),
                weights: Some(cand.weights.clone()),
                train_fitness: cand.ft_en,
                val_fitness: scores[bi],
            };
            (scores[bi], snapshot)
        } else {
            let pop = &pops[0];
            let scores: Vec<f64> = pop
                .individuals
                .iter()
                .map(|ind| isolated_fitness(ind.val_probs.as_deref().expect("attached").view(), &data.val.y))
                .collect::<Result<_>>()?;
            let bi = argmin_f64(&scores);
            let ind = &pop.individuals[bi];
            let snapshot = FinalModel {
                generation,
                members: vec![ind.clone()],
                weights: None,
                train_fitness: ind.ft_iso.expect("evaluated"),
                val_fitness: scores[bi],
            };
            (scores[bi], snapshot)
        };
        if stall.observe(val_best) {
            final_model = Some(best_snapshot);
        }

        let best_ft_iso: Vec<f64> = pops
            .iter()
            .map(|pop| pop.iso_fitnesses().into_iter().fold(f64::INFINITY, f64::min))
            .collect();
        for (s, b) in so_far_iso.iter_mut().zip(&best_ft_iso) {
            *s = s.min(*b);
        }
        let best_ft_en = candidates.first().map(|c| c.ft_en);
        if let Some(v) = best_ft_en {
            so_far_en = so_far_en.min(v);
        }
        let member_ranks = match candidates.first() {
            Some(best) => best
                .members
                .iter()
                .enumerate()
                .map(|(p, &m)| iso_ranks(&pops[p])[m])
                .collect(),
            None => vec![1],
        };
        observer(generation, &pops);
        trajectory.push(GenerationRecord {
            generation,
            best_ft_iso,
            best_so_far_ft_iso: so_far_iso.clone(),
            best_ft_en,
            best_so_far_ft_en: best_ft_en.map(|_| so_far_en),
            best_val_fitness: val_best,
            best_so_far_val_fitness: stall.best().expect("observed"),
            member_ranks,
            crossover,
            wall_seconds: gen_start.elapsed().as_secs_f64(),
        });

        if generation >= cfg.max_generations || stall.stalled() {
            break;
        }
        let bred = breed_generation(&pops, &candidates, &spaces, cfg, &mut rng)?;
        pops.clear();
        parent_means.clear();
        for o in bred {
            pops.push(o.population);
            parent_means.push(o.parent_means);
        }
    }

    let final_model = final_model.expect("generation 0 always sets a model");
    let test_probs: Vec<Array2<f64>> = final_model
        .members
        .iter()
        .zip(&views)
        .map(|(ind, v)| individual_probs(ind, slice(&data.test.x, v).view()))
        .collect::<Result<_>>()?;
    let mixed = match &final_model.weights {
        Some(w) => {
            let views: Vec<ArrayView2<'_, f64>> = test_probs.iter().map(|p| p.view()).collect();
            ensemble_probs(&views, w)?
        }
        None => test_probs.into_iter().next().expect("one member"),
    };
    let test_metrics = classification_metrics(mixed.view(), &data.test.y)?;
    let final_ft_iso: Vec<Vec<f64>> = pops.iter().map(Population::iso_fitnesses).collect();
    let all: Vec<f64> = final_ft_iso.iter().flatten().copied().collect();
    Ok(RunResult {
        config: cfg.clone(),
        views,
        trajectory,
        final_model,
        test_metrics,
        final_entropy: population_entropy(&all, DEFAULT_ENTROPY_BINS),
        final_ft_iso,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

fn argmin_f64(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.total_cmp(&values[best]).is_lt() {
            best = i;
        }
    }
    best
}
