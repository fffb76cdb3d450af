use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Individual;
use crate::error::{Error, Result};
use crate::rng::GpRng;

/// Which fitness a tournament compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKey {
    Iso,
    En,
}

/// Tournament selection: `size` uniform draws with replacement, returning the
/// drawn index with the lowest fitness under `key`. Ties go to the lowest index.
pub fn tournament_select(
    individuals: &[Individual],
    key: FitnessKey,
    size: usize,
    rng: &mut GpRng,
) -> Result<usize> {
    if individuals.is_empty() || size == 0 {
        return Err(Error::contract("tournament needs a non-empty population and size ≥ 1"));
    }
    if let Some(i) = individuals.iter().position(|ind| ind.fitness(key).is_none()) {
        return Err(Error::contract(format!(
            "individual {i} has no {key:?} fitness for tournament selection"
        )));
    }
    let mut best = rng.gen_range(0..individuals.len());
    for _ in 1..size {
        let cand = rng.gen_range(0..individuals.len());
        let (fc, fb) = (
            individuals[cand].fitness(key).unwrap(),
            individuals[best].fitness(key).unwrap(),
        );
        if fc < fb || (fc == fb && cand < best) {
            best = cand;
        }
    }
    Ok(best)
}
