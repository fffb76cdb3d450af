use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the shipped configurations, baseline first.
pub const PRESET_NAMES: [&str; 6] = ["BGP", "MEGP_0", "MEGP_25", "MEGP_50", "MEGP_75", "MEGP_100"];

/// Slack allowed between `ef_iso + ef_en` and `elite_total`. The shipped
/// 0.066/0.066 split sums to 0.132.
pub const ELITE_TOTAL_TOLERANCE: f64 = 0.002;

/// How cross-population ensembles are assembled each generation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// The `i`-th best individual (by isolated fitness) of every population form candidate `i`.
    #[default]
    RankAligned,
    /// Each population is shuffled before aligning.
    Random,
}

/// Every knob of one evolutionary run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MegpConfig {
    pub n_populations: usize,
    pub pop_size: usize,
    pub max_generations: usize,
    pub stall_generations: usize,
    pub genes_per_individual: usize,
    pub max_tree_depth: usize,
    pub ef_iso: f64,
    /// Absent for the single-population baseline.
    pub ef_en: Option<f64>,
    /// Absent for the single-population baseline.
    pub p_en: Option<f64>,
    /// Fixed `ef_iso + ef_en` budget shared by the variants.
    pub elite_total: f64,
    pub p_c: f64,
    pub p_m: f64,
    pub p_r: f64,
    pub const_range: [f64; 2],
    pub tournament_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Minibatch size is the training-set size divided by this, at least 1.
    pub batch_divisor: usize,
    /// Weight optimiser budget per ensemble is `ensemble_budget_factor · P · C` evaluations.
    pub ensemble_budget_factor: usize,
    pub pairing: Pairing,
    pub seed: u64,
}

impl MegpConfig {
    /// The single-population baseline.
    pub fn bgp() -> Self {
        Self {
            n_populations: 1,
            pop_size: 60,
            max_generations: 150,
            stall_generations: 30,
            genes_per_individual: 10,
            max_tree_depth: 10,
            ef_iso: 0.133,
            ef_en: None,
            p_en: None,
            elite_total: 0.133,
            p_c: 0.84,
            p_m: 0.14,
            p_r: 0.02,
            const_range: [-10.0, 10.0],
            tournament_size: 3,
            epochs: 1000,
            learning_rate: 0.001,
            batch_divisor: 50,
            ensemble_budget_factor: 200,
            pairing: Pairing::RankAligned,
            seed: 0,
        }
    }

    /// Two populations of 30 with the elite split and ensemble-selection
    /// probability of the `MEGP_{percent}` variant (0, 25, 50, 75 or 100).
    pub fn megp(percent: u32) -> Result<Self> {
        let (ef_iso, ef_en, p_en) = match percent {
            0 => (0.133, 0.0, 0.0),
            25 => (0.1, 0.033, 0.25),
            50 => (0.066, 0.066, 0.5),
            75 => (0.033, 0.1, 0.75),
            100 => (0.0, 0.133, 1.0),
            other => {
                return Err(Error::config(
                    "preset",
                    format!("no MEGP_{other} variant; expected one of 0, 25, 50, 75, 100"),
                ))
            }
        };
        Ok(Self {
            n_populations: 2,
            pop_size: 30,
            ef_iso,
            ef_en: Some(ef_en),
            p_en: Some(p_en),
            ..Self::bgp()
        })
    }

    /// Looks up one of [`PRESET_NAMES`].
    pub fn preset(name: &str) -> Result<Self> {
        if name == "BGP" {
            return Ok(Self::bgp());
        }
        name.strip_prefix("MEGP_")
            .and_then(|p| p.parse::<u32>().ok())
            .filter(|p| [0, 25, 50, 75, 100].contains(p))
            .map(Self::megp)
            .unwrap_or_else(|| {
                Err(Error::config(
                    "model",
                    format!("unknown preset {name:?}; expected one of {}", PRESET_NAMES.join(", ")),
                ))
            })
    }

    pub fn is_baseline(&self) -> bool {
        self.n_populations == 1
    }

    pub fn ef_en_value(&self) -> f64 {
        self.ef_en.unwrap_or(0.0)
    }

    pub fn p_en_value(&self) -> f64 {
        self.p_en.unwrap_or(0.0)
    }

    /// Minibatch size for a training set of `n_train` rows.
    pub fn batch_size(&self, n_train: usize) -> usize {
        (n_train / self.batch_divisor.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("{v} is outside [0, 1]")))
            }
        };
        let at_least = |field: &str, v: usize, min: usize| -> Result<()> {
            if v >= min {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be at least {min}, got {v}")))
            }
        };
        at_least("n_populations", self.n_populations, 1)?;
        at_least("pop_size", self.pop_size, 2)?;
        at_least("genes_per_individual", self.genes_per_individual, 1)?;
        at_least("max_tree_depth", self.max_tree_depth, 1)?;
        at_least("tournament_size", self.tournament_size, 1)?;
        at_least("batch_divisor", self.batch_divisor, 1)?;
        at_least("stall_generations", self.stall_generations, 1)?;
        unit("ef_iso", self.ef_iso)?;
        unit("p_c", self.p_c)?;
        unit("p_m", self.p_m)?;
        unit("p_r", self.p_r)?;
        if (self.p_c + self.p_m + self.p_r - 1.0).abs() > 1e-9 {
            return Err(Error::config("p_c", "p_c + p_m + p_r must equal 1"));
        }
        if self.is_baseline() {
            if self.ef_en.is_some_and(|v| v != 0.0) {
                return Err(Error::config("ef_en", "a single population has no ensemble elites"));
            }
            if self.p_en.is_some_and(|v| v != 0.0) {
                return Err(Error::config("p_en", "a single population has no ensemble selection"));
            }
        } else {
            let ef_en = self.ef_en.ok_or_else(|| Error::config("ef_en", "required with more than one population"))?;
            let p_en = self.p_en.ok_or_else(|| Error::config("p_en", "required with more than one population"))?;
            unit("ef_en", ef_en)?;
            unit("p_en", p_en)?;
        }
        unit("elite_total", self.elite_total)?;
        if (self.ef_iso + self.ef_en_value() - self.elite_total).abs() > ELITE_TOTAL_TOLERANCE {
            return Err(Error::config(
                "ef_iso",
                format!(
                    "ef_iso + ef_en = {} but the elite budget is {}",
                    self.ef_iso + self.ef_en_value(),
                    self.elite_total
                ),
            ));
        }
        let [lo, hi] = self.const_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config("const_range", "need finite bounds with lo ≤ hi"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            MegpConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(MegpConfig::preset("MEGP_60").is_err());
        assert!(MegpConfig::preset("bgp").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = MegpConfig::megp(50).unwrap();
        c.p_en = Some(1.5);
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("p_en"), "{e}");
        let mut c = MegpConfig::megp(50).unwrap();
        c.ef_iso = 0.3;
        assert!(c.validate().is_err());
        let mut c = MegpConfig::bgp();
        c.p_en = Some(0.5);
        assert!(c.validate().is_err());
        let mut c = MegpConfig::bgp();
        c.p_m = 0.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn batch_size_floor() {
        let c = MegpConfig::bgp();
        assert_eq!(c.batch_size(324), 6);
        assert_eq!(c.batch_size(10), 1);
    }
}
