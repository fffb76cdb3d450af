//! Derivative-free minimisation over the nonnegative orthant.
//!
//! A linear-approximation trust-region method in the spirit of COBYLA: at the
//! incumbent `x` the objective is interpolated linearly over the simplex
//! `{x, x + ρ·e_1, …, x + ρ·e_n}`, a step of length `ρ` is taken along the
//! model's projected steepest-descent direction (extended while it keeps
//! improving), and `ρ` is halved whenever the model stops predicting progress.
//! Only lower bounds at zero are supported, which is all ensemble weighting needs.

/// Cap on how far a successful step is extended, in multiples of `ρ`.
const MAX_STEP_MULTIPLIER: f64 = 64.0;

/// Settings for [`minimize_nonnegative`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustRegion {
    /// Initial trust-region radius.
    pub rho_begin: f64,
    /// Radius at which the search stops.
    pub rho_end: f64,
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
}

impl Default for TrustRegion {
    fn default() -> Self {
        Self {
            rho_begin: 0.25,
            rho_end: 1e-7,
            max_evals: 1000,
        }
    }
}

/// Best point seen by [`minimize_nonnegative`].
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

struct Counted<F> {
    f: F,
    evals: usize,
    max: usize,
    best_x: Vec<f64>,
    best_v: f64,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn budget_left(&self) -> bool {
        self.evals < self.max
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_v {
            self.best_v = v;
            self.best_x.copy_from_slice(x);
        }
        v
    }
}

/// Minimises `f` subject to `x ≥ 0`, starting from `x0` (projected onto the
/// feasible set). Never returns a point worse than the start; when the
/// evaluation budget runs out the best point seen is returned.
pub fn minimize_nonnegative<F>(f: F, x0: &[f64], opts: &TrustRegion) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().map(|v| v.max(0.0)).collect();
    let mut obj = Counted {
        f,
        evals: 0,
        max: opts.max_evals.max(1),
        best_x: x.clone(),
        best_v: f64::INFINITY,
    };
    let mut fx = obj.eval(&x);
    let mut rho = opts.rho_begin;
    let mut grad = vec![0.0; n];
    let mut probe = vec![0.0; n];

    'outer: while rho >= opts.rho_end && obj.budget_left() && n > 0 {
        // Linear model over the forward simplex.
        for j in 0..n {
            if !obj.budget_left() {
                break 'outer;
            }
            probe.copy_from_slice(&x);
            probe[j] += rho;
            grad[j] = (obj.eval(&probe) - fx) / rho;
        }
        // Projected steepest descent: coordinates pinned at zero cannot decrease.
        let mut dir: Vec<f64> = grad
            .iter()
            .zip(&x)
            .map(|(&g, &xi)| if xi <= 0.0 && g > 0.0 { 0.0 } else { -g })
            .collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let mut moved = false;
        if norm > 0.0 && norm.is_finite() {
            dir.iter_mut().for_each(|d| *d *= rho / norm);
            let mut step = 1.0;
            while obj.budget_left() {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&dir)
                    .map(|(xi, di)| (xi + step * di).max(0.0))
                    .collect();
                let ft = obj.eval(&trial);
                if ft < fx {
                    x = trial;
                    fx = ft;
                    moved = true;
                    if step >= MAX_STEP_MULTIPLIER {
                        break;
                    }
                    step *= 2.0;
                } else {
                    break;
                }
            }
        }
        // A simplex vertex may have beaten both the incumbent and the step.
        if obj.best_v < fx {
            x.copy_from_slice(&obj.best_x);
            fx = obj.best_v;
            moved = true;
        }
        if !moved {
            rho *= 0.5;
        }
    }
    Minimum {
        x: obj.best_x,
        value: obj.best_v,
        evals: obj.evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic_interior_minimum() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 2.0 * (x[1] - 0.25).powi(2);
        let m = minimize_nonnegative(f, &[0.0, 0.0], &TrustRegion { max_evals: 5000, ..Default::default() });
        assert!((m.x[0] - 1.5).abs() < 1e-4, "{m:?}");
        assert!((m.x[1] - 0.25).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn active_bound() {
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let m = minimize_nonnegative(f, &[1.0, 1.0], &TrustRegion { max_evals: 5000, ..Default::default() });
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn never_worse_than_start_and_respects_budget() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].cos();
        for budget in [1, 2, 5, 17, 100] {
            let start = [0.4, 0.9];
            let m = minimize_nonnegative(f, &start, &TrustRegion { max_evals: budget, ..Default::default() });
            assert!(m.evals <= budget);
            assert!(m.value <= f(&start));
            assert!(m.x.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn infeasible_start_is_projected() {
        let m = minimize_nonnegative(|x: &[f64]| x[0], &[-3.0], &TrustRegion::default());
        assert_eq!(m.x, vec![0.0]);
        assert_eq!(m.value, 0.0);
    }
}
