use rand::Rng;

use super::{ExprTree, Individual, Node, Population, TreeSpace};
use crate::error::{Error, Result};
use crate::gp::BinOp;
use crate::rng::GpRng;

/// Share of terminals that are constants rather than feature references.
const CONST_TERMINAL_PROB: f64 = 0.2;
/// Chance that a non-root `grow` position stops at a terminal.
const GROW_TERMINAL_PROB: f64 = 0.5;

pub fn random_terminal(space: &TreeSpace, rng: &mut GpRng) -> Node {
    if rng.gen_bool(CONST_TERMINAL_PROB) {
        let (lo, hi) = space.const_range;
        Node::Const(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
    } else {
        Node::Feature(rng.gen_range(0..space.n_features))
    }
}

fn random_op(rng: &mut GpRng) -> BinOp {
    BinOp::ALL[rng.gen_range(0..BinOp::ALL.len())]
}

/// A tree whose every branch reaches exactly `depth` levels.
pub fn full_tree(depth: usize, space: &TreeSpace, rng: &mut GpRng) -> Node {
    if depth <= 1 {
        return random_terminal(space, rng);
    }
    let op = random_op(rng);
    let l = full_tree(depth - 1, space, rng);
    let r = full_tree(depth - 1, space, rng);
    Node::op(op, l, r)
}

/// A tree of at most `depth` levels whose branches may stop early.
///
/// With `function_root`, a tree of depth ≥ 2 always starts with an operator.
pub fn grow_tree(depth: usize, function_root: bool, space: &TreeSpace, rng: &mut GpRng) -> Node {
    fn go(depth: usize, root: bool, force: bool, space: &TreeSpace, rng: &mut GpRng) -> Node {
        if depth <= 1 || (!(root && force) && rng.gen_bool(GROW_TERMINAL_PROB)) {
            return random_terminal(space, rng);
        }
        let op = random_op(rng);
        let l = go(depth - 1, false, force, space, rng);
        let r = go(depth - 1, false, force, space, rng);
        Node::op(op, l, r)
    }
    go(depth, true, function_root, space, rng)
}

/// Ramped half-and-half initialisation.
///
/// Even-indexed individuals get `full` genes, odd-indexed ones `grow` genes.
/// Gene depths cycle through `2..=max_depth` (just `max_depth` when that
/// range is empty), offset per individual so each depth appears with both
/// methods.
pub fn init_half_and_half(
    pop_size: usize,
    k_genes: usize,
    space: &TreeSpace,
    view_id: usize,
    rng: &mut GpRng,
) -> Result<Population> {
    if pop_size < 2 {
        return Err(Error::config("pop_size", "must be at least 2"));
    }
    if k_genes == 0 {
        return Err(Error::config("genes_per_individual", "must be at least 1"));
    }
    if space.n_features == 0 {
        return Err(Error::config("n_view_features", "a view needs at least one feature"));
    }
    let ramp: Vec<usize> = if space.max_depth >= 2 {
        (2..=space.max_depth).collect()
    } else {
        vec![space.max_depth]
    };
    let individuals = (0..pop_size)
        .map(|i| {
            let genes = (0..k_genes)
                .map(|k| {
                    let depth = ramp[(i / 2 + k) % ramp.len()];
                    let root = if i % 2 == 0 {
                        full_tree(depth, space, rng)
                    } else {
                        grow_tree(depth, true, space, rng)
                    };
                    ExprTree::new(root)
                })
                .collect();
            Individual::new(genes)
        })
        .collect();
    Ok(Population {
        individuals,
        view_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize, depth: usize) -> TreeSpace {
        TreeSpace::new(n, depth, (-10.0, 10.0)).unwrap()
    }

    #[test]
    fn table_ii_shape() {
        let mut rng = GpRng::new(3);
        let pop = init_half_and_half(30, 10, &space(12, 10), 0, &mut rng).unwrap();
        assert_eq!(pop.len(), 30);
        for ind in &pop.individuals {
            assert_eq!(ind.genes.len(), 10);
            for g in &ind.genes {
                assert!(g.check(10, 12, (-10.0, 10.0)));
            }
        }
    }

    #[test]
    fn full_individuals_reach_ramped_depth() {
        let mut rng = GpRng::new(11);
        let pop = init_half_and_half(8, 3, &space(4, 5), 0, &mut rng).unwrap();
        for (i, ind) in pop.individuals.iter().enumerate().step_by(2) {
            for (k, g) in ind.genes.iter().enumerate() {
                let want = 2 + (i / 2 + k) % 4;
                assert_eq!(g.depth(), want);
                assert_eq!(g.size(), (1 << want) - 1);
            }
        }
    }

    #[test]
    fn depth_one_gives_terminals() {
        let mut rng = GpRng::new(5);
        let pop = init_half_and_half(2, 4, &space(3, 1), 0, &mut rng).unwrap();
        for ind in &pop.individuals {
            assert!(ind.genes.iter().all(|g| g.root.is_terminal()));
        }
    }

    #[test]
    fn same_seed_same_population() {
        let a = init_half_and_half(10, 5, &space(6, 6), 1, &mut GpRng::new(9)).unwrap();
        let b = init_half_and_half(10, 5, &space(6, 6), 1, &mut GpRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = GpRng::new(0);
        assert!(init_half_and_half(1, 3, &space(3, 4), 0, &mut rng).is_err());
        let bad = TreeSpace {
            n_features: 0,
            max_depth: 4,
            const_range: (-1.0, 1.0),
        };
        assert!(matches!(
            init_half_and_half(4, 3, &bad, 0, &mut rng),
            Err(Error::Config { .. })
        ));
    }
}
