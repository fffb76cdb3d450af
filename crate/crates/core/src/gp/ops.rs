use rand::Rng;

use super::{grow_tree, Individual, TreeSpace};
use crate::rng::GpRng;

/// Attempts a crossover makes before falling back to the parent gene.
pub const CROSSOVER_RETRIES: usize = 10;

/// Single-gene subtree crossover.
///
/// One gene index is drawn; uniformly chosen subtrees of that gene are swapped
/// between the parents. A swap that pushes either child gene past `max_depth`
/// is redrawn, up to [`CROSSOVER_RETRIES`] attempts; if every attempt fails
/// both children keep their parents' gene. Children come back unevaluated.
pub fn subtree_crossover(
    a: &Individual,
    b: &Individual,
    max_depth: usize,
    rng: &mut GpRng,
) -> (Individual, Individual) {
    assert_eq!(
        a.genes.len(),
        b.genes.len(),
        "crossover parents must carry the same number of genes"
    );
    let mut child_a = Individual::new(a.genes.clone());
    let mut child_b = Individual::new(b.genes.clone());
    if a.genes.is_empty() {
        return (child_a, child_b);
    }
    let g = rng.gen_range(0..a.genes.len());
    let (ga, gb) = (&a.genes[g].root, &b.genes[g].root);

    for _ in 0..CROSSOVER_RETRIES {
        let ia = rng.gen_range(0..ga.size());
        let ib = rng.gen_range(0..gb.size());
        let mut na = ga.clone();
        let mut nb = gb.clone();
        let sub_b = gb.get(ib).expect("index within size").clone();
        let sub_a = na.replace(ia, sub_b).expect("index within size");
        nb.replace(ib, sub_a);
        if na.depth() <= max_depth && nb.depth() <= max_depth {
            child_a.genes[g].root = na;
            child_b.genes[g].root = nb;
            break;
        }
    }
    (child_a, child_b)
}

/// Subtree mutation: a uniformly chosen node of a uniformly chosen gene is
/// replaced by a freshly grown tree sized so the gene stays within
/// `space.max_depth`.
pub fn subtree_mutation(a: &Individual, space: &TreeSpace, rng: &mut GpRng) -> Individual {
    let mut child = Individual::new(a.genes.clone());
    if child.genes.is_empty() {
        return child;
    }
    let g = rng.gen_range(0..child.genes.len());
    let root = &mut child.genes[g].root;
    let site = rng.gen_range(0..root.size());
    let level = root.level_of(site).expect("index within size");
    let budget = (space.max_depth + 1).saturating_sub(level).max(1);
    let depth = rng.gen_range(1..=budget);
    let fresh = grow_tree(depth, false, space, rng);
    root.replace(site, fresh);
    child
}
