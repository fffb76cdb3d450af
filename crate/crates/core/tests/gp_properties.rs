use megp::gp::{
    init_half_and_half, subtree_crossover, subtree_mutation, tournament_select, BinOp, ExprTree, FitnessKey,
    Individual, Node, TreeSpace, EVAL_CLAMP,
};
use megp::rng::GpRng;
use proptest::prelude::*;

fn arb_node(n_features: usize) -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0..n_features).prop_map(Node::Feature),
        prop_oneof![Just(0.0), Just(1e-12), Just(-1e-10), -1e6..1e6f64].prop_map(Node::Const),
    ];
    leaf.prop_recursive(9, 256, 2, |inner| {
        (0..4usize, inner.clone(), inner).prop_map(|(k, l, r)| Node::op(BinOp::ALL[k], l, r))
    })
}

fn arb_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(
        prop_oneof![
            Just(0.0),
            Just(f64::MAX),
            Just(f64::MIN),
            Just(1e300),
            Just(-1e-300),
            -1e3..1e3f64
        ],
        n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn evaluation_is_total(node in arb_node(4), row in arb_row(4)) {
        let v = ExprTree::new(node).eval(&row);
        prop_assert!(v.is_finite());
        prop_assert!(v.abs() <= EVAL_CLAMP);
    }

    #[test]
    fn text_round_trip(node in arb_node(3)) {
        let tree = ExprTree::new(node);
        let json = serde_json::to_string(&tree).unwrap();
        let back: ExprTree = serde_json::from_str(&json).unwrap();
        let row = [0.3, -1.7, 2.5];
        prop_assert_eq!(tree.eval(&row).to_bits(), back.eval(&row).to_bits());
        prop_assert_eq!(tree.depth(), back.depth());
    }

    #[test]
    fn variation_respects_depth(seed in any::<u64>(), depth in 2usize..=10) {
        let space = TreeSpace::new(5, depth, (-10.0, 10.0)).unwrap();
        let mut rng = GpRng::new(seed);
        let pop = init_half_and_half(6, 3, &space, 0, &mut rng).unwrap();
        for ind in &pop.individuals {
            for g in &ind.genes {
                prop_assert!(g.check(depth, 5, (-10.0, 10.0)));
            }
        }
        let (a, b) = subtree_crossover(&pop.individuals[0], &pop.individuals[1], depth, &mut rng);
        let m = subtree_mutation(&pop.individuals[2], &space, &mut rng);
        for ind in [&a, &b, &m] {
            prop_assert_eq!(ind.genes.len(), 3);
            prop_assert!(ind.max_depth() <= depth);
            prop_assert!(!ind.is_evaluated());
        }
    }
}

#[test]
fn protected_division_and_clamp() {
    let div = ExprTree::new(Node::op(BinOp::Div, Node::Feature(0), Node::Const(0.0)));
    assert_eq!(div.eval(&[5.0]), 1.0);
    let big = ExprTree::new(Node::op(BinOp::Mul, Node::Const(1e10), Node::Const(1e10)));
    assert_eq!(big.eval(&[]), EVAL_CLAMP);
    assert_eq!(ExprTree::new(Node::Feature(0)).depth(), 1);
}

#[test]
fn crossover_changes_only_one_gene() {
    let space = TreeSpace::new(4, 10, (-10.0, 10.0)).unwrap();
    let mut rng = GpRng::new(11);
    let pop = init_half_and_half(4, 5, &space, 0, &mut rng).unwrap();
    for _ in 0..50 {
        let (a, _) = subtree_crossover(&pop.individuals[0], &pop.individuals[3], 10, &mut rng);
        let changed = a
            .genes
            .iter()
            .zip(&pop.individuals[0].genes)
            .filter(|(x, y)| x != y)
            .count();
        assert!(changed <= 1);
    }
}

#[test]
fn tournament_prefers_lower_fitness() {
    let inds: Vec<Individual> = (0..20)
        .map(|i| {
            let mut ind = Individual::new(vec![ExprTree::new(Node::Const(0.0))]);
            ind.ft_iso = Some(i as f64);
            ind
        })
        .collect();
    let mut rng = GpRng::new(3);
    let n = 4000;
    let mean: f64 = (0..n)
        .map(|_| tournament_select(&inds, FitnessKey::Iso, 3, &mut rng).unwrap() as f64)
        .sum::<f64>()
        / n as f64;
    // The minimum of three uniform draws from 0..20 has mean 36100/8000 ≈ 4.51.
    assert!((mean - 4.5125).abs() < 0.3, "{mean}");
    assert!(tournament_select(&inds, FitnessKey::En, 3, &mut rng).is_err());
}
