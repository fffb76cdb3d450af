use megp::rng::GpRng;
use megp::stats::{
    benjamini_hochberg, bonferroni, bootstrap_delta_ci, cliffs_delta, compare_to_baseline, conover_posthoc,
    effect_label, friedman_test, CompareOptions, EffectLabel, Orientation, ScoreTable, Verdict,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Average ranks (1 = smallest) of one row, ties sharing their mean position.
fn naive_ranks(row: &[f64]) -> Vec<f64> {
    row.iter()
        .map(|&v| {
            let below = row.iter().filter(|&&u| u < v).count() as f64;
            let equal = row.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn chi_f(ranks: &[Vec<f64>]) -> f64 {
    let r = ranks.len() as f64;
    let m = ranks[0].len() as f64;
    let sums: Vec<f64> = (0..ranks[0].len()).map(|j| ranks.iter().map(|row| row[j]).sum()).collect();
    let ties: f64 = ranks
        .iter()
        .map(|row| {
            let mut seen = Vec::new();
            let mut t = 0.0;
            for v in row {
                if !seen.contains(v) {
                    seen.push(*v);
                    let c = row.iter().filter(|u| *u == v).count() as f64;
                    t += c * c * c - c;
                }
            }
            t
        })
        .sum();
    let s: f64 = sums.iter().map(|s| s * s).sum();
    (12.0 / (r * m * (m + 1.0)) * s - 3.0 * r * (m + 1.0)) / (1.0 - ties / (r * m * (m * m - 1.0)))
}

fn all_permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut p in all_permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Upper-tail probability of the Friedman statistic by enumerating every
/// within-row permutation of the ranks.
fn brute_force_friedman_p(ranks: &[Vec<f64>]) -> f64 {
    let observed = chi_f(ranks);
    let perms: Vec<Vec<Vec<f64>>> = ranks.iter().map(|r| all_permutations(r)).collect();
    let mut idx = vec![0usize; ranks.len()];
    let (mut hits, mut total) = (0u64, 0u64);
    loop {
        let table: Vec<Vec<f64>> = idx.iter().enumerate().map(|(i, &k)| perms[i][k].clone()).collect();
        total += 1;
        if chi_f(&table) >= observed - 1e-9 {
            hits += 1;
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return hits as f64 / total as f64;
            }
            idx[pos] += 1;
            if idx[pos] < perms[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn friedman_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for r in 2..=4 {
        for m in 2..=4 {
            for _ in 0..3 {
                let scores = Array2::from_shape_fn((r, m), |_| rng.gen_range(0..4) as f64);
                let table = ScoreTable::new(scores.clone(), Orientation::LowerIsBetter).unwrap();
                let res = friedman_test(&table);
                let rows: Vec<Vec<f64>> = scores.rows().into_iter().map(|row| naive_ranks(&row.to_vec())).collect();
                let all_tied = rows.iter().all(|row| row.iter().all(|&v| v == row[0]));
                let oracle = if all_tied { 1.0 } else { brute_force_friedman_p(&rows) };
                if !all_tied {
                    assert!((res.statistic - chi_f(&rows)).abs() < 1e-9);
                }
                worst = worst.max((res.p_value - oracle).abs());
                assert!((res.p_value - oracle).abs() <= 0.02, "{r}x{m}: {} vs {oracle}", res.p_value);
            }
        }
    }
    eprintln!("largest deviation from enumeration: {worst:e}");
}

#[test]
fn friedman_is_invariant_under_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let scores = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-3.0..3.0f64));
        let a = friedman_test(&ScoreTable::new(scores.clone(), Orientation::LowerIsBetter).unwrap());
        let b = friedman_test(&ScoreTable::new(scores.mapv(|v| 5.0 * v.exp() + 1.0), Orientation::LowerIsBetter).unwrap());
        assert_eq!(a, b);
        let c = friedman_test(&ScoreTable::new(-&scores, Orientation::HigherIsBetter).unwrap());
        assert_eq!(a, c);
    }
}

#[test]
fn friedman_reports_the_chi_square_tail() {
    // Perfect agreement over three blocks of three models: statistic 6, tail e^-3.
    let scores = ndarray::array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
    let f = friedman_test(&ScoreTable::new(scores, Orientation::LowerIsBetter).unwrap());
    assert!((f.statistic - 6.0).abs() < 1e-12);
    assert!((f.p_asymptotic - (-3f64).exp()).abs() < 1e-12);
}

#[test]
fn conover_is_symmetric_with_unit_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scores = Array2::from_shape_fn((10, 5), |(_, j)| j as f64 * 0.3 + rng.gen_range(0.0..1.0));
    let p = conover_posthoc(&ScoreTable::new(scores, Orientation::LowerIsBetter).unwrap());
    for i in 0..5 {
        assert_eq!(p[[i, i]], 1.0);
        for j in 0..5 {
            assert_eq!(p[[i, j]], p[[j, i]]);
            assert!((0.0..=1.0).contains(&p[[i, j]]));
        }
    }
    assert!(p[[0, 4]] < p[[0, 1]]);
}

fn naive_cliff(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0i64;
    for a in x {
        for b in y {
            s += (a > b) as i64 - (a < b) as i64;
        }
    }
    s as f64 / (x.len() * y.len()) as f64
}

#[test]
fn cliff_fast_path_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let m = rng.gen_range(1..40);
        let n = rng.gen_range(1..40);
        let tied = rng.gen_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| if tied { rng.gen_range(0..5) as f64 } else { rng.gen_range(-1.0..1.0) };
        let x: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let d = cliffs_delta(&x, &y);
        assert!((d - naive_cliff(&x, &y)).abs() <= 1e-12);
        assert_eq!(d, -cliffs_delta(&y, &x));
    }
}

#[test]
fn hand_worked_corrections() {
    let p = [0.5, 0.125, 0.25];
    assert_eq!(bonferroni(&p, 3), vec![1.0, 0.375, 0.75]);
    assert_eq!(benjamini_hochberg(&p), vec![0.5, 0.375, 0.375]);
    let p = [0.25, 0.0625, 0.5];
    assert_eq!(bonferroni(&p, 3), vec![0.75, 0.1875, 1.0]);
    assert_eq!(benjamini_hochberg(&p), vec![0.375, 0.1875, 0.5]);
    assert_eq!(bonferroni(&[0.125], 4), vec![0.5]);
}

proptest! {
    #[test]
    fn bh_is_monotone_and_below_bonferroni(p in proptest::collection::vec(0.0..1.0f64, 1..20)) {
        let bh = benjamini_hochberg(&p);
        let bf = bonferroni(&p, p.len());
        for i in 0..p.len() {
            prop_assert!(bh[i] <= bf[i] + 1e-15);
            prop_assert!(bh[i] >= p[i] - 1e-15);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(bh[i] <= bh[j] + 1e-15);
                }
            }
        }
    }
}

#[test]
fn effect_labels_at_thresholds() {
    for (d, want) in [
        (0.0, EffectLabel::Negligible),
        (0.146_999, EffectLabel::Negligible),
        (0.147, EffectLabel::Small),
        (0.329_999, EffectLabel::Small),
        (0.33, EffectLabel::Medium),
        (0.473_999, EffectLabel::Medium),
        (0.474, EffectLabel::Large),
        (1.0, EffectLabel::Large),
        (-0.147, EffectLabel::Small),
        (-0.474, EffectLabel::Large),
    ] {
        assert_eq!(effect_label(d), want, "δ = {d}");
    }
}

#[test]
fn bootstrap_interval_brackets_the_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0) + 0.3).collect();
    let y: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
    let d = cliffs_delta(&x, &y);
    let (lo, hi) = bootstrap_delta_ci(&x, &y, 2000, 0.95, &mut GpRng::new(1));
    assert!(lo <= d && d <= hi && lo < hi);
    assert_eq!((lo, hi), bootstrap_delta_ci(&x, &y, 2000, 0.95, &mut GpRng::new(1)));
}

#[test]
fn clear_winner_is_a_win() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scores = Array2::from_shape_fn((20, 3), |(_, j)| rng.gen_range(0.0..0.1) + if j == 2 { 0.0 } else { 1.0 });
    let models: Vec<String> = ["BGP", "A", "B"].iter().map(|s| s.to_string()).collect();
    let table = ScoreTable::new(scores, Orientation::LowerIsBetter).unwrap();
    let opts = CompareOptions { n_boot: 500, ..Default::default() };
    let v = compare_to_baseline(&table, &models, 0, &opts).unwrap();
    let b = v.pairs.iter().find(|p| p.model == "B").unwrap();
    assert_eq!(b.delta, 1.0);
    assert_eq!(b.verdict, Verdict::Win);
    let a = v.pairs.iter().find(|p| p.model == "A").unwrap();
    assert_eq!(a.verdict, Verdict::Tie);
}
