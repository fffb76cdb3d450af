use std::fs;

use megp::harness::{
    generate_synthetic, largest_remainder, load_csv_dataset, split_dataset, stratified_counts, CsvOptions, Dataset,
    LabelColumn, SplitSpec, SyntheticSpec,
};
use ndarray::Array2;

fn synth(n: usize, f: usize, classes: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        n,
        f,
        classes,
        noise: 0.5,
        separation: 1.0,
        seed,
    })
    .unwrap()
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = synth(90, 4, 3, 1);
    ds.write_csv(&path).unwrap();
    let back = load_csv_dataset(&path, &CsvOptions::default()).unwrap();
    assert_eq!(back.x, ds.x);
    assert_eq!(back.y, ds.y);
    assert_eq!(back.class_count, 3);
    assert!(back.rejected.is_empty());
}

#[test]
fn malformed_rows_are_rejected_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "a;cls;b\n1;yes;2\n3;no;x\n4;no\n5;no;6\n7;;8\n").unwrap();
    let opts = CsvOptions {
        label: LabelColumn::Name("cls".into()),
        delimiter: ';',
        has_header: true,
    };
    let ds = load_csv_dataset(&path, &opts).unwrap();
    assert_eq!(ds.x, ndarray::array![[1.0, 2.0], [5.0, 6.0]]);
    assert_eq!(ds.y, vec![0, 1]);
    assert_eq!(ds.class_names, vec!["yes", "no"]);
    assert_eq!(ds.feature_names, vec!["a", "b"]);
    let lines: Vec<usize> = ds.rejected.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![3, 4, 6]);
}

#[test]
fn single_class_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "a,label\n1,x\n2,x\n").unwrap();
    assert!(load_csv_dataset(&path, &CsvOptions::default()).is_err());
}

#[test]
fn fractions_use_largest_remainder() {
    assert_eq!(largest_remainder(100, &[0.54, 0.13, 0.33]), vec![54, 13, 33]);
    assert_eq!(largest_remainder(7, &[0.54, 0.13, 0.33]).iter().sum::<usize>(), 7);
    for sizes in [vec![50, 50], vec![33, 33, 34], vec![3, 97], vec![10, 11, 12, 13]] {
        let counts = stratified_counts(&sizes, &[0.54, 0.13, 0.33]);
        let total: usize = sizes.iter().sum();
        let global = largest_remainder(total, &[0.54, 0.13, 0.33]);
        for s in 0..3 {
            assert_eq!(counts.iter().map(|c| c[s]).sum::<usize>(), global[s]);
        }
        for (c, size) in counts.iter().zip(&sizes) {
            assert_eq!(c.iter().sum::<usize>(), *size);
        }
    }
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let ds = synth(200, 5, 2, 3);
    let spec = SplitSpec {
        seed: 42,
        ..SplitSpec::default()
    };
    let a = split_dataset(&ds, &spec).unwrap();
    let b = split_dataset(&ds, &spec).unwrap();
    assert_eq!(a, b);
    let c = split_dataset(&ds, &SplitSpec { seed: 43, ..spec }).unwrap();
    assert_ne!(a.train.indices, c.train.indices);
    let mut all: Vec<usize> = [&a.train, &a.val, &a.test].iter().flat_map(|p| p.indices.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());
    assert_eq!((a.train.indices.len(), a.val.indices.len(), a.test.indices.len()), (108, 26, 66));
    let ones = a.train.y.labels().iter().filter(|&&l| l == 1).count();
    assert_eq!(ones, 54);
}

#[test]
fn standardisation_uses_training_rows_only() {
    // Feature 1 is a sentinel: 0 everywhere except the test rows, where it is 1000.
    let base = synth(100, 2, 2, 5);
    let spec = SplitSpec {
        seed: 1,
        ..SplitSpec::default()
    };
    let probe = split_dataset(&base, &spec).unwrap();
    let mut x: Array2<f64> = base.x.clone();
    for &i in &probe.test.indices {
        x[[i, 1]] = 1000.0;
    }
    let ds = Dataset::from_parts(x, base.y.clone(), 2).unwrap();
    let split = split_dataset(&ds, &spec).unwrap();
    let (means, _) = split.standardization.clone().unwrap();
    let train_mean: f64 = split.train.indices.iter().map(|&i| ds.x[[i, 1]]).sum::<f64>() / split.train.indices.len() as f64;
    assert_eq!(means[1], train_mean);
    assert!(means[1].abs() < 10.0);
    for col in 0..2 {
        let m = split.train.x.column(col).mean().unwrap();
        assert!(m.abs() < 1e-12);
    }
    assert!(split.test.x.column(1).iter().all(|&v| v > 100.0));
}

#[test]
fn synthetic_is_balanced_and_reproducible() {
    let a = synth(301, 6, 3, 9);
    assert_eq!(a.x, synth(301, 6, 3, 9).x);
    assert_ne!(a.x, synth(301, 6, 3, 10).x);
    let counts: Vec<usize> = (0..3).map(|c| a.y.iter().filter(|&&l| l == c).count()).collect();
    assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    assert!(generate_synthetic(&SyntheticSpec {
        n: 15,
        f: 2,
        classes: 2,
        noise: 0.1,
        separation: 1.0,
        seed: 0
    })
    .is_err());
}

#[test]
fn noiseless_blobs_are_linearly_separable() {
    let ds = generate_synthetic(&SyntheticSpec {
        n: 100,
        f: 5,
        classes: 2,
        noise: 0.0,
        separation: 1.0,
        seed: 0,
    })
    .unwrap();
    // Projecting on the class-1 mean direction separates the classes.
    let dir: Vec<f64> = (0..5)
        .map(|j| {
            let m1: f64 = ds.y.iter().zip(ds.x.rows()).filter(|(l, _)| **l == 1).map(|(_, r)| r[j]).sum();
            m1.signum()
        })
        .collect();
    let scores: Vec<f64> = ds.x.rows().into_iter().map(|r| r.iter().zip(&dir).map(|(a, b)| a * b).sum()).collect();
    let positive: Vec<bool> = ds.y.iter().map(|&l| l == 1).collect();
    assert_eq!(megp::metrics::binary_auc(&scores, &positive), Some(1.0));
}
