//! Property tests over the public API.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::DMatrix;
use proptest::prelude::*;

use veintex::classify::svm::solve_binary;
use veintex::classify::{
    distance, gram_matrix, svm_train, DistanceMetric, KernelSpec, SvmParams, TrainedSvm, TrainingSet,
};
use veintex::dataset::{split_dataset, LabeledDataset, SampleRecord, SplitMode, SplitSpec};
use veintex::features::{
    build_log_gabor_bank, dwt_descriptor, lbp_descriptor, log_gabor_descriptor, lpq_descriptor,
    LogGaborParams, WaveletFilter,
};
use veintex::fusion::{apply_zscore, fit_zscore, FusedSchema};
use veintex::image::GrayImage;

fn image(size: usize, scale: f64) -> impl Strategy<Value = GrayImage> {
    prop::collection::vec(0.0..=1.0f64, size * size)
        .prop_map(move |v| GrayImage::new(size, size, v.into_iter().map(|x| x * scale).collect()).unwrap())
}

fn map_image(img: &GrayImage, f: impl Fn(f64) -> f64) -> GrayImage {
    GrayImage::new(img.width(), img.height(), img.data().iter().map(|&v| f(v)).collect()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn histogram_descriptors_ignore_affine_intensity(
        img in image(20, 0.2),
        a in 0.1..5.0f64,
        t in 0.0..=1.0f64,
    ) {
        let b = t * (1.0 - 0.2 * a);
        let moved = map_image(&img, |v| a * v + b);
        let lbp = max_diff(lbp_descriptor(&img).unwrap().values(), lbp_descriptor(&moved).unwrap().values());
        prop_assert!(lbp <= 1e-9, "lbp moved by {}", lbp);
        let lpq = max_diff(
            lpq_descriptor(&img, 7).unwrap().values(),
            lpq_descriptor(&moved, 7).unwrap().values(),
        );
        prop_assert!(lpq <= 1e-9, "lpq moved by {}", lpq);
    }

    #[test]
    fn filter_descriptors_are_homogeneous(img in image(32, 0.5)) {
        let doubled = map_image(&img, |v| 2.0 * v);
        let bank = build_log_gabor_bank(32, 32, LogGaborParams { scales: 3, ..Default::default() }).unwrap();
        let pairs = [
            (log_gabor_descriptor(&img, &bank).unwrap(), log_gabor_descriptor(&doubled, &bank).unwrap()),
            (
                dwt_descriptor(&img, &WaveletFilter::haar(), 3).unwrap(),
                dwt_descriptor(&doubled, &WaveletFilter::haar(), 3).unwrap(),
            ),
            (
                dwt_descriptor(&img, &WaveletFilter::db8(), 2).unwrap(),
                dwt_descriptor(&doubled, &WaveletFilter::db8(), 2).unwrap(),
            ),
        ];
        for (one, two) in pairs {
            for (x, y) in one.values().iter().zip(two.values()) {
                prop_assert!((2.0 * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn descriptors_are_deterministic(img in image(24, 1.0)) {
        let bank = build_log_gabor_bank(24, 24, LogGaborParams::default()).unwrap();
        prop_assert_eq!(lbp_descriptor(&img).unwrap(), lbp_descriptor(&img).unwrap());
        prop_assert_eq!(lpq_descriptor(&img, 5).unwrap(), lpq_descriptor(&img, 5).unwrap());
        prop_assert_eq!(log_gabor_descriptor(&img, &bank).unwrap(), log_gabor_descriptor(&img, &bank).unwrap());
        let f = WaveletFilter::db8();
        prop_assert_eq!(dwt_descriptor(&img, &f, 2).unwrap(), dwt_descriptor(&img, &f, 2).unwrap());
    }

    #[test]
    fn split_partitions_each_subject(
        counts in prop::collection::vec(2usize..9, 1..6),
        fraction in 0.2..0.8f64,
        seed in prop::option::of(any::<u64>()),
    ) {
        let mut records = Vec::new();
        let mut class_set = Vec::new();
        for (s, &n) in counts.iter().enumerate() {
            let subject = format!("p{s}");
            for i in 0..n {
                records.push(SampleRecord {
                    subject_id: subject.clone(),
                    sample_index: i,
                    source_path: PathBuf::from(format!("{subject}/{i}")),
                });
            }
            class_set.push(subject);
        }
        let payloads: Vec<usize> = (0..records.len()).collect();
        let ds = LabeledDataset::new(records, payloads, class_set).unwrap();
        let spec = SplitSpec { mode: SplitMode::PerSubjectFraction(fraction), shuffle_seed: seed };
        let Ok((train, test)) = split_dataset(&ds, &spec) else {
            // some subject would have an empty side
            let bad = counts.iter().any(|&n| {
                let t = (fraction * n as f64).round() as usize;
                t == 0 || t >= n
            });
            prop_assert!(bad);
            return Ok(());
        };
        let tr: BTreeSet<usize> = train.payloads().iter().copied().collect();
        let te: BTreeSet<usize> = test.payloads().iter().copied().collect();
        prop_assert!(tr.is_disjoint(&te));
        prop_assert_eq!(tr.len() + te.len(), ds.len());
        prop_assert_eq!(train.class_set(), ds.class_set());
        prop_assert_eq!(test.class_set(), ds.class_set());
        for (s, &n) in counts.iter().enumerate() {
            let subject = format!("p{s}");
            let got = train.records().iter().filter(|r| r.subject_id == subject).count();
            prop_assert_eq!(got, (fraction * n as f64).round() as usize);
        }
        prop_assert_eq!(split_dataset(&ds, &spec).unwrap(), (train, test));
    }

    #[test]
    fn distances_are_symmetric_and_bounded(
        pair in (1usize..12).prop_flat_map(|d| (
            prop::collection::vec(-5.0..5.0f64, d),
            prop::collection::vec(-5.0..5.0f64, d),
        )),
    ) {
        let (x, y) = pair;
        for metric in DistanceMetric::ALL {
            match (distance(&x, &y, metric), distance(&y, &x, metric)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                    prop_assert!(a >= 0.0);
                    if matches!(metric, DistanceMetric::Cosine | DistanceMetric::Correlation) {
                        prop_assert!(a <= 2.0 + 1e-12);
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric failure"),
            }
        }
    }

    #[test]
    fn gram_matrices_are_psd(
        points in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 4), 2..25),
        sigma in 0.1..3.0f64,
        degree in 1u32..4,
        offset in 0.0..2.0f64,
    ) {
        for spec in [KernelSpec::Rbf { sigma }, KernelSpec::Polynomial { degree, offset }] {
            let n = points.len();
            let g = gram_matrix(&points, &spec).unwrap();
            let m = DMatrix::from_row_slice(n, n, &g);
            prop_assert!((&m - m.transpose()).amax() <= 1e-12);
            let trace = m.trace();
            let min_eig = m.symmetric_eigenvalues().min();
            prop_assert!(min_eig >= -1e-8 * trace, "{:?}: min eigenvalue {} (trace {})", spec, min_eig, trace);
        }
    }

    #[test]
    fn zscore_standardizes_training_columns(
        rows in (1usize..8).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-50.0..50.0f64, d), 2..30)),
    ) {
        let p = fit_zscore(&rows).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| apply_zscore(r, &p).unwrap()).collect();
        let n = z.len() as f64;
        for j in 0..p.dim() {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            if p.dropped.contains(&j) {
                prop_assert!(col.iter().all(|&v| v == 0.0));
                continue;
            }
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!(mean.abs() <= 1e-10 && (sd - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn fused_vectors_absorb_shifts(
        rows in prop::collection::vec((prop::collection::vec(0.0..1.0f64, 3), prop::collection::vec(0.0..1.0f64, 2)), 3..12),
        shift in prop::collection::vec(-10.0..10.0f64, 5),
    ) {
        use veintex::features::{Descriptor, FeatureVector};
        let build = |s: &[f64]| -> (Vec<FeatureVector>, Vec<FeatureVector>) {
            rows.iter()
                .map(|(a, b)| {
                    let a: Vec<f64> = a.iter().zip(&s[..3]).map(|(v, d)| v + d).collect();
                    let b: Vec<f64> = b.iter().zip(&s[3..]).map(|(v, d)| v + d).collect();
                    (FeatureVector::new(Descriptor::Lpq, a).unwrap(), FeatureVector::new(Descriptor::Haar, b).unwrap())
                })
                .unzip()
        };
        let (a0, b0) = build(&[0.0; 5]);
        let (a1, b1) = build(&shift);
        let s0 = FusedSchema::fit(&[&a0, &b0]).unwrap();
        let s1 = FusedSchema::fit(&[&a1, &b1]).unwrap();
        for i in 0..rows.len() {
            let f0 = s0.fuse(&[&a0[i], &b0[i]]).unwrap();
            let f1 = s1.fuse(&[&a1[i], &b1[i]]).unwrap();
            prop_assert!(max_diff(f0.values(), f1.values()) <= 1e-9);
        }
    }
}

fn blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        x.push(vec![
            label * 1.5 + rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
        ]);
        y.push(label);
    }
    (x, y)
}

#[test]
fn svm_dual_constraints_hold() {
    for seed in 0..10 {
        let (x, y) = blobs(seed, 30);
        let k = gram_matrix(&x, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
        let params = SvmParams::default();
        let sol = solve_binary(&k, &y, &params).unwrap();
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() <= 1e-8, "seed {seed}: sum alpha y = {balance}");
        assert!(sol.alpha.iter().all(|&a| (0.0..=params.c).contains(&a)));
    }
}

fn multiclass(seed: u64) -> (TrainingSet, Vec<Vec<f64>>) {
    let (x, _) = blobs(seed, 36);
    let labels: Vec<usize> = (0..36).map(|i| i % 3).collect();
    let x: Vec<Vec<f64>> = x
        .into_iter()
        .zip(&labels)
        .map(|(v, &l)| vec![(v[0] + 3.0 * l as f64) / 4.0, v[1] / 4.0])
        .collect();
    let queries: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 16.0 - 0.5, (i as f64).sin() / 4.0]).collect();
    let set = TrainingSet::new(x, labels, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    (set, queries)
}

#[test]
fn svm_decisions_are_scale_invariant() {
    let (set, queries) = multiclass(3);
    let gamma = 7.5;
    let scaled = TrainingSet::new(
        set.vectors().iter().map(|v| v.iter().map(|x| x * gamma).collect()).collect(),
        set.labels().to_vec(),
        set.class_set().to_vec(),
    )
    .unwrap();
    let params = SvmParams::default();
    let base = svm_train(&set, KernelSpec::Rbf { sigma: 1.2 }, &params).unwrap();
    let big = svm_train(&scaled, KernelSpec::Rbf { sigma: 1.2 * gamma }, &params).unwrap();
    let spec_a = base.kernel;
    let spec_b = big.kernel;
    for q in &queries {
        let qs: Vec<f64> = q.iter().map(|x| x * gamma).collect();
        for (ma, mb) in base.machines.iter().zip(&big.machines) {
            let (fa, fb) = (ma.decision(&spec_a, q), mb.decision(&spec_b, &qs));
            assert_eq!(fa >= 0.0, fb >= 0.0, "decisions {fa} vs {fb}");
        }
        assert_eq!(base.predict(q).unwrap(), big.predict(&qs).unwrap());
    }
}

#[test]
fn svm_training_is_reproducible_and_reloadable() {
    let (set, queries) = multiclass(11);
    let params = SvmParams::default();
    let kernel = KernelSpec::Polynomial { degree: 3, offset: 1.0 };
    let a = svm_train(&set, kernel, &params).unwrap();
    let b = svm_train(&set, kernel, &params).unwrap();
    assert_eq!(a, b);
    let reloaded = TrainedSvm::from_json(&a.to_json()).unwrap();
    for q in &queries {
        for (m, r) in a.machines.iter().zip(&reloaded.machines) {
            assert_eq!(m.decision(&a.kernel, q).to_bits(), r.decision(&reloaded.kernel, q).to_bits());
        }
        assert_eq!(a.predict(q).unwrap(), reloaded.predict(q).unwrap());
    }
}
