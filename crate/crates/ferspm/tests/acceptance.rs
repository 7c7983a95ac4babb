#![allow(clippy::needless_range_loop)]

//! Acceptance suite: one test per release criterion, each printing a
//! PASS line when its assertions hold. Run with
//! `cargo test -p ferspm --test acceptance` (add `-- --nocapture` to
//! see the lines).

use std::path::Path;
use std::time::Instant;

use ferspm::manifest::read_manifest;
use ferspm::model_file::{load_model, model_to_string, parse_model, save_model};
use ferspm::pipeline::{
    cross_validate, evaluate_features, preprocess_manifest, train_from_features, PipelineConfig,
};
use ferspm::synth::{fixture_cascades, write_fixture_set};
use ferspm_core::eval::{all_pairs, metrics, pair_index, CLASS_COUNT};
use ferspm_core::features::{
    bin_index, histogram, lbp_map, uniformity, LbpVariant, PatchFeatureSet,
};
use ferspm_core::imaging::{integral, otsu_threshold, GrayImage, Rect};
use ferspm_core::landmarks::{Landmark, LandmarkSet, Point, POINT_NAMES};
use ferspm_core::linalg::{determinant, norm, Mat};
use ferspm_core::patches::PATCH_COUNT;
use ferspm_core::rng::{subseed, SplitMix64};
use ferspm_core::saliency::score_pair_patch;
use ferspm_core::subspace::{between_scatter, lda_fit, regularized_within_scatter};
use ferspm_core::svm::{kkt_violation, oao_predict, oao_train, svm_train, OaoConfig, SvmParams};

fn random_image(rng: &mut SplitMix64, w: usize, h: usize) -> GrayImage {
    let pixels = (0..w * h).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
    GrayImage::new(w, h, pixels).unwrap()
}

fn pass(criterion: u32, what: &str) {
    println!("ACCEPTANCE {criterion:2}: PASS - {what}");
}

/// Criterion 1: LBP maps equal a naive per-pixel oracle on 200 random
/// images; u2 and riu2 histogram widths are 59 and 10.
#[test]
fn criterion_01_lbp_oracle_equivalence() {
    let start = Instant::now();
    let offsets: [(i32, i32); 8] =
        [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    let mut rng = SplitMix64::new(0xACCE01);
    for _ in 0..200 {
        let img = random_image(&mut rng, 16, 16);
        let map = lbp_map(&img).unwrap();
        for y in 1..15usize {
            for x in 1..15usize {
                let c = img.get(x, y);
                let mut expected = 0u8;
                for (n, (dx, dy)) in offsets.iter().enumerate() {
                    let v = img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                    if v >= c {
                        expected |= 1 << n;
                    }
                }
                assert_eq!(map.get(x - 1, y - 1), expected, "mismatch at ({x},{y})");
            }
        }
        assert_eq!(histogram(&map, LbpVariant::U2).len(), 59);
        assert_eq!(histogram(&map, LbpVariant::Riu2).len(), 10);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(1, "lbp_map equals naive oracle on 200 images; 59/10 histogram bins");
}

/// Criterion 2: Otsu thresholds equal exhaustive argmax; integral-image
/// rectangle sums equal naive sums on every sub-rectangle.
#[test]
fn criterion_02_otsu_and_integral_oracles() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xACCE02);
    for _ in 0..100 {
        let img = random_image(&mut rng, 32, 32);
        let (t, _) = otsu_threshold(&img);
        // Exhaustive search over all 256 candidate levels.
        let mut best = (f64::NEG_INFINITY, 0u8);
        for cand in 0..256u16 {
            let (mut n0, mut n1, mut s0, mut s1) = (0f64, 0f64, 0f64, 0f64);
            for &p in img.pixels() {
                if (p as u16) <= cand {
                    n0 += 1.0;
                    s0 += p as f64;
                } else {
                    n1 += 1.0;
                    s1 += p as f64;
                }
            }
            if n0 == 0.0 || n1 == 0.0 {
                continue;
            }
            let d = s0 / n0 - s1 / n1;
            let var = n0 * n1 * d * d;
            if var > best.0 {
                best = (var, cand as u8);
            }
        }
        assert_eq!(t, best.1);
    }

    let img = random_image(&mut rng, 8, 8);
    let ii = integral(&img);
    for y0 in 0..8 {
        for x0 in 0..8 {
            for y1 in y0 + 1..=8 {
                for x1 in x0 + 1..=8 {
                    let mut naive = 0u64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            naive += img.get(x, y) as u64;
                        }
                    }
                    assert_eq!(ii.rect_sum(&Rect::new(x0, y0, x1 - x0, y1 - y0)), naive);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(2, "Otsu equals exhaustive argmax on 100 images; integral sums exact");
}

/// Criterion 3: uniformity ground truth and the 58/198 label partition.
#[test]
fn criterion_03_uniformity_ground_truth() {
    assert_eq!(uniformity(0b0000_0001), 2);
    assert_eq!(uniformity(0b0010_0110), 4);
    let uniform = (0..=255u8).filter(|&l| uniformity(l) <= 2).count();
    assert_eq!(uniform, 58);
    assert_eq!(256 - uniform, 198);
    // And the u2 binning respects the partition.
    for label in 0..=255u8 {
        let bin = bin_index(label, LbpVariant::U2);
        if uniformity(label) <= 2 {
            assert!(bin < 58);
        } else {
            assert_eq!(bin, 58);
        }
    }
    pass(3, "U(00000001)=2, U(00100110)=4; 58 uniform + 198 non-uniform labels");
}

/// Criterion 4: LDA axis recovery, generalized-eigen residual and
/// Fisher-quotient optimality against 100 random projections.
#[test]
fn criterion_04_lda_correctness() {
    let mut rng = SplitMix64::new(0xACCE04);
    let n = 6000;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let cx = if class == 0 { 0.0 } else { 8.0 };
        rows.push(vec![cx + rng.next_gaussian(), rng.next_gaussian()]);
        y.push(class);
    }
    let x = Mat::from_rows(&rows);
    let model = lda_fit(&x, &y).unwrap();
    let phi = model.projection.col(0);
    let cos = phi[0].abs() / norm(&phi);
    assert!(cos >= 0.999, "|cos| = {cos}");

    let classes = vec![0, 1];
    let sb = between_scatter(&x, &y, &classes);
    let sw = regularized_within_scatter(&x, &y);
    for k in 0..model.projection.cols() {
        let col = model.projection.col(k);
        let lambda = model.eigenvalues[k];
        let lhs = sb.mul_vec(&col);
        let rhs = sw.mul_vec(&col);
        let resid: f64 =
            lhs.iter().zip(&rhs).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = lhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid <= 1e-6 * scale, "residual {resid} vs scale {scale}");
    }

    let quotient = |proj: &Mat| -> f64 {
        let pt = proj.transpose();
        determinant(&pt.matmul(&sb).matmul(proj)).unwrap()
            / determinant(&pt.matmul(&sw).matmul(proj)).unwrap()
    };
    let q_lda = quotient(&model.projection);
    for _ in 0..100 {
        let mut random = Mat::zeros(2, model.projection.cols());
        for c in 0..random.cols() {
            for r in 0..2 {
                random.set(r, c, rng.next_gaussian());
            }
        }
        assert!(q_lda >= quotient(&random) - 1e-9);
    }
    pass(4, "LDA axis |cos| >= 0.999; eigen residual <= 1e-6; Fisher quotient maximal");
}

/// Criterion 5: XOR fit, separable-blob training accuracy with KKT
/// conditions, and dual feasibility on every fit.
#[test]
fn criterion_05_svm_correctness() {
    // XOR.
    let x = Mat::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
    ]);
    let y = vec![1.0, 1.0, -1.0, -1.0];
    let params = SvmParams { c: 100.0, gamma: 1.0, ..Default::default() };
    let model = svm_train(&x, &y, &params).unwrap();
    for i in 0..4 {
        assert!(model.decision(x.row(i)).unwrap() * y[i] > 0.0, "XOR point {i}");
    }

    // Separable blobs across several seeds; dual feasibility is checked
    // inside svm_train on every fit (an infeasible dual is an error).
    let mut rng = SplitMix64::new(0xACCE05);
    for _round in 0..5 {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let cx = if label > 0.0 { 0.0 } else { 6.0 };
            rows.push(vec![cx + rng.next_gaussian() * 0.5, rng.next_gaussian() * 0.5]);
            labels.push(label);
        }
        let x = Mat::from_rows(&rows);
        let params = SvmParams { c: 10.0, gamma: 0.5, ..Default::default() };
        let model = svm_train(&x, &labels, &params).unwrap();
        for i in 0..x.rows() {
            let margin = labels[i] * model.decision(x.row(i)).unwrap();
            assert!(margin > 0.0, "training point {i} misclassified");
        }
        // Every support coefficient obeys the box constraint and the
        // coefficients balance.
        let balance: f64 = model.coefficients.iter().sum();
        assert!(balance.abs() <= 1e-6, "sum(alpha*y) = {balance}");
        for &coef in &model.coefficients {
            assert!(coef.abs() <= params.c + 1e-9);
        }
        // All KKT conditions on the training set within 1e-3. A point's
        // alpha is recovered by locating its row among the (copied)
        // support vectors; absent rows have alpha = 0.
        let alpha_of = |i: usize| -> f64 {
            (0..model.support_vectors.rows())
                .find(|&r| model.support_vectors.row(r) == x.row(i))
                .map(|r| model.coefficients[r].abs())
                .unwrap_or(0.0)
        };
        let worst = kkt_violation(&model, &x, &labels, alpha_of);
        assert!(worst <= 1e-3 + 1e-9, "KKT violation {worst}");
    }
    pass(5, "XOR fit exactly; blobs at 100% training accuracy with KKT within 1e-3");
}

fn separable_six_class_set(rng: &mut SplitMix64, per_class: usize) -> PatchFeatureSet {
    // Same shape the image pipeline produces: 4 blocks x 16 bins.
    let dim = 4 * LbpVariant::Bins16.bins();
    let n = per_class * CLASS_COUNT;
    let labels: Vec<usize> = (0..n).map(|i| i % CLASS_COUNT).collect();
    let mut per_patch = Vec::new();
    for patch in 0..PATCH_COUNT {
        let mut m = Mat::zeros(n, dim);
        for r in 0..n {
            for c in 0..dim {
                let mean = (labels[r] * (c + patch + 1) % 7) as f64 * 3.0;
                m.set(r, c, mean + rng.next_gaussian() * 0.3);
            }
        }
        per_patch.push(m);
    }
    PatchFeatureSet { per_patch, labels, variant: LbpVariant::Bins16 }
}

/// Criterion 6: OAO structure: 15 classifiers, votes summing to 15,
/// storage-order invariance.
#[test]
fn criterion_06_oao_structure() {
    let mut rng = SplitMix64::new(0xACCE06);
    let set = separable_six_class_set(&mut rng, 8);
    let selection = ferspm_core::saliency::SalientSelection::all_patches();
    let config = OaoConfig { seed: 3, ..Default::default() };
    let ensemble = oao_train(&set, &selection, &config).unwrap();
    assert_eq!(ensemble.pairs.len(), 15);
    for (a, b) in all_pairs() {
        assert_eq!(
            ensemble.pairs.iter().filter(|p| p.class_a == a && p.class_b == b).count(),
            1,
            "pair ({a},{b})"
        );
    }

    let mut permuted = ensemble.clone();
    permuted.pairs.reverse();
    permuted.pairs.swap(2, 9);
    for i in 0..set.n_samples() {
        let probe = set.face_rows(i);
        let (label, votes) = oao_predict(&ensemble, &probe).unwrap();
        assert_eq!(votes.iter().sum::<u32>(), 15);
        let (label_p, votes_p) = oao_predict(&permuted, &probe).unwrap();
        assert_eq!((label, votes), (label_p, votes_p));
    }
    pass(6, "15 classifiers; votes sum to 15; model order never changes predictions");
}

/// Criterion 7: a planted discriminative patch ranks first in its
/// pair's saliency row in at least 95% of 20 seeded trials.
#[test]
fn criterion_07_planted_saliency_recovery() {
    let start = Instant::now();
    let (class_a, class_b) = (1usize, 4usize);
    let pair = pair_index(class_a, class_b);
    let planted_patch = 9;
    let per_class = 12;
    let dim = 16;

    let mut hits = 0;
    for trial in 0..20u64 {
        let mut rng = SplitMix64::new(subseed(0xACCE07, trial));
        let n = per_class * CLASS_COUNT;
        let labels: Vec<usize> = (0..n).map(|i| i % CLASS_COUNT).collect();
        let mut per_patch = Vec::new();
        for patch in 0..PATCH_COUNT {
            let mut m = Mat::zeros(n, dim);
            for r in 0..n {
                let mean = if patch == planted_patch && labels[r] == class_b { 4.0 } else { 0.0 };
                for c in 0..dim {
                    m.set(r, c, mean + rng.next_gaussian());
                }
            }
            per_patch.push(m);
        }
        let set = PatchFeatureSet { per_patch, labels, variant: LbpVariant::Bins16 };

        let mut scores = [0.0; PATCH_COUNT];
        for (patch, slot) in scores.iter_mut().enumerate() {
            *slot = score_pair_patch(&set, pair, patch, 10, trial).unwrap();
        }
        let best = (0..PATCH_COUNT)
            .max_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap().then(j.cmp(&i)))
            .unwrap();
        if best == planted_patch {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(hits >= 19, "planted patch ranked first in only {hits}/20 trials");
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    pass(7, "planted patch ranked first in >= 95% of 20 trials");
}

/// Criterion 8: end-to-end smoke on the bundled synthetic fixture set:
/// zero landmark failures and 10-fold cross-validation macro-F >= 0.90.
#[test]
fn criterion_08_end_to_end_smoke() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join("ferspm_acceptance_fixture");
    let _ = std::fs::remove_dir_all(&dir);
    let fixture = write_fixture_set(&dir, 10, 0xACCE08).unwrap();
    let records = read_manifest(&fixture.manifest).unwrap();
    assert_eq!(records.len(), 60);

    let cascades = fixture_cascades();
    let config = PipelineConfig::default();

    // Detection and landmarks succeed on every image, nothing falls
    // back to the anthropometric table.
    let report = preprocess_manifest(&records, &cascades, &config).unwrap();
    assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
    for p in &report.processed {
        for (name, lm) in p.face.landmarks.iter() {
            assert_eq!(
                lm.source,
                ferspm_core::landmarks::Source::Detected,
                "{}: {} fell back",
                p.record.image.display(),
                name.as_str()
            );
        }
    }

    let result = cross_validate(&records, &cascades, &config, 10).unwrap();
    let elapsed = start.elapsed();
    assert!(
        result.report.macro_f >= 0.90,
        "macro-F {:.4} below 0.90",
        result.report.macro_f
    );
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass(8, "zero landmark failures; 10-fold macro-F >= 0.90 on the fixture set");
}

/// Criterion 9: feeding the published CK+ confusion percentages with
/// the class counts (41,45,53,69,56,65) through `metrics` reproduces
/// macro recall ~94.1 and macro-F ~94.39 within 0.5 points.
#[test]
fn criterion_09_metrics_reproduction() {
    let percentages: [[f64; 6]; 6] = [
        [87.8, 0.0, 0.0, 0.0, 7.32, 4.88],
        [0.0, 93.33, 0.0, 4.44, 0.0, 2.22],
        [0.0, 1.88, 94.33, 0.0, 1.88, 1.88],
        [1.44, 2.89, 0.0, 94.2, 0.0, 1.44],
        [1.78, 0.0, 0.0, 1.78, 96.42, 0.0],
        [0.0, 0.0, 0.0, 1.53, 0.0, 98.46],
    ];
    let class_counts = [41.0, 45.0, 53.0, 69.0, 56.0, 65.0];
    let mut counts = [[0.0; 6]; 6];
    for t in 0..6 {
        for p in 0..6 {
            counts[t][p] = (percentages[t][p] * class_counts[t] / 100.0).round();
        }
    }
    let report = metrics(&counts).unwrap();
    let macro_recall = 100.0 * report.macro_recall;
    let macro_f = 100.0 * report.macro_f;
    assert!((macro_recall - 94.1).abs() <= 0.5, "macro recall {macro_recall:.2}");
    assert!((macro_f - 94.39).abs() <= 0.5, "macro F {macro_f:.2}");
    pass(9, "reference confusion matrix gives macro recall ~94.1 and macro-F ~94.39");
}

/// Criterion 10: byte-identical model files from repeated seeded
/// training; save/load round-trip preserves predictions bit-for-bit.
#[test]
fn criterion_10_determinism_and_round_trip() {
    let mut rng = SplitMix64::new(0xACCE10);
    let set = separable_six_class_set(&mut rng, 6);
    let config = PipelineConfig {
        model: ferspm::model_file::ModelConfig { seed: 77, top_k: 4, ..Default::default() },
        ..Default::default()
    };

    let (model_a, _) = train_from_features(&set, &config).unwrap();
    let (model_b, _) = train_from_features(&set, &config).unwrap();
    let text_a = model_to_string(&model_a);
    assert_eq!(text_a, model_to_string(&model_b), "model files differ between runs");

    // The parallel and sequential paths agree too.
    let model_c = ferspm::pipeline::train_from_features_sequential(&set, &config).unwrap();
    assert_eq!(text_a, model_to_string(&model_c));

    let dir = std::env::temp_dir().join("ferspm_acceptance_model");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ferspm");
    save_model(&path, &model_a).unwrap();
    let loaded = load_model(&path).unwrap();
    let reparsed = parse_model(&model_to_string(&loaded), Path::new("mem")).unwrap();
    assert_eq!(loaded, reparsed);

    for i in 0..set.n_samples() {
        let probe = set.face_rows(i);
        let original = oao_predict(&model_a.ensemble, &probe).unwrap();
        let restored = oao_predict(&loaded.ensemble, &probe).unwrap();
        assert_eq!(original, restored, "prediction changed after round-trip");
    }
    // And the reloaded ensemble evaluates identically on all rows.
    let rows: Vec<usize> = (0..set.n_samples()).collect();
    assert_eq!(
        evaluate_features(&model_a, &set, &rows).unwrap(),
        evaluate_features(&loaded, &set, &rows).unwrap()
    );
    pass(10, "seeded training is byte-identical; round-trip preserves predictions");
}

/// Criterion 11 (informational): the published-benchmark comparison
/// needs the CK+/JAFFE datasets, which cannot be bundled. The workflow
/// is exercised end-to-end on synthetic data elsewhere in this suite;
/// with real data it is:
///   ferspm crossval --data ck.csv --resolution 96 --bins 16 --top-k 4
///   ferspm evaluate --model ck.ferspm --data jaffe.csv
///   ferspm saliency --data fused.csv --out table.csv
/// Reference points for that comparison: ten-fold macro-F 94.39% on
/// CK+, 91.8% overall accuracy on JAFFE, and the published per-pair
/// top-4 patch sets.
#[test]
fn criterion_11_external_dataset_comparison_is_informational() {
    println!(
        "ACCEPTANCE 11: INFO - requires user-supplied CK+/JAFFE data; \
         reported by `crossval`/`evaluate`/`saliency`, not asserted"
    );
}

/// Criterion 12: the landmark error metric is exact on identical sets
/// and uniform offsets; the CDF is non-decreasing.
#[test]
fn criterion_12_landmark_metric() {
    let truth = ferspm::synth::truth_landmarks(96);
    assert_eq!(ferspm_core::landmarks::landmark_error(&truth, &truth).unwrap(), 0.0);

    let s = truth.left_eye.point.distance(&truth.right_eye.point);
    let mut offset = truth;
    for name in POINT_NAMES {
        offset.get_mut(name).point.x += s / 10.0;
    }
    let e = ferspm_core::landmarks::landmark_error(&offset, &truth).unwrap();
    assert!((e - 0.1).abs() < 1e-12, "uniform s/10 offset gave e = {e}");

    let mut rng = SplitMix64::new(0xACCE12);
    let errors: Vec<f64> = (0..50).map(|_| rng.next_f64() * 0.4).collect();
    let cdf = ferspm_core::eval::error_cdf(&errors);
    assert_eq!(cdf.len(), 31);
    for w in cdf.windows(2) {
        assert!(w[1].1 >= w[0].1, "CDF decreased");
    }
    assert_eq!(cdf[0].0, 0.0);
    assert!((cdf[30].0 - 0.30).abs() < 1e-12);
    pass(12, "e = 0 on identity, e = 0.1 on s/10 offsets; CDF non-decreasing");
}

/// The landmark metric also matches a hand-built LandmarkSet case, so
/// the suite does not depend solely on the synthetic truth table.
#[test]
fn criterion_12_supplement_manual_set() {
    let p = |x: f64, y: f64| Landmark::detected(Point::new(x, y));
    let truth = LandmarkSet {
        left_eye: p(20.0, 30.0),
        right_eye: p(60.0, 30.0), // interpupil 40
        nose: p(40.0, 50.0),
        lip_left: p(28.0, 70.0),
        lip_right: p(52.0, 70.0),
        brow_inner_left: p(30.0, 20.0),
        brow_inner_right: p(50.0, 20.0),
    };
    let mut pred = truth;
    for name in POINT_NAMES {
        pred.get_mut(name).point.y += 4.0; // s/10 = 4
    }
    let e = ferspm_core::landmarks::landmark_error(&pred, &truth).unwrap();
    assert!((e - 0.1).abs() < 1e-12);
}

/// Sanity cross-check used while freezing criterion 9's expectations:
/// the rounded count matrix really does resolve to integers.
#[test]
fn criterion_09_supplement_counts_are_integral() {
    let percentages = [87.8f64, 93.33, 94.33, 94.2, 96.42, 98.46];
    let class_counts = [41.0f64, 45.0, 53.0, 69.0, 56.0, 65.0];
    for (pct, n) in percentages.iter().zip(&class_counts) {
        let raw: f64 = pct * n / 100.0;
        assert!(
            (raw - raw.round()).abs() < 0.01,
            "diagonal {pct}% of {n} is {raw}, not near-integral"
        );
    }
}
