//! Integration tests of the dataset pipeline on the synthetic fixture:
//! landmark overrides, the fused multi-source protocol, batch landmark
//! evaluation and the chance-level sanity check.

use ferspm::landmark_file::write_landmarks;
use ferspm::manifest::{read_manifest, ManifestRecord};
use ferspm::pipeline::{
    cross_validate, evaluate_landmarks, fused_protocol, preprocess, preprocess_manifest,
    PipelineConfig,
};
use ferspm::synth::{fixture_cascades, render_face, truth_landmarks, write_fixture_set};
use ferspm_core::eval::ExpressionLabel;
use ferspm_core::landmarks::{LandmarkSet, Point};
use ferspm_core::rng::SplitMix64;

fn workdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("ferspm_pipeline_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn landmark_override_is_verbatim() {
    let mut rng = SplitMix64::new(5);
    let (img, _) = render_face(ExpressionLabel::Disgust, &mut rng);
    let cascades = fixture_cascades();
    let config = PipelineConfig::default();

    let mut custom = truth_landmarks(96);
    custom.nose.point = Point::new(47.25, 51.5);
    custom.lip_left.point = Point::new(30.125, 72.0);

    let face = preprocess(
        &img,
        &cascades,
        &config,
        std::path::Path::new("synthetic"),
        Some(&custom),
    )
    .unwrap();
    assert_eq!(face.landmarks, custom);
}

#[test]
fn manifest_override_column_feeds_preprocessing() {
    let dir = workdir("override");
    let fixture = write_fixture_set(&dir, 1, 9).unwrap();

    // Point one record's landmark column at a custom file.
    let mut custom = truth_landmarks(96);
    custom.nose.point = Point::new(40.0, 50.0);
    let pts = dir.join("custom.pts");
    write_landmarks(&pts, &custom).unwrap();
    let manifest = dir.join("override.csv");
    std::fs::write(&manifest, "anger_000.pgm,anger,custom.pts\n").unwrap();

    let records = read_manifest(&manifest).unwrap();
    let report =
        preprocess_manifest(&records, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.processed[0].face.landmarks, custom);
    let _ = fixture;
}

#[test]
fn fused_protocol_reports_per_source() {
    let dir_a = workdir("fused_a");
    let dir_b = workdir("fused_b");
    let fixture_a = write_fixture_set(&dir_a, 5, 31).unwrap();
    let fixture_b = write_fixture_set(&dir_b, 5, 77).unwrap();

    let mut records: Vec<ManifestRecord> = Vec::new();
    for (fixture, tag) in [(&fixture_a, "alpha"), (&fixture_b, "beta")] {
        let mut batch = read_manifest(&fixture.manifest).unwrap();
        for r in batch.iter_mut() {
            r.source = tag.to_string();
        }
        records.extend(batch);
    }

    let config = PipelineConfig::default();
    let result = fused_protocol(&records, &fixture_cascades(), &config, 3).unwrap();
    assert_eq!(result.per_source.len(), 2);
    assert_eq!(result.per_source[0].0, "alpha");
    assert_eq!(result.per_source[1].0, "beta");
    // Two renderings of the same generator: both sides evaluate well
    // and near each other.
    let acc_a = result.per_source[0].1.accuracy;
    let acc_b = result.per_source[1].1.accuracy;
    assert!(acc_a >= 0.8, "alpha accuracy {acc_a}");
    assert!(acc_b >= 0.8, "beta accuracy {acc_b}");
    assert!((acc_a - acc_b).abs() <= 0.2);

    // A single source is rejected.
    for r in records.iter_mut() {
        r.source = "only".into();
    }
    assert!(fused_protocol(&records, &fixture_cascades(), &config, 2).is_err());
}

#[test]
fn landmark_evaluation_produces_small_errors_and_cdf() {
    let dir = workdir("lmeval");
    let fixture = write_fixture_set(&dir, 2, 13).unwrap();
    // Attach the truth files written next to each image.
    let mut records = read_manifest(&fixture.manifest).unwrap();
    for r in records.iter_mut() {
        r.landmarks = Some(r.image.with_extension("pts"));
    }
    let evaluation =
        evaluate_landmarks(&records, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    assert!(evaluation.skipped.is_empty(), "{:?}", evaluation.skipped);
    assert_eq!(evaluation.errors.len(), 12);
    for (path, e) in &evaluation.errors {
        assert!(*e < 0.25, "{}: e = {e}", path.display());
    }
    for w in evaluation.cdf.windows(2) {
        assert!(w[1].1 >= w[0].1);
    }
    // Records without truth files are skipped with a reason.
    let mut no_truth = records.clone();
    no_truth[0].landmarks = None;
    let evaluation =
        evaluate_landmarks(&no_truth, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    assert_eq!(evaluation.skipped.len(), 1);
    assert_eq!(evaluation.errors.len(), 11);
}

#[test]
fn permuted_labels_score_near_chance() {
    let dir = workdir("chance");
    let fixture = write_fixture_set(&dir, 10, 3).unwrap();
    let mut records = read_manifest(&fixture.manifest).unwrap();
    // Shuffle the labels so texture and label are unrelated.
    let mut labels: Vec<ExpressionLabel> = records.iter().map(|r| r.label).collect();
    SplitMix64::new(99).shuffle(&mut labels);
    for (r, label) in records.iter_mut().zip(labels) {
        r.label = label;
    }
    let config = PipelineConfig::default();
    let result = cross_validate(&records, &fixture_cascades(), &config, 5).unwrap();
    let macro_f = result.report.macro_f;
    assert!(
        macro_f <= 1.0 / 6.0 + 0.12,
        "permuted labels scored macro-F {macro_f:.3}, expected near chance"
    );
}

#[test]
fn resolution_48_is_rejected_with_explanation() {
    let dir = workdir("res48");
    let fixture = write_fixture_set(&dir, 2, 4).unwrap();
    let records = read_manifest(&fixture.manifest).unwrap();
    let mut config = PipelineConfig::default();
    config.model.resolution = 48;
    let err = match cross_validate(&records, &fixture_cascades(), &config, 2) {
        Err(e) => e,
        Ok(_) => panic!("resolution 48 unexpectedly succeeded"),
    };
    let message = err.to_string();
    assert!(message.contains("48"), "{message}");
    assert!(message.contains("3x3"), "{message}");
}

#[test]
fn no_face_records_are_skipped_with_reason() {
    let dir = workdir("noface");
    let fixture = write_fixture_set(&dir, 1, 6).unwrap();
    let blank = dir.join("blank.pgm");
    ferspm::pgm::write_pgm(&blank, &ferspm_core::imaging::GrayImage::filled(160, 160, 90))
        .unwrap();
    let manifest = dir.join("m.csv");
    std::fs::write(&manifest, "anger_000.pgm,anger\nblank.pgm,fear\n").unwrap();
    let records = read_manifest(&manifest).unwrap();
    let report =
        preprocess_manifest(&records, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    assert_eq!(report.processed.len(), 1);
    assert_eq!(report.failures.len(), 1);
    assert!(report.failures[0].1.contains("no face"), "{}", report.failures[0].1);
    let _ = fixture;
}

#[test]
fn preprocessed_landmarks_always_satisfy_invariants() {
    let dir = workdir("invariants");
    let fixture = write_fixture_set(&dir, 3, 19).unwrap();
    let records = read_manifest(&fixture.manifest).unwrap();
    let report =
        preprocess_manifest(&records, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    for p in &report.processed {
        p.face.landmarks.validate(96).unwrap();
    }
    // Determinism across two runs, bit for bit.
    let again =
        preprocess_manifest(&records, &fixture_cascades(), &PipelineConfig::default()).unwrap();
    for (a, b) in report.processed.iter().zip(&again.processed) {
        assert_eq!(a.face.image, b.face.image);
        assert_eq!(a.face.landmarks, b.face.landmarks);
    }
    fn assert_set_eq(a: &LandmarkSet, b: &LandmarkSet) {
        assert_eq!(a, b);
    }
    assert_set_eq(
        &report.processed[0].face.landmarks,
        &again.processed[0].face.landmarks,
    );
}
