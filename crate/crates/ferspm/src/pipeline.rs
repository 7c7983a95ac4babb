//! End-to-end orchestration: preprocessing a raw image into an aligned
//! face with landmarks, training the full model from a manifest,
//! prediction, stratified cross-validation, the fused multi-source
//! protocol and landmark evaluation.
//!
//! Per-image preprocessing and the per-pair scoring/training jobs are
//! independent; they run on a thread pool and results are merged in
//! input order, so every run is deterministic for a fixed seed.

use std::path::Path;
use std::sync::Mutex;

use ferspm_core::detect::{detect_eye, detect_face, detect_nose, HaarCascade, Side};
use ferspm_core::eval::{
    metrics, stratified_folds, EvaluationReport, ExpressionLabel, ALL_LABELS, CLASS_COUNT,
    PAIR_COUNT,
};
use ferspm_core::features::{face_patch_features, PatchFeatureSet};
use ferspm_core::imaging::{gaussian_blur_3x3, GrayImage};
use ferspm_core::landmarks::{
    align_face, anthropometric_fallback, detect_eyebrow_corners, detect_lip_corners,
    AlignedFace, Landmark, LandmarkParams, LandmarkSet, Point, PointName, Source,
};
use ferspm_core::patches::PATCH_COUNT;
use ferspm_core::rng::{subseed, SplitMix64};
use ferspm_core::saliency::{build_table, select, SaliencyTable, SalientSelection};
use ferspm_core::svm::{oao_predict, oao_train, train_pair, OaoConfig, OaoEnsemble};

use crate::image_io::read_image;
use crate::landmark_file::read_landmarks;
use crate::manifest::{require_all_classes, ManifestRecord};
use crate::model_file::{ExpressionModel, ModelConfig};
use crate::Error;

/// Detector models; any of them may be absent. Without a face cascade
/// the whole frame is treated as the face box (pre-cropped datasets);
/// without eye/nose cascades those landmarks fall back to the
/// anthropometric table.
#[derive(Clone, Debug, Default)]
pub struct Cascades {
    pub face: Option<HaarCascade>,
    pub eye: Option<HaarCascade>,
    pub nose: Option<HaarCascade>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub landmarks: LandmarkParams,
    pub grid_search: bool,
}

impl PipelineConfig {
    fn oao_config(&self) -> OaoConfig {
        OaoConfig {
            grid_search: self.grid_search,
            seed: self.model.seed,
            ..OaoConfig::default()
        }
    }
}

/// Full landmark chain on a raw image. With `override_landmarks`, the
/// face is still aligned by the detected (or fallback) eyes, but the
/// returned landmark set is replaced verbatim (ground-truth mode).
pub fn preprocess(
    img: &GrayImage,
    cascades: &Cascades,
    config: &PipelineConfig,
    origin: &Path,
    override_landmarks: Option<&LandmarkSet>,
) -> Result<AlignedFace, Error> {
    let resolution = config.model.resolution;
    let blurred = gaussian_blur_3x3(img);

    let face_box = match &cascades.face {
        Some(cascade) => detect_face(&blurred, cascade).ok_or_else(|| Error::NoFace(origin.to_path_buf()))?,
        None => blurred.full_rect(),
    };

    let eye_fallback = |side: Side| -> Point {
        let (fx, fy) = match side {
            Side::Left => (0.30, 0.35),
            Side::Right => (0.70, 0.35),
        };
        Point::new(
            face_box.x as f64 + fx * face_box.w as f64,
            face_box.y as f64 + fy * face_box.h as f64,
        )
    };
    let detect_one_eye = |side: Side| -> (Point, Source) {
        match &cascades.eye {
            Some(cascade) => match detect_eye(&blurred, cascade, side, &face_box) {
                Some(rect) => {
                    let (x, y) = rect.center();
                    (Point::new(x, y), Source::Detected)
                }
                None => (eye_fallback(side), Source::Fallback),
            },
            None => (eye_fallback(side), Source::Fallback),
        }
    };
    let (left_eye_orig, left_eye_src) = detect_one_eye(Side::Left);
    let (right_eye_orig, right_eye_src) = detect_one_eye(Side::Right);

    let (face_img, transform) =
        align_face(&blurred, &face_box, left_eye_orig, right_eye_orig, resolution)
            .map_err(|e| Error::Numeric(format!("{}: {e}", origin.display())))?;

    let clamp = |p: Point| -> Point {
        let hi = (resolution - 1) as f64;
        Point::new(p.x.clamp(0.0, hi), p.y.clamp(0.0, hi))
    };
    let left_eye = Landmark { point: clamp(transform.apply(left_eye_orig)), source: left_eye_src };
    let right_eye =
        Landmark { point: clamp(transform.apply(right_eye_orig)), source: right_eye_src };

    let nose = match &cascades.nose {
        Some(cascade) => match detect_nose(&blurred, cascade, &face_box) {
            Some(rect) => {
                let (x, y) = rect.center();
                Landmark::detected(clamp(transform.apply(Point::new(x, y))))
            }
            None => fallback_point(resolution, PointName::Nose),
        },
        None => fallback_point(resolution, PointName::Nose),
    };

    let (lip_left, lip_right) =
        match detect_lip_corners(&face_img, nose.point, &config.landmarks) {
            Ok((l, r)) if l.x < r.x => {
                (Landmark::detected(clamp(l)), Landmark::detected(clamp(r)))
            }
            _ => (
                fallback_point(resolution, PointName::LipLeft),
                fallback_point(resolution, PointName::LipRight),
            ),
        };

    let (brow_l, brow_r) =
        detect_eyebrow_corners(&face_img, left_eye.point, right_eye.point, &config.landmarks);
    let brow_inner_left = brow_l
        .map(|p| Landmark::detected(clamp(p)))
        .unwrap_or_else(|_| fallback_point(resolution, PointName::BrowInnerLeft));
    let brow_inner_right = brow_r
        .map(|p| Landmark::detected(clamp(p)))
        .unwrap_or_else(|_| fallback_point(resolution, PointName::BrowInnerRight));

    let landmarks = match override_landmarks {
        Some(set) => *set,
        None => LandmarkSet {
            left_eye,
            right_eye,
            nose,
            lip_left,
            lip_right,
            brow_inner_left,
            brow_inner_right,
        },
    };

    AlignedFace::new(face_img, landmarks, resolution)
        .map_err(|e| Error::Numeric(format!("{}: {e}", origin.display())))
}

fn fallback_point(resolution: usize, name: PointName) -> Landmark {
    let (_, p) = anthropometric_fallback(resolution, &[name])[0];
    Landmark::fallback(p)
}

/// One preprocessed dataset record.
pub struct ProcessedRecord {
    pub record: ManifestRecord,
    pub face: AlignedFace,
}

/// Outcome of preprocessing a whole manifest: processed faces in
/// manifest order plus per-image failures.
pub struct PreprocessReport {
    pub processed: Vec<ProcessedRecord>,
    pub failures: Vec<(ManifestRecord, String)>,
}

/// Preprocess every manifest record on a thread pool, preserving
/// manifest order. Failures are recorded, not fatal.
pub fn preprocess_manifest(
    records: &[ManifestRecord],
    cascades: &Cascades,
    config: &PipelineConfig,
) -> Result<PreprocessReport, Error> {
    let results: Vec<Result<AlignedFace, Error>> = run_jobs(records.len(), |i| {
        let record = &records[i];
        let img = read_image(&record.image)?;
        let override_set = match &record.landmarks {
            Some(path) => Some(read_landmarks(path)?),
            None => None,
        };
        preprocess(&img, cascades, config, &record.image, override_set.as_ref())
    });

    let mut processed = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(face) => processed.push(ProcessedRecord { record: record.clone(), face }),
            Err(e) => failures.push((record.clone(), e.to_string())),
        }
    }
    Ok(PreprocessReport { processed, failures })
}

/// Run `n` independent jobs on scoped threads; results come back in
/// job order regardless of scheduling.
fn run_jobs<T: Send>(n: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(n.max(1));
    if threads <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = job(i);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every job ran"))
        .collect()
}

/// Saliency table with the 15 pair rows scored concurrently.
pub fn build_table_parallel(
    set: &PatchFeatureSet,
    folds: usize,
    seed: u64,
) -> Result<SaliencyTable, Error> {
    for class in 0..CLASS_COUNT {
        if !set.labels.contains(&class) {
            return Err(Error::Data(format!(
                "dataset has no '{}' samples",
                ALL_LABELS[class].as_str()
            )));
        }
    }
    let rows: Vec<Result<[f64; PATCH_COUNT], ferspm_core::saliency::SaliencyError>> =
        run_jobs(PAIR_COUNT, |pair| {
            let mut row = [0.0; PATCH_COUNT];
            for (patch, slot) in row.iter_mut().enumerate() {
                *slot = ferspm_core::saliency::score_pair_patch(set, pair, patch, folds, seed)?;
            }
            Ok(row)
        });
    let mut scores = [[0.0; PATCH_COUNT]; PAIR_COUNT];
    for (pair, row) in rows.into_iter().enumerate() {
        scores[pair] = row?;
    }
    Ok(SaliencyTable { scores, folds, seed })
}

/// The 15 pair classifiers trained concurrently.
fn oao_train_parallel(
    set: &PatchFeatureSet,
    selection: &SalientSelection,
    config: &OaoConfig,
) -> Result<OaoEnsemble, Error> {
    let results = run_jobs(PAIR_COUNT, |k| {
        let (a, b) = ferspm_core::eval::all_pairs()[k];
        let mut ids = selection.per_pair[k].clone();
        ids.sort_unstable();
        train_pair(set, a, b, &ids, config)
    });
    let mut pairs = Vec::with_capacity(PAIR_COUNT);
    for r in results {
        pairs.push(r?);
    }
    Ok(OaoEnsemble { pairs })
}

pub struct TrainOutput {
    pub model: ExpressionModel,
    pub table: SaliencyTable,
    pub preprocess: PreprocessReport,
}

/// Block histograms need at least 3x3 blocks; round(R/9) = 5 at
/// R = 48 splits into 2-pixel blocks, so the block-feature pipeline
/// starts at the next supported resolution.
pub fn check_feature_resolution(resolution: usize) -> Result<(), Error> {
    let patch_side = ferspm_core::round_half_up(resolution as f64 / 9.0) as usize;
    if patch_side / 2 < 3 {
        return Err(Error::Data(format!(
            "resolution {resolution} gives {patch_side}-pixel patches whose 2x2 block split \
             falls below the 3x3 LBP minimum; use resolution 96, 144 or 192"
        )));
    }
    Ok(())
}

/// Full training: preprocess, saliency scoring, top-k selection, OAO
/// training.
pub fn train(
    records: &[ManifestRecord],
    cascades: &Cascades,
    config: &PipelineConfig,
) -> Result<TrainOutput, Error> {
    check_feature_resolution(config.model.resolution)?;
    require_all_classes(records)?;
    let report = preprocess_manifest(records, cascades, config)?;
    let faces: Vec<AlignedFace> = report.processed.iter().map(|p| p.face.clone()).collect();
    let labels: Vec<usize> = report.processed.iter().map(|p| p.record.label.index()).collect();
    let set = PatchFeatureSet::extract(&faces, &labels, config.model.variant)?;

    let (model, table) = train_from_features(&set, config)?;
    Ok(TrainOutput { model, table, preprocess: report })
}

/// Training from already-extracted features (shared by train and the
/// cross-validation folds).
pub fn train_from_features(
    set: &PatchFeatureSet,
    config: &PipelineConfig,
) -> Result<(ExpressionModel, SaliencyTable), Error> {
    let table = build_table_parallel(set, config.model.folds, config.model.seed)?;
    let selection = select(&table, config.model.top_k);
    let ensemble = oao_train_parallel(set, &selection, &config.oao_config())?;
    let model = ExpressionModel {
        config: ModelConfig { grid_search: config.grid_search, ..config.model },
        selection,
        ensemble,
    };
    Ok((model, table))
}

/// Sequential-reference training used by determinism tests; produces
/// results identical to the parallel path.
pub fn train_from_features_sequential(
    set: &PatchFeatureSet,
    config: &PipelineConfig,
) -> Result<ExpressionModel, Error> {
    let table = build_table(set, config.model.folds, config.model.seed)?;
    let selection = select(&table, config.model.top_k);
    let ensemble = oao_train(set, &selection, &config.oao_config())?;
    Ok(ExpressionModel {
        config: ModelConfig { grid_search: config.grid_search, ..config.model },
        selection,
        ensemble,
    })
}

pub enum Prediction {
    Label { label: ExpressionLabel, votes: [u32; CLASS_COUNT] },
    NoFace,
}

/// Full inference chain on one image path.
pub fn predict(
    model: &ExpressionModel,
    cascades: &Cascades,
    image_path: &Path,
    landmark_params: &LandmarkParams,
) -> Result<Prediction, Error> {
    let img = read_image(image_path)?;
    let config = PipelineConfig {
        model: model.config,
        landmarks: *landmark_params,
        grid_search: model.config.grid_search,
    };
    let face = match preprocess(&img, cascades, &config, image_path, None) {
        Ok(face) => face,
        Err(Error::NoFace(_)) => return Ok(Prediction::NoFace),
        Err(e) => return Err(e),
    };
    let per_patch = face_patch_features(&face, model.config.variant)?;
    let (label, votes) = oao_predict(&model.ensemble, &per_patch)?;
    Ok(Prediction::Label { label: ExpressionLabel::from_index(label).unwrap(), votes })
}

/// Evaluate a trained ensemble on preprocessed features.
pub fn evaluate_features(
    model: &ExpressionModel,
    set: &PatchFeatureSet,
    rows: &[usize],
) -> Result<[[f64; CLASS_COUNT]; CLASS_COUNT], Error> {
    let mut counts = [[0.0; CLASS_COUNT]; CLASS_COUNT];
    for &row in rows {
        let per_patch = set.face_rows(row);
        let (pred, _) = oao_predict(&model.ensemble, &per_patch)?;
        counts[set.labels[row]][pred] += 1.0;
    }
    Ok(counts)
}

pub struct CrossValResult {
    pub report: EvaluationReport,
    pub preprocess: PreprocessReport,
}

/// Stratified k-fold cross-validation: every fold retrains the whole
/// pipeline (saliency selection included) on the other folds.
pub fn cross_validate(
    records: &[ManifestRecord],
    cascades: &Cascades,
    config: &PipelineConfig,
    folds: usize,
) -> Result<CrossValResult, Error> {
    check_feature_resolution(config.model.resolution)?;
    require_all_classes(records)?;
    let report = preprocess_manifest(records, cascades, config)?;
    let faces: Vec<AlignedFace> = report.processed.iter().map(|p| p.face.clone()).collect();
    let labels: Vec<usize> = report.processed.iter().map(|p| p.record.label.index()).collect();
    for label in ALL_LABELS {
        let have = labels.iter().filter(|&&l| l == label.index()).count();
        if have < folds {
            return Err(Error::Data(format!(
                "class '{}' has {have} usable samples, fewer than {folds} folds; reduce --folds",
                label.as_str()
            )));
        }
    }
    let set = PatchFeatureSet::extract(&faces, &labels, config.model.variant)?;

    let fold_of = stratified_folds(&labels, folds, subseed(config.model.seed, 0xF01D));
    let mut counts = [[0.0; CLASS_COUNT]; CLASS_COUNT];
    for fold in 0..folds {
        let train_rows: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != fold).collect();
        let test_rows: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
        if test_rows.is_empty() {
            continue;
        }
        let train_set = set.subset(&train_rows);
        let (fold_model, _) = train_from_features(&train_set, config)?;
        let fold_counts = evaluate_features(&fold_model, &set, &test_rows)?;
        for t in 0..CLASS_COUNT {
            for p in 0..CLASS_COUNT {
                counts[t][p] += fold_counts[t][p];
            }
        }
    }
    Ok(CrossValResult { report: metrics(&counts)?, preprocess: report })
}

pub struct FusedResult {
    pub per_source: Vec<(String, EvaluationReport)>,
    pub repeats: usize,
}

/// Fused multi-source protocol: per repeat, a stratified 90/10 split
/// within every (source, class) cell; train on the pooled 90%, evaluate
/// the held-out 10% separately per source; confusion counts pool over
/// repeats.
pub fn fused_protocol(
    records: &[ManifestRecord],
    cascades: &Cascades,
    config: &PipelineConfig,
    repeats: usize,
) -> Result<FusedResult, Error> {
    let mut sources: Vec<String> = Vec::new();
    for r in records {
        if !sources.contains(&r.source) {
            sources.push(r.source.clone());
        }
    }
    if sources.len() < 2 {
        return Err(Error::Data(
            "fused protocol needs at least two sources (give each --data manifest its own source tag)"
                .into(),
        ));
    }
    check_feature_resolution(config.model.resolution)?;
    require_all_classes(records)?;

    let report = preprocess_manifest(records, cascades, config)?;
    let faces: Vec<AlignedFace> = report.processed.iter().map(|p| p.face.clone()).collect();
    let labels: Vec<usize> = report.processed.iter().map(|p| p.record.label.index()).collect();
    let set = PatchFeatureSet::extract(&faces, &labels, config.model.variant)?;

    let mut per_source_counts =
        vec![[[0.0; CLASS_COUNT]; CLASS_COUNT]; sources.len()];
    for repeat in 0..repeats {
        let mut rng =
            SplitMix64::new(subseed(config.model.seed, 0xF_u64 << 32 | repeat as u64));
        let mut train_rows = Vec::new();
        let mut test_rows: Vec<Vec<usize>> = vec![Vec::new(); sources.len()];
        for (si, source) in sources.iter().enumerate() {
            for class in 0..CLASS_COUNT {
                let mut cell: Vec<usize> = report
                    .processed
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.record.source == *source && p.record.label.index() == class)
                    .map(|(i, _)| i)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                rng.shuffle(&mut cell);
                let n_train = ((cell.len() as f64 * 0.9) as usize)
                    .max(1)
                    .min(cell.len().saturating_sub(1).max(1));
                for (pos, &row) in cell.iter().enumerate() {
                    if pos < n_train {
                        train_rows.push(row);
                    } else {
                        test_rows[si].push(row);
                    }
                }
            }
        }
        train_rows.sort_unstable();
        let train_set = set.subset(&train_rows);
        let fold_model = train_from_features(&train_set, config)?.0;
        for (si, rows) in test_rows.iter().enumerate() {
            let c = evaluate_features(&fold_model, &set, rows)?;
            for t in 0..CLASS_COUNT {
                for p in 0..CLASS_COUNT {
                    per_source_counts[si][t][p] += c[t][p];
                }
            }
        }
        let _ = repeat;
    }

    let mut per_source = Vec::new();
    for (si, source) in sources.iter().enumerate() {
        per_source.push((source.clone(), metrics(&per_source_counts[si])?));
    }
    Ok(FusedResult { per_source, repeats })
}

pub struct LandmarkEvaluation {
    /// (image path, normalized error) for every record with usable truth.
    pub errors: Vec<(std::path::PathBuf, f64)>,
    /// Records skipped and why.
    pub skipped: Vec<(std::path::PathBuf, String)>,
    /// CDF over the 0.00..0.30 grid.
    pub cdf: Vec<(f64, f64)>,
}

/// Compare detected landmarks against ground-truth files from the
/// manifest (detection mode: truth files are never used as overrides
/// here).
pub fn evaluate_landmarks(
    records: &[ManifestRecord],
    cascades: &Cascades,
    config: &PipelineConfig,
) -> Result<LandmarkEvaluation, Error> {
    let mut errors = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        let truth_path = match &record.landmarks {
            Some(p) => p.clone(),
            None => {
                skipped.push((record.image.clone(), "no ground-truth landmark file".into()));
                continue;
            }
        };
        let outcome = (|| -> Result<f64, Error> {
            let truth = read_landmarks(&truth_path)?;
            let img = read_image(&record.image)?;
            let face = preprocess(&img, cascades, config, &record.image, None)?;
            ferspm_core::landmarks::landmark_error(&face.landmarks, &truth)
                .map_err(|e| Error::Numeric(e.to_string()))
        })();
        match outcome {
            Ok(e) => errors.push((record.image.clone(), e)),
            Err(e) => skipped.push((record.image.clone(), e.to_string())),
        }
    }
    let values: Vec<f64> = errors.iter().map(|(_, e)| *e).collect();
    let cdf = ferspm_core::eval::error_cdf(&values);
    Ok(LandmarkEvaluation { errors, skipped, cdf })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_jobs_preserves_order() {
        let results = run_jobs(100, |i| i * 3);
        assert_eq!(results, (0..100).map(|i| i * 3).collect::<Vec<_>>());
    }

    #[test]
    fn run_jobs_handles_edge_sizes() {
        assert!(run_jobs(0, |i| i).is_empty());
        assert_eq!(run_jobs(1, |i| i + 7), vec![7]);
    }
}
