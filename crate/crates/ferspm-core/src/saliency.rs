//! Saliency scoring: every patch is scored for every expression pair by
//! the stratified cross-validated accuracy of a PCA-LDA classifier on
//! that patch's block-histogram features alone. The top-k patches per
//! pair form the salient selection the pairwise SVMs train on.
//!
//! One fold partition per pair is drawn from the seed and shared across
//! all 19 patches, so patch scores within a pair are directly
//! comparable. The 15 x 19 scoring jobs are independent pure functions;
//! callers may run them concurrently and merge by (pair, patch) index.

use alloc::vec::Vec;

use crate::eval::{all_pairs, stratified_folds, CLASS_COUNT, PAIR_COUNT};
use crate::features::PatchFeatureSet;
use crate::linalg::Mat;
use crate::patches::PATCH_COUNT;
use crate::rng::subseed;
use crate::subspace::{lda_fit, pca_fit, pca_lda_classify, SubspaceError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaliencyError {
    ClassTooSmall { class: usize, have: usize },
    MissingClass(usize),
}

impl core::fmt::Display for SaliencyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SaliencyError::ClassTooSmall { class, have } => {
                write!(f, "class {class} has only {have} samples (need >= 2)")
            }
            SaliencyError::MissingClass(c) => write!(f, "class {c} has no samples"),
        }
    }
}

/// Pairwise patch scores in [0, 1]; rows follow the canonical pair
/// order, columns are P1..P19.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyTable {
    pub scores: [[f64; PATCH_COUNT]; PAIR_COUNT],
    pub folds: usize,
    pub seed: u64,
}

/// Per pair: patch ids ordered by descending score (ties to the lower
/// patch index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SalientSelection {
    pub per_pair: [Vec<usize>; PAIR_COUNT],
    pub k: usize,
}

impl SalientSelection {
    /// All 19 patches for every pair, in index order.
    pub fn all_patches() -> SalientSelection {
        let ids: Vec<usize> = (0..PATCH_COUNT).collect();
        SalientSelection { per_pair: core::array::from_fn(|_| ids.clone()), k: PATCH_COUNT }
    }
}

/// Cross-validated pairwise accuracy of one patch's features.
///
/// `x` holds only the pair's samples; `y` their labels (two distinct
/// values). Folds are reduced to the smaller class size when needed
/// (floor 2, which is also the smallest legal class size). Returns the
/// pooled accuracy and the fold count actually used.
pub fn score_patch(
    x: &Mat,
    y: &[usize],
    class_a: usize,
    class_b: usize,
    folds: usize,
    seed: u64,
) -> Result<(f64, usize), SaliencyError> {
    assert_eq!(x.rows(), y.len());
    let (lo, hi) = if class_a < class_b { (class_a, class_b) } else { (class_b, class_a) };
    let n_lo = y.iter().filter(|&&l| l == lo).count();
    let n_hi = y.iter().filter(|&&l| l == hi).count();
    for (class, have) in [(lo, n_lo), (hi, n_hi)] {
        if have < 2 {
            return Err(SaliencyError::ClassTooSmall { class, have });
        }
    }
    let folds_used = folds.min(n_lo.min(n_hi)).max(2);
    let fold_of = stratified_folds(y, folds_used, seed);

    let n = y.len();
    let mut correct = 0usize;
    for fold in 0..folds_used {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if test.is_empty() {
            continue;
        }

        let mut xt = Mat::zeros(train.len(), x.cols());
        let mut yt = Vec::with_capacity(train.len());
        for (r, &i) in train.iter().enumerate() {
            for c in 0..x.cols() {
                xt.set(r, c, x.get(i, c));
            }
            yt.push(y[i]);
        }

        // Featureless or degenerate folds fall back to predicting the
        // lower label, which keeps uninformative patches near chance.
        let predictions: Vec<usize> = match fit_fold(&xt, &yt) {
            Some((pca, lda)) => test
                .iter()
                .map(|&i| pca_lda_classify(&pca, &lda, x.row(i)).unwrap_or(lo))
                .collect(),
            None => test.iter().map(|_| lo).collect(),
        };
        for (&i, &pred) in test.iter().zip(&predictions) {
            if pred == y[i] {
                correct += 1;
            }
        }
    }
    Ok((correct as f64 / n as f64, folds_used))
}

fn fit_fold(
    xt: &Mat,
    yt: &[usize],
) -> Option<(crate::subspace::PcaModel, crate::subspace::LdaModel)> {
    let d_max = 64usize.min(xt.rows().saturating_sub(2)).max(1);
    let pca = match pca_fit(xt, 0.95, d_max) {
        Ok(p) => p,
        Err(SubspaceError::ZeroVariance) | Err(SubspaceError::NeedTwoSamples) => return None,
        Err(_) => return None,
    };
    let mut projected = Mat::zeros(xt.rows(), pca.output_dim());
    for r in 0..xt.rows() {
        let z = pca.project(xt.row(r)).ok()?;
        for (c, &v) in z.iter().enumerate() {
            projected.set(r, c, v);
        }
    }
    let lda = lda_fit(&projected, yt).ok()?;
    Some((pca, lda))
}

/// Score one (pair, patch) cell; pure and independently runnable.
pub fn score_pair_patch(
    set: &PatchFeatureSet,
    pair: usize,
    patch: usize,
    folds: usize,
    seed: u64,
) -> Result<f64, SaliencyError> {
    let (a, b) = all_pairs()[pair];
    let rows: Vec<usize> = (0..set.labels.len())
        .filter(|&i| set.labels[i] == a || set.labels[i] == b)
        .collect();
    let x = set.patch_rows(patch, &rows);
    let y: Vec<usize> = rows.iter().map(|&i| set.labels[i]).collect();
    let pair_seed = subseed(seed, pair as u64);
    score_patch(&x, &y, a, b, folds, pair_seed).map(|(score, _)| score)
}

/// Score all 15 pairs x 19 patches.
pub fn build_table(
    set: &PatchFeatureSet,
    folds: usize,
    seed: u64,
) -> Result<SaliencyTable, SaliencyError> {
    for class in 0..CLASS_COUNT {
        if !set.labels.contains(&class) {
            return Err(SaliencyError::MissingClass(class));
        }
    }
    let mut scores = [[0.0; PATCH_COUNT]; PAIR_COUNT];
    for pair in 0..PAIR_COUNT {
        for patch in 0..PATCH_COUNT {
            scores[pair][patch] = score_pair_patch(set, pair, patch, folds, seed)?;
        }
    }
    Ok(SaliencyTable { scores, folds, seed })
}

/// Top-k patches per pair, descending score, ties to the lower index.
pub fn select(table: &SaliencyTable, k: usize) -> SalientSelection {
    let k = k.clamp(1, PATCH_COUNT);
    let per_pair = core::array::from_fn(|pair| {
        let mut order: Vec<usize> = (0..PATCH_COUNT).collect();
        order.sort_by(|&i, &j| {
            table.scores[pair][j]
                .partial_cmp(&table.scores[pair][i])
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        order.truncate(k);
        order
    });
    SalientSelection { per_pair, k }
}
