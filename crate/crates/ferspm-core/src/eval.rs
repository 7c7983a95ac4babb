//! Expression labels, confusion-matrix metrics and stratified fold
//! assignment.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{subseed, SplitMix64};

pub const CLASS_COUNT: usize = 6;

/// The six basic expressions, in canonical index order. Confusion-matrix
/// rows and columns follow this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExpressionLabel {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
}

pub const ALL_LABELS: [ExpressionLabel; CLASS_COUNT] = [
    ExpressionLabel::Anger,
    ExpressionLabel::Disgust,
    ExpressionLabel::Fear,
    ExpressionLabel::Happiness,
    ExpressionLabel::Sadness,
    ExpressionLabel::Surprise,
];

impl ExpressionLabel {
    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Option<ExpressionLabel> {
        ALL_LABELS.get(i).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExpressionLabel::Anger => "anger",
            ExpressionLabel::Disgust => "disgust",
            ExpressionLabel::Fear => "fear",
            ExpressionLabel::Happiness => "happiness",
            ExpressionLabel::Sadness => "sadness",
            ExpressionLabel::Surprise => "surprise",
        }
    }

    pub fn parse_name(s: &str) -> Option<ExpressionLabel> {
        ALL_LABELS.iter().copied().find(|l| l.as_str() == s)
    }
}

/// The 15 unordered class pairs in canonical order:
/// (0,1), (0,2), ..., (4,5).
pub const PAIR_COUNT: usize = 15;

pub fn all_pairs() -> [(usize, usize); PAIR_COUNT] {
    let mut pairs = [(0usize, 0usize); PAIR_COUNT];
    let mut k = 0;
    let mut a = 0;
    while a < CLASS_COUNT {
        let mut b = a + 1;
        while b < CLASS_COUNT {
            pairs[k] = (a, b);
            k += 1;
            b += 1;
        }
        a += 1;
    }
    pairs
}

/// Index of the unordered pair (a, b) in canonical order.
pub fn pair_index(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    debug_assert!(b < CLASS_COUNT && a < b);
    // Pairs starting with a' < a come first.
    a * (2 * CLASS_COUNT - a - 1) / 2 + (b - a - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricsError {
    EmptyMatrix,
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::EmptyMatrix => write!(f, "confusion matrix has no samples"),
        }
    }
}

/// Confusion counts plus the derived per-class and macro metrics.
/// Rows are truth, columns predictions, both in canonical label order.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub counts: [[f64; CLASS_COUNT]; CLASS_COUNT],
    /// Row-normalized percentages (each row sums to 100 when non-empty).
    pub percentages: [[f64; CLASS_COUNT]; CLASS_COUNT],
    pub precision: [f64; CLASS_COUNT],
    pub recall: [f64; CLASS_COUNT],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
    pub accuracy: f64,
    pub total_samples: f64,
}

/// Macro-averaged metrics from confusion counts. Zero-denominator
/// precision/recall are 0 by convention; macro-F is the harmonic mean
/// of macro precision and macro recall.
pub fn metrics(counts: &[[f64; CLASS_COUNT]; CLASS_COUNT]) -> Result<EvaluationReport, MetricsError> {
    let total: f64 = counts.iter().flatten().sum();
    if total <= 0.0 {
        return Err(MetricsError::EmptyMatrix);
    }

    let mut percentages = [[0.0; CLASS_COUNT]; CLASS_COUNT];
    let mut precision = [0.0; CLASS_COUNT];
    let mut recall = [0.0; CLASS_COUNT];
    let mut diag_sum = 0.0;
    for c in 0..CLASS_COUNT {
        let row_sum: f64 = counts[c].iter().sum();
        let col_sum: f64 = (0..CLASS_COUNT).map(|r| counts[r][c]).sum();
        if row_sum > 0.0 {
            for p in 0..CLASS_COUNT {
                percentages[c][p] = 100.0 * counts[c][p] / row_sum;
            }
            recall[c] = counts[c][c] / row_sum;
        }
        if col_sum > 0.0 {
            precision[c] = counts[c][c] / col_sum;
        }
        diag_sum += counts[c][c];
    }

    let macro_precision = precision.iter().sum::<f64>() / CLASS_COUNT as f64;
    let macro_recall = recall.iter().sum::<f64>() / CLASS_COUNT as f64;
    let macro_f = if macro_precision + macro_recall > 0.0 {
        2.0 * macro_precision * macro_recall / (macro_precision + macro_recall)
    } else {
        0.0
    };

    Ok(EvaluationReport {
        counts: *counts,
        percentages,
        precision,
        recall,
        macro_precision,
        macro_recall,
        macro_f,
        accuracy: diag_sum / total,
        total_samples: total,
    })
}

/// Stratified fold assignment: within each class, indices are shuffled
/// with a class-specific stream of `seed` and dealt round-robin over
/// `folds`. Returns the fold of every sample.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    assert!(folds >= 2, "need at least two folds");
    let mut classes: Vec<usize> = Vec::new();
    for &label in labels {
        if !classes.contains(&label) {
            classes.push(label);
        }
    }
    classes.sort_unstable();

    let mut fold_of = vec![0usize; labels.len()];
    for &class in &classes {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = SplitMix64::new(subseed(seed, class as u64));
        rng.shuffle(&mut members);
        for (pos, &sample) in members.iter().enumerate() {
            fold_of[sample] = pos % folds;
        }
    }
    fold_of
}

/// Fraction of errors at or below each threshold on the grid
/// 0.00, 0.01, ..., 0.30.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let n = errors.len().max(1) as f64;
    (0..=30)
        .map(|i| {
            let t = i as f64 / 100.0;
            let covered = errors.iter().filter(|&&e| e <= t + 1e-12).count() as f64;
            (t, covered / n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_names_round_trip() {
        for label in ALL_LABELS {
            assert_eq!(ExpressionLabel::parse_name(label.as_str()), Some(label));
            assert_eq!(ExpressionLabel::from_index(label.index()), Some(label));
        }
        assert_eq!(ExpressionLabel::parse_name("meh"), None);
        assert_eq!(ExpressionLabel::Anger.index(), 0);
        assert_eq!(ExpressionLabel::Surprise.index(), 5);
    }

    #[test]
    fn pair_indexing_is_canonical() {
        let pairs = all_pairs();
        assert_eq!(pairs.len(), 15);
        assert_eq!(pairs[0], (0, 1));
        assert_eq!(pairs[14], (4, 5));
        for (k, &(a, b)) in pairs.iter().enumerate() {
            assert_eq!(pair_index(a, b), k);
            assert_eq!(pair_index(b, a), k);
        }
    }

    #[test]
    fn identity_confusion_gives_perfect_metrics() {
        let mut counts = [[0.0; 6]; 6];
        for c in 0..6 {
            counts[c][c] = 10.0;
        }
        let report = metrics(&counts).unwrap();
        assert_eq!(report.macro_precision, 1.0);
        assert_eq!(report.macro_recall, 1.0);
        assert_eq!(report.macro_f, 1.0);
        assert_eq!(report.accuracy, 1.0);
        for row in report.percentages {
            let sum: f64 = row.iter().sum();
            assert!((sum - 100.0).abs() < 0.01);
        }
    }

    #[test]
    fn empty_column_gives_zero_precision_without_panicking() {
        let mut counts = [[0.0; 6]; 6];
        // Nothing ever predicted as class 0; its truth rows predicted as 1.
        counts[0][1] = 5.0;
        for c in 1..6 {
            counts[c][c] = 5.0;
        }
        let report = metrics(&counts).unwrap();
        assert_eq!(report.precision[0], 0.0);
        assert_eq!(report.recall[0], 0.0);
    }

    #[test]
    fn all_zero_matrix_is_an_error() {
        let counts = [[0.0; 6]; 6];
        assert_eq!(metrics(&counts).unwrap_err(), MetricsError::EmptyMatrix);
    }

    #[test]
    fn stratified_folds_cover_every_sample_once() {
        let labels: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let folds = stratified_folds(&labels, 10, 7);
        assert_eq!(folds.len(), 60);
        // Per class, every fold gets exactly one of the ten samples.
        for class in 0..6 {
            let mut per_fold = [0usize; 10];
            for i in 0..60 {
                if labels[i] == class {
                    per_fold[folds[i]] += 1;
                }
            }
            assert!(per_fold.iter().all(|&c| c == 1), "{per_fold:?}");
        }
    }

    #[test]
    fn stratified_folds_are_deterministic_and_seed_sensitive() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        assert_eq!(stratified_folds(&labels, 5, 3), stratified_folds(&labels, 5, 3));
        assert_ne!(stratified_folds(&labels, 5, 3), stratified_folds(&labels, 5, 4));
    }

    #[test]
    fn cdf_is_nondecreasing_with_correct_steps() {
        let errors = [0.0, 0.05, 0.10, 0.10, 0.25];
        let cdf = error_cdf(&errors);
        assert_eq!(cdf.len(), 31);
        assert_eq!(cdf[0], (0.0, 0.2));
        assert!((cdf[10].1 - 0.8).abs() < 1e-12);
        assert_eq!(cdf[30].1, 1.0);
        for w in cdf.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }
}
