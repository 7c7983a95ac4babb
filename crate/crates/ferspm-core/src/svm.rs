//! Soft-margin binary SVM with an RBF kernel, trained by sequential
//! minimal optimization, and the one-against-one voting ensemble over
//! the 15 expression pairs.
//!
//! The SMO solver uses maximal-violating-pair working-set selection:
//! each step picks the steepest-ascent sample from the "up" set and its
//! second-order best partner from the "down" set, then solves that
//! two-variable subproblem in closed form. Selection is deterministic
//! (argmax with index tie-breaks) and the scheme converges on any
//! dataset, including contradictory labels. Pairwise updates preserve
//! the equality constraint sum(alpha_i y_i) = 0 by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::eval::{all_pairs, stratified_folds, CLASS_COUNT, PAIR_COUNT};
use crate::features::PatchFeatureSet;
use crate::linalg::{squared_distance, Mat};
use crate::rng::subseed;
use crate::saliency::SalientSelection;
use crate::subspace::{pca_fit, PcaModel, SubspaceError};

#[derive(Clone, Debug, PartialEq)]
pub enum SvmError {
    SingleClassInput,
    NonConvergence { kkt_violation: f64 },
    DimensionMismatch { expected: usize, got: usize },
    DualInfeasible { constraint: f64 },
    PairTooSmall { class_a: usize, class_b: usize },
    MissingClass(usize),
    Subspace(SubspaceError),
    Feature(crate::features::FeatureError),
}

impl From<SubspaceError> for SvmError {
    fn from(e: SubspaceError) -> Self {
        SvmError::Subspace(e)
    }
}

impl From<crate::features::FeatureError> for SvmError {
    fn from(e: crate::features::FeatureError) -> Self {
        SvmError::Feature(e)
    }
}

impl core::fmt::Display for SvmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SvmError::SingleClassInput => write!(f, "training data has a single class"),
            SvmError::NonConvergence { kkt_violation } => {
                write!(f, "SMO did not converge (KKT violation {kkt_violation:.3e})")
            }
            SvmError::DimensionMismatch { expected, got } => {
                write!(f, "input dimension {got}, model expects {expected}")
            }
            SvmError::DualInfeasible { constraint } => {
                write!(f, "dual constraint violated: |sum(alpha*y)| = {constraint:.3e}")
            }
            SvmError::PairTooSmall { class_a, class_b } => {
                write!(f, "pair ({class_a},{class_b}) needs at least 2 samples per class")
            }
            SvmError::MissingClass(c) => write!(f, "class {c} has no samples"),
            SvmError::Subspace(e) => write!(f, "{e}"),
            SvmError::Feature(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// Cap on working-set sweeps (one sweep is n_samples pair updates);
    /// 0 means 10 * n_samples sweeps.
    pub max_sweeps: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 10.0, gamma: 0.1, tol: 1e-3, max_sweeps: 0 }
    }
}

/// Trained binary RBF-SVM: support vectors, dual coefficients
/// alpha_i * y_i, bias and kernel width.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Mat,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.cols()
    }

    /// Decision value sum_i alpha_i y_i K(x_i, x) + b.
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut sum = self.bias;
        for (i, &coef) in self.coefficients.iter().enumerate() {
            let d2 = squared_distance(self.support_vectors.row(i), x);
            sum += coef * libm::exp(-self.gamma * d2);
        }
        Ok(sum)
    }
}

/// Solver state. `grad_err[i]` holds F_i - y_i with
/// F_i = sum_j alpha_j y_j K_ij (the decision value without bias); the
/// bias is recovered from the optimality window after convergence.
struct Smo<'a> {
    y: &'a [f64],
    kernel: Vec<f64>,
    alpha: Vec<f64>,
    grad_err: Vec<f64>,
    c: f64,
    tol: f64,
    n: usize,
}

impl<'a> Smo<'a> {
    fn new(x: &Mat, y: &'a [f64], params: &SvmParams) -> Smo<'a> {
        let n = x.rows();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = libm::exp(-params.gamma * squared_distance(x.row(i), x.row(j)));
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        Smo {
            y,
            kernel,
            alpha: vec![0.0; n],
            grad_err: y.iter().map(|&yi| -yi).collect(),
            c: params.c,
            tol: params.tol,
            n,
        }
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    /// alpha_i may still move "up" in the dual ascent direction.
    fn in_up(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] < self.c
        } else {
            self.alpha[i] > 0.0
        }
    }

    fn in_low(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] > 0.0
        } else {
            self.alpha[i] < self.c
        }
    }

    /// Maximal violating pair: the lowest-gradient sample in the up set
    /// against the down-set partner with the best second-order gain.
    /// None once the violation is within tolerance.
    fn select_pair(&self) -> Option<(usize, usize)> {
        let mut i_best: Option<usize> = None;
        for t in 0..self.n {
            if self.in_up(t) && i_best.is_none_or(|i| self.grad_err[t] < self.grad_err[i]) {
                i_best = Some(t);
            }
        }
        let i = i_best?;
        let e_i = self.grad_err[i];

        let mut max_low = f64::NEG_INFINITY;
        for t in 0..self.n {
            if self.in_low(t) {
                max_low = max_low.max(self.grad_err[t]);
            }
        }
        if max_low - e_i <= self.tol {
            return None;
        }

        let kii = self.k(i, i);
        let mut j_best: Option<(f64, usize)> = None;
        for t in 0..self.n {
            if t == i || !self.in_low(t) {
                continue;
            }
            let diff = self.grad_err[t] - e_i;
            if diff <= 0.0 {
                continue;
            }
            let curvature = (kii + self.k(t, t) - 2.0 * self.k(i, t)).max(1e-12);
            let gain = diff * diff / curvature;
            if j_best.is_none_or(|(g, _)| gain > g) {
                j_best = Some((gain, t));
            }
        }
        j_best.map(|(_, j)| (i, j))
    }

    /// Current maximal violation (for the non-convergence report).
    fn violation(&self) -> f64 {
        let mut min_up = f64::INFINITY;
        let mut max_low = f64::NEG_INFINITY;
        for t in 0..self.n {
            if self.in_up(t) {
                min_up = min_up.min(self.grad_err[t]);
            }
            if self.in_low(t) {
                max_low = max_low.max(self.grad_err[t]);
            }
        }
        (max_low - min_up).max(0.0)
    }

    /// Closed-form solve of the (i, j) subproblem. Joint clipping keeps
    /// the pair invariant (their y-weighted sum) exact and always lands
    /// clipped variables on exact bounds, so the up/low bookkeeping
    /// never sees residual dust.
    fn update_pair(&mut self, i: usize, j: usize) {
        let (ai_old, aj_old) = (self.alpha[i], self.alpha[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let c = self.c;

        let eta = (self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j)).max(1e-12);
        let delta_j = yj * (self.grad_err[i] - self.grad_err[j]) / eta;

        let mut ai;
        let mut aj;
        if yi * yj < 0.0 {
            // Different labels: alpha_i - alpha_j is invariant.
            ai = ai_old + delta_j;
            aj = aj_old + delta_j;
            let diff = ai_old - aj_old;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            // Same labels: alpha_i + alpha_j is invariant.
            ai = ai_old - delta_j;
            aj = aj_old + delta_j;
            let sum = ai_old + aj_old;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        let di = yi * (ai - ai_old);
        let dj = yj * (aj - aj_old);
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        for t in 0..self.n {
            self.grad_err[t] += di * self.k(i, t) + dj * self.k(j, t);
        }
    }

    /// Recompute the gradient cache exactly from the current alphas.
    fn refresh_gradients(&mut self) {
        for i in 0..self.n {
            let mut f = 0.0;
            for j in 0..self.n {
                if self.alpha[j] > 0.0 {
                    f += self.alpha[j] * self.y[j] * self.k(i, j);
                }
            }
            self.grad_err[i] = f - self.y[i];
        }
    }

    /// Midpoint of the optimality window [max_low, min_up] of y - F.
    fn bias(&self) -> f64 {
        let mut min_up = f64::INFINITY;
        let mut max_low = f64::NEG_INFINITY;
        for t in 0..self.n {
            if self.in_up(t) {
                min_up = min_up.min(self.grad_err[t]);
            }
            if self.in_low(t) {
                max_low = max_low.max(self.grad_err[t]);
            }
        }
        -(min_up + max_low) / 2.0
    }

    fn solve(&mut self, max_sweeps: usize) -> Result<(), SvmError> {
        let max_iterations = max_sweeps.saturating_mul(self.n).max(1);
        for _ in 0..max_iterations {
            match self.select_pair() {
                None => {
                    self.refresh_gradients();
                    return Ok(());
                }
                Some((i, j)) => self.update_pair(i, j),
            }
        }
        self.refresh_gradients();
        let violation = self.violation();
        if violation <= self.tol {
            Ok(())
        } else {
            Err(SvmError::NonConvergence { kkt_violation: violation })
        }
    }
}

/// Train a binary SVM on rows of `x` with labels in {-1, +1}.
pub fn svm_train(x: &Mat, y: &[f64], params: &SvmParams) -> Result<SvmModel, SvmError> {
    assert_eq!(x.rows(), y.len(), "one label per sample");
    let has_pos = y.iter().any(|&v| v > 0.0);
    let has_neg = y.iter().any(|&v| v < 0.0);
    if !has_pos || !has_neg {
        return Err(SvmError::SingleClassInput);
    }

    let mut smo = Smo::new(x, y, params);
    let max_sweeps = if params.max_sweeps == 0 { 10 * x.rows() } else { params.max_sweeps };
    smo.solve(max_sweeps)?;
    let bias = smo.bias();

    // Dual feasibility, checked on every fit.
    let constraint: f64 = smo.alpha.iter().zip(y).map(|(&a, &yi)| a * yi).sum();
    if constraint.abs() > 1e-6 {
        return Err(SvmError::DualInfeasible { constraint: constraint.abs() });
    }
    debug_assert!(smo.alpha.iter().all(|&a| (-1e-12..=params.c + 1e-12).contains(&a)));

    let kept: Vec<usize> = (0..x.rows()).filter(|&i| smo.alpha[i] > 0.0).collect();
    let mut support_vectors = Mat::zeros(kept.len(), x.cols());
    let mut coefficients = Vec::with_capacity(kept.len());
    for (r, &i) in kept.iter().enumerate() {
        for c in 0..x.cols() {
            support_vectors.set(r, c, x.get(i, c));
        }
        coefficients.push(smo.alpha[i] * y[i]);
    }
    Ok(SvmModel {
        support_vectors,
        coefficients,
        bias,
        gamma: params.gamma,
        c: params.c,
    })
}

/// Worst KKT violation of a model's decision function on its training
/// data; used by tests and the acceptance suite as an independent check.
pub fn kkt_violation(model: &SvmModel, x: &Mat, y: &[f64], alpha_of: impl Fn(usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.rows() {
        let margin = y[i] * model.decision(x.row(i)).expect("dims match");
        let a = alpha_of(i);
        let v = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= model.c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// One pair's classifier: the two classes it separates, the salient
/// patches and PCA defining its feature space, and the SVM itself.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    pub class_a: usize,
    pub class_b: usize,
    /// Ascending patch ids the feature vector concatenates.
    pub patch_ids: Vec<usize>,
    pub pca: PcaModel,
    pub svm: SvmModel,
}

impl PairModel {
    /// Signed decision for this pair from per-patch features of one
    /// face; positive means `class_a`.
    pub fn decision(&self, per_patch: &[Vec<f64>]) -> Result<f64, SvmError> {
        let mut x = Vec::new();
        for &id in &self.patch_ids {
            x.extend_from_slice(&per_patch[id]);
        }
        let z = self.pca.project(&x)?;
        self.svm.decision(&z)
    }
}

/// The 15 pairwise classifiers of the one-against-one scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct OaoEnsemble {
    pub pairs: Vec<PairModel>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OaoConfig {
    pub svm_c: f64,
    /// RBF width; `None` picks 1/d from the post-PCA dimension d.
    pub svm_gamma: Option<f64>,
    pub tol: f64,
    /// Grid-search (C, gamma) by inner cross-validation instead of the
    /// defaults.
    pub grid_search: bool,
    pub grid_folds: usize,
    pub pca_energy: f64,
    pub pca_dim_max: usize,
    pub seed: u64,
}

impl Default for OaoConfig {
    fn default() -> Self {
        OaoConfig {
            svm_c: 10.0,
            svm_gamma: None,
            tol: 1e-3,
            grid_search: false,
            grid_folds: 5,
            pca_energy: 0.95,
            pca_dim_max: 64,
            seed: 0,
        }
    }
}

const GRID_C: [f64; 3] = [1.0, 10.0, 100.0];
const GRID_GAMMA_SCALE: [f64; 3] = [0.5, 1.0, 2.0];

/// Train one pair classifier from the dataset's per-patch features.
pub fn train_pair(
    set: &PatchFeatureSet,
    class_a: usize,
    class_b: usize,
    patch_ids_sorted: &[usize],
    config: &OaoConfig,
) -> Result<PairModel, SvmError> {
    let rows: Vec<usize> = (0..set.labels.len())
        .filter(|&i| set.labels[i] == class_a || set.labels[i] == class_b)
        .collect();
    let n_a = rows.iter().filter(|&&i| set.labels[i] == class_a).count();
    let n_b = rows.len() - n_a;
    if n_a < 2 || n_b < 2 {
        return Err(SvmError::PairTooSmall { class_a, class_b });
    }

    let x = set.concat(patch_ids_sorted, &rows);
    let y: Vec<f64> =
        rows.iter().map(|&i| if set.labels[i] == class_a { 1.0 } else { -1.0 }).collect();

    let d_max = config.pca_dim_max.min(rows.len().saturating_sub(2)).max(1);
    let pca = pca_fit(&x, config.pca_energy, d_max)?;
    let mut projected = Mat::zeros(rows.len(), pca.output_dim());
    for (r, _) in rows.iter().enumerate() {
        let z = pca.project(x.row(r))?;
        for (c, &v) in z.iter().enumerate() {
            projected.set(r, c, v);
        }
    }

    let d = pca.output_dim() as f64;
    let pair_seed = subseed(config.seed, (class_a * CLASS_COUNT + class_b) as u64);
    let (c, gamma) = if config.grid_search {
        grid_search(&projected, &y, config, pair_seed)?
    } else {
        (config.svm_c, config.svm_gamma.unwrap_or(1.0 / d))
    };

    let params = SvmParams { c, gamma, tol: config.tol, max_sweeps: 0 };
    let svm = svm_train(&projected, &y, &params)?;
    Ok(PairModel {
        class_a,
        class_b,
        patch_ids: patch_ids_sorted.to_vec(),
        pca,
        svm,
    })
}

/// Pick (C, gamma) by stratified inner cross-validation; ties keep the
/// first candidate in enumeration order (C ascending, gamma ascending).
fn grid_search(x: &Mat, y: &[f64], config: &OaoConfig, seed: u64) -> Result<(f64, f64), SvmError> {
    let labels: Vec<usize> = y.iter().map(|&v| if v > 0.0 { 0 } else { 1 }).collect();
    let min_class = labels.iter().filter(|&&l| l == 0).count().min(
        labels.iter().filter(|&&l| l == 1).count(),
    );
    let folds = config.grid_folds.min(min_class).max(2);
    let fold_of = stratified_folds(&labels, folds, subseed(seed, 77));
    let d = x.cols() as f64;

    let mut best: Option<(usize, f64, f64)> = None;
    for &c in &GRID_C {
        for &gs in &GRID_GAMMA_SCALE {
            let gamma = gs / d;
            let mut correct = 0usize;
            for fold in 0..folds {
                let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != fold).collect();
                let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == fold).collect();
                let mut xt = Mat::zeros(train.len(), x.cols());
                let mut yt = Vec::with_capacity(train.len());
                for (r, &i) in train.iter().enumerate() {
                    for col in 0..x.cols() {
                        xt.set(r, col, x.get(i, col));
                    }
                    yt.push(y[i]);
                }
                let params = SvmParams { c, gamma, tol: config.tol, max_sweeps: 0 };
                let model = match svm_train(&xt, &yt, &params) {
                    Ok(m) => m,
                    Err(SvmError::SingleClassInput) => continue,
                    Err(e) => return Err(e),
                };
                for &i in &test {
                    let score = model.decision(x.row(i))?;
                    if (score >= 0.0) == (y[i] > 0.0) {
                        correct += 1;
                    }
                }
            }
            if best.is_none_or(|(bc, _, _)| correct > bc) {
                best = Some((correct, c, gamma));
            }
        }
    }
    let (_, c, gamma) = best.expect("grid is non-empty");
    Ok((c, gamma))
}

/// Train all 15 pair classifiers. `selection` holds each pair's salient
/// patches (any order; they are sorted ascending for feature layout).
pub fn oao_train(
    set: &PatchFeatureSet,
    selection: &SalientSelection,
    config: &OaoConfig,
) -> Result<OaoEnsemble, SvmError> {
    for class in 0..CLASS_COUNT {
        if !set.labels.contains(&class) {
            return Err(SvmError::MissingClass(class));
        }
    }
    let mut pairs = Vec::with_capacity(PAIR_COUNT);
    for (k, (a, b)) in all_pairs().into_iter().enumerate() {
        let mut ids = selection.per_pair[k].clone();
        ids.sort_unstable();
        pairs.push(train_pair(set, a, b, &ids, config)?);
    }
    Ok(OaoEnsemble { pairs })
}

/// Votes and decision margins accumulated in canonical pair order, so
/// the result is independent of model storage order.
pub fn oao_predict(
    ensemble: &OaoEnsemble,
    per_patch: &[Vec<f64>],
) -> Result<(usize, [u32; CLASS_COUNT]), SvmError> {
    let mut votes = [0u32; CLASS_COUNT];
    let mut margins = [0.0f64; CLASS_COUNT];
    for (a, b) in all_pairs() {
        let model = ensemble
            .pairs
            .iter()
            .find(|p| p.class_a == a && p.class_b == b)
            .expect("ensemble holds every pair");
        let score = model.decision(per_patch)?;
        let winner = if score >= 0.0 { a } else { b };
        votes[winner] += 1;
        margins[winner] += score.abs();
    }

    Ok((vote_argmax(&votes, &margins), votes))
}

/// Winning class: most votes, ties by larger summed |decision score|,
/// remaining ties by lower class index.
pub fn vote_argmax(votes: &[u32; CLASS_COUNT], margins: &[f64; CLASS_COUNT]) -> usize {
    let mut best = 0usize;
    for c in 1..CLASS_COUNT {
        if votes[c] > votes[best] || (votes[c] == votes[best] && margins[c] > margins[best]) {
            best = c;
        }
    }
    best
}
