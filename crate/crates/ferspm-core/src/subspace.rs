//! PCA and LDA projections and the nearest-class-mean PCA-LDA
//! classifier used for saliency scoring.
//!
//! PCA keeps the smallest component count reaching the requested energy
//! fraction, capped so the downstream within-class scatter stays
//! invertible. When there are fewer samples than dimensions the
//! eigenproblem is solved on the Gram matrix instead of the covariance,
//! which gives identical retained eigenpairs at a fraction of the cost.
//!
//! LDA solves the generalized eigenproblem S_b phi = lambda S_w phi via
//! Cholesky of the (slightly ridged) S_w and a symmetric Jacobi solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{
    cholesky, dot, jacobi_eigh, solve_lower, solve_lower_transpose, squared_distance, Mat,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubspaceError {
    NeedTwoSamples,
    ZeroVariance,
    NeedTwoClasses,
    ClassTooSmall,
    SingularWithinScatter,
    DimensionMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for SubspaceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SubspaceError::NeedTwoSamples => write!(f, "need at least 2 samples"),
            SubspaceError::ZeroVariance => write!(f, "all samples are identical"),
            SubspaceError::NeedTwoClasses => write!(f, "need at least 2 classes"),
            SubspaceError::ClassTooSmall => write!(f, "every class needs at least 2 samples"),
            SubspaceError::SingularWithinScatter => {
                write!(f, "within-class scatter is singular even after regularization")
            }
            SubspaceError::DimensionMismatch { expected, got } => {
                write!(f, "input dimension {got}, model expects {expected}")
            }
        }
    }
}

/// Principal-component model: mean, orthonormal projection columns in
/// descending-eigenvalue order, and the retained eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d_in x d_out; columns are the components.
    pub components: Mat,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, SubspaceError> {
        if x.len() != self.input_dim() {
            return Err(SubspaceError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.components.transpose_mul_vec(&centered))
    }

    /// Map a projected vector back to input space (plus the mean).
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            for r in 0..self.input_dim() {
                out[r] += self.components.get(r, k) * zk;
            }
        }
        out
    }
}

/// Fit PCA on rows of `x`, keeping the smallest component count whose
/// cumulative eigenvalue fraction reaches `energy`, capped at `d_max`
/// (callers shrink `d_max` by their class count to keep S_w
/// invertible), the sample rank bound n-1, and the input dimension.
pub fn pca_fit(x: &Mat, energy: f64, d_max: usize) -> Result<PcaModel, SubspaceError> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 {
        return Err(SubspaceError::NeedTwoSamples);
    }

    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut centered = Mat::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            centered.set(r, c, x.get(r, c) - mean[c]);
        }
    }

    let denom = (n - 1) as f64;
    let total_var: f64 = centered.data().iter().map(|v| v * v).sum::<f64>() / denom;
    if total_var <= 1e-24 {
        return Err(SubspaceError::ZeroVariance);
    }

    // Eigenpairs of the covariance, via the Gram matrix when n < d.
    let (eigenvalues, components) = if d <= n {
        let mut cov = Mat::zeros(d, d);
        for r in 0..n {
            let row = centered.row(r);
            for i in 0..d {
                for j in i..d {
                    let v = cov.get(i, j) + row[i] * row[j] / denom;
                    cov.set(i, j, v);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov.set(i, j, cov.get(j, i));
            }
        }
        let (vals, vecs) = jacobi_eigh(&cov).expect("covariance is square");
        (vals, vecs)
    } else {
        let mut gram = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(centered.row(i), centered.row(j)) / denom;
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        let (vals, u) = jacobi_eigh(&gram).expect("gram is square");
        // Component k = X_c^T u_k / ||X_c^T u_k||; shares eigenvalue k.
        let mut vecs = Mat::zeros(d, n);
        for k in 0..n {
            let uk = u.col(k);
            let mut comp = centered.transpose_mul_vec(&uk);
            let nrm = crate::linalg::norm(&comp);
            if nrm > 1e-150 {
                for c in comp.iter_mut() {
                    *c /= nrm;
                }
            }
            let sign = sign_fix(&comp);
            for r in 0..d {
                vecs.set(r, k, comp[r] * sign);
            }
        }
        (vals, vecs)
    };

    let eigenvalues: Vec<f64> = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();

    let cap = d_max.min(n - 1).min(d).max(1);
    let target = energy.clamp(0.0, 1.0) * total_var;
    let mut keep = 0usize;
    let mut cum = 0.0;
    let tiny = 1e-12 * total_var;
    for &ev in eigenvalues.iter().take(cap) {
        if keep > 0 && (cum >= target || ev <= tiny) {
            break;
        }
        keep += 1;
        cum += ev;
    }
    let keep = keep.max(1);

    let mut proj = Mat::zeros(d, keep);
    for k in 0..keep {
        for r in 0..d {
            proj.set(r, k, components.get(r, k));
        }
    }
    Ok(PcaModel {
        mean,
        components: proj,
        eigenvalues: eigenvalues.into_iter().take(keep).collect(),
    })
}

fn sign_fix(v: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Fisher discriminant model: projection columns, per-class means in
/// the projected space, class labels and the generalized eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    /// d x r with r <= n_classes - 1.
    pub projection: Mat,
    /// n_classes x r.
    pub class_means: Mat,
    pub classes: Vec<usize>,
    pub eigenvalues: Vec<f64>,
}

impl LdaModel {
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, SubspaceError> {
        if x.len() != self.projection.rows() {
            return Err(SubspaceError::DimensionMismatch {
                expected: self.projection.rows(),
                got: x.len(),
            });
        }
        Ok(self.projection.transpose_mul_vec(x))
    }
}

/// Between-class scatter: sum_i N_i (m_i - m)(m_i - m)^T.
pub fn between_scatter(x: &Mat, y: &[usize], classes: &[usize]) -> Mat {
    let d = x.cols();
    let n = x.rows();
    let mut global = vec![0.0; d];
    for r in 0..n {
        for (g, v) in global.iter_mut().zip(x.row(r)) {
            *g += v;
        }
    }
    for g in global.iter_mut() {
        *g /= n as f64;
    }

    let mut sb = Mat::zeros(d, d);
    for &class in classes {
        let members: Vec<usize> = (0..n).filter(|&r| y[r] == class).collect();
        let ni = members.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &members {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= ni;
        }
        for i in 0..d {
            let di = mean[i] - global[i];
            for j in 0..d {
                let v = sb.get(i, j) + ni * di * (mean[j] - global[j]);
                sb.set(i, j, v);
            }
        }
    }
    sb
}

/// Within-class scatter with per-class unbiased scaling:
/// sum_i 1/(N_i - 1) sum_j (x_ij - m_i)(x_ij - m_i)^T.
pub fn within_scatter(x: &Mat, y: &[usize], classes: &[usize]) -> Mat {
    let d = x.cols();
    let n = x.rows();
    let mut sw = Mat::zeros(d, d);
    for &class in classes {
        let members: Vec<usize> = (0..n).filter(|&r| y[r] == class).collect();
        let ni = members.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &members {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= ni;
        }
        let scale = 1.0 / (ni - 1.0);
        for &r in &members {
            let row = x.row(r);
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..d {
                    let v = sw.get(i, j) + scale * di * (row[j] - mean[j]);
                    sw.set(i, j, v);
                }
            }
        }
    }
    sw
}

/// Fit LDA on (already projected) samples. Needs at least two classes
/// with two samples each.
pub fn lda_fit(xp: &Mat, y: &[usize]) -> Result<LdaModel, SubspaceError> {
    assert_eq!(xp.rows(), y.len(), "one label per sample");
    let d = xp.cols();
    let mut classes: Vec<usize> = Vec::new();
    for &label in y {
        if !classes.contains(&label) {
            classes.push(label);
        }
    }
    classes.sort_unstable();
    if classes.len() < 2 {
        return Err(SubspaceError::NeedTwoClasses);
    }
    for &class in &classes {
        if y.iter().filter(|&&l| l == class).count() < 2 {
            return Err(SubspaceError::ClassTooSmall);
        }
    }

    let sb = between_scatter(xp, y, &classes);
    let mut sw = within_scatter(xp, y, &classes);

    // Ridge proportional to the mean diagonal mass.
    let trace: f64 = (0..d).map(|i| sw.get(i, i)).sum();
    let epsilon = 1e-6 * trace / d as f64;
    for i in 0..d {
        sw.set(i, i, sw.get(i, i) + epsilon.max(1e-300));
    }

    let l = cholesky(&sw).map_err(|_| SubspaceError::SingularWithinScatter)?;

    // M = L^-1 S_b L^-T, kept symmetric explicitly.
    let mut half = Mat::zeros(d, d);
    for c in 0..d {
        let solved = solve_lower(&l, &sb.col(c));
        for r in 0..d {
            half.set(r, c, solved[r]);
        }
    }
    let half_t = half.transpose();
    let mut m = Mat::zeros(d, d);
    for c in 0..d {
        let solved = solve_lower(&l, &half_t.col(c));
        for r in 0..d {
            m.set(r, c, solved[r]);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            let s = (m.get(i, j) + m.get(j, i)) / 2.0;
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }

    let (vals, vecs) = jacobi_eigh(&m).expect("square by construction");
    let r = (classes.len() - 1).min(d);
    let mut projection = Mat::zeros(d, r);
    let mut eigenvalues = Vec::with_capacity(r);
    for k in 0..r {
        let phi = solve_lower_transpose(&l, &vecs.col(k));
        let sign = sign_fix(&phi);
        for row in 0..d {
            projection.set(row, k, phi[row] * sign);
        }
        eigenvalues.push(vals[k]);
    }

    // Class means in the discriminant space.
    let mut class_means = Mat::zeros(classes.len(), r);
    for (ci, &class) in classes.iter().enumerate() {
        let members: Vec<usize> = (0..xp.rows()).filter(|&row| y[row] == class).collect();
        let mut mean = vec![0.0; d];
        for &row in &members {
            for (mv, v) in mean.iter_mut().zip(xp.row(row)) {
                *mv += v;
            }
        }
        for mv in mean.iter_mut() {
            *mv /= members.len() as f64;
        }
        let projected = projection.transpose_mul_vec(&mean);
        for k in 0..r {
            class_means.set(ci, k, projected[k]);
        }
    }

    Ok(LdaModel { projection, class_means, classes, eigenvalues })
}

/// Ridged within-class scatter exactly as `lda_fit` solves it; the
/// generalized-eigenvector residual is defined against this matrix.
pub fn regularized_within_scatter(x: &Mat, y: &[usize]) -> Mat {
    let mut classes: Vec<usize> = Vec::new();
    for &label in y {
        if !classes.contains(&label) {
            classes.push(label);
        }
    }
    classes.sort_unstable();
    let d = x.cols();
    let mut sw = within_scatter(x, y, &classes);
    let trace: f64 = (0..d).map(|i| sw.get(i, i)).sum();
    let epsilon = 1e-6 * trace / d as f64;
    for i in 0..d {
        sw.set(i, i, sw.get(i, i) + epsilon.max(1e-300));
    }
    sw
}

/// Nearest-class-mean decision in the PCA-LDA space; ties go to the
/// lower class label.
pub fn pca_lda_classify(
    pca: &PcaModel,
    lda: &LdaModel,
    x: &[f64],
) -> Result<usize, SubspaceError> {
    let z = lda.project(&pca.project(x)?)?;
    let mut best = (f64::INFINITY, usize::MAX);
    for (ci, &class) in lda.classes.iter().enumerate() {
        let d2 = squared_distance(&z, lda.class_means.row(ci));
        if d2 < best.0 || (d2 == best.0 && class < best.1) {
            best = (d2, class);
        }
    }
    Ok(best.1)
}
