//! Core algorithms for salient-patch facial expression recognition.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! classical image operations, Haar-cascade detection, learning-free
//! landmark localization, LBP block-histogram features, PCA/LDA
//! projections, saliency scoring and one-against-one RBF-SVM
//! classification. File formats, image IO and the CLI live in the
//! companion `ferspm` crate.
//!
//! The crate is `no_std` (with `alloc`); all floating-point math goes
//! through `libm`.

#![no_std]
// Index-based loops are deliberate in the matrix and raster code.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod detect;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod landmarks;
pub mod linalg;
pub mod patches;
pub mod rng;
pub mod saliency;
pub mod subspace;
pub mod svm;

pub use detect::{HaarCascade, Rect};
pub use eval::{EvaluationReport, ExpressionLabel};
pub use features::{FeatureVector, LbpVariant};
pub use imaging::{BinaryImage, GrayImage, IntegralImage, Region};
pub use landmarks::{AlignedFace, Landmark, LandmarkSet, Point};
pub use patches::PatchLayout;
pub use saliency::{SaliencyTable, SalientSelection};
pub use svm::{OaoEnsemble, SvmModel};

/// Round half-up to the nearest integer (0.5 rounds toward +inf).
///
/// Used everywhere a fractional coordinate or intensity is turned into
/// an integer so results are identical across platforms.
pub fn round_half_up(x: f64) -> i64 {
    libm::floor(x + 0.5) as i64
}
