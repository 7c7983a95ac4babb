//! LBP label maps and the five histogram variants (256/32/16 bins,
//! uniform u2, rotation-invariant riu2), plus feature-vector assembly
//! from per-patch block histograms.
//!
//! Neighbor convention: n = 0 is the east neighbor and n increases
//! counter-clockwise (east, north-east, north, ..., south-east), with
//! image y growing downward. Bit n of a label is set when that neighbor
//! is >= the center. The 32- and 16-bin groupings drop low-order bits,
//! so under this convention they keep the north-side neighbors.

use alloc::vec;
use alloc::vec::Vec;

use crate::imaging::{GrayImage, ImageError};
use crate::landmarks::AlignedFace;
use crate::linalg::Mat;
use crate::patches::{extract_patch, split_blocks, PatchLayout, PATCH_COUNT};

/// Histogram binning applied to LBP labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbpVariant {
    Bins256,
    Bins32,
    Bins16,
    /// Uniform patterns (U <= 2): 58 individual bins plus one shared
    /// non-uniform bin.
    U2,
    /// Rotation-invariant uniform: popcount for uniform patterns, 9
    /// otherwise.
    Riu2,
}

impl LbpVariant {
    pub const fn bins(&self) -> usize {
        match self {
            LbpVariant::Bins256 => 256,
            LbpVariant::Bins32 => 32,
            LbpVariant::Bins16 => 16,
            LbpVariant::U2 => 59,
            LbpVariant::Riu2 => 10,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LbpVariant::Bins256 => "bins256",
            LbpVariant::Bins32 => "bins32",
            LbpVariant::Bins16 => "bins16",
            LbpVariant::U2 => "u2",
            LbpVariant::Riu2 => "riu2",
        }
    }

    pub fn from_name(s: &str) -> Option<LbpVariant> {
        match s {
            "bins256" | "256" => Some(LbpVariant::Bins256),
            "bins32" | "32" => Some(LbpVariant::Bins32),
            "bins16" | "16" => Some(LbpVariant::Bins16),
            "u2" => Some(LbpVariant::U2),
            "riu2" => Some(LbpVariant::Riu2),
            _ => None,
        }
    }
}

/// Neighbor offsets (dx, dy) for n = 0..8: east, counter-clockwise.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 8] =
    [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// 8-bit LBP code: bit n set when neighbor n >= center.
pub fn lbp_code(center: u8, neighbors: [u8; 8]) -> u8 {
    let mut code = 0u8;
    for (n, &v) in neighbors.iter().enumerate() {
        if v >= center {
            code |= 1 << n;
        }
    }
    code
}

/// Number of circular 0-1 transitions in the 8-bit pattern.
pub fn uniformity(label: u8) -> u32 {
    (label ^ label.rotate_left(1)).count_ones()
}

const fn build_u2_table() -> [u8; 256] {
    let mut table = [58u8; 256];
    let mut rank = 0u8;
    let mut label = 0usize;
    while label < 256 {
        let l = label as u8;
        let transitions = (l ^ l.rotate_left(1)).count_ones();
        if transitions <= 2 {
            table[label] = rank;
            rank += 1;
        }
        label += 1;
    }
    table
}

/// Uniform labels in ascending order map to bins 0..58; all non-uniform
/// labels share bin 58.
static U2_TABLE: [u8; 256] = build_u2_table();

/// Map an LBP label to its histogram bin for the given variant.
pub fn bin_index(label: u8, variant: LbpVariant) -> usize {
    match variant {
        LbpVariant::Bins256 => label as usize,
        LbpVariant::Bins32 => label as usize / 8,
        LbpVariant::Bins16 => label as usize / 16,
        LbpVariant::U2 => U2_TABLE[label as usize] as usize,
        LbpVariant::Riu2 => {
            if uniformity(label) <= 2 {
                label.count_ones() as usize
            } else {
                9
            }
        }
    }
}

/// LBP labels of every interior pixel; the result is (w-2) x (h-2).
pub fn lbp_map(img: &GrayImage) -> Result<GrayImage, ImageError> {
    let w = img.width();
    let h = img.height();
    if w < 3 || h < 3 {
        return Err(ImageError::TooSmall { min_side: 3 });
    }
    let mut labels = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let center = img.get(x, y);
            let mut code = 0u8;
            for (n, &(dx, dy)) in NEIGHBOR_OFFSETS.iter().enumerate() {
                let v = img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                if v >= center {
                    code |= 1 << n;
                }
            }
            labels.push(code);
        }
    }
    GrayImage::new(w - 2, h - 2, labels)
}

/// Raw per-bin counts of a label raster.
pub fn histogram_counts(labels: &GrayImage, variant: LbpVariant) -> Vec<u32> {
    let mut counts = vec![0u32; variant.bins()];
    for &label in labels.pixels() {
        counts[bin_index(label, variant)] += 1;
    }
    counts
}

/// L1-normalized histogram (sums to 1).
pub fn histogram(labels: &GrayImage, variant: LbpVariant) -> Vec<f64> {
    let counts = histogram_counts(labels, variant);
    let total: u32 = counts.iter().sum();
    let norm = total.max(1) as f64;
    counts.into_iter().map(|c| c as f64 / norm).collect()
}

/// Concatenated block histograms for an ordered patch subset.
///
/// Layout: for each patch (ascending id), for each of its four blocks
/// (top-left, top-right, bottom-left, bottom-right), `bins` histogram
/// values. Positions are invertible through `patch_ids` / `variant`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub patch_ids: Vec<usize>,
    pub variant: LbpVariant,
}

pub const BLOCKS_PER_PATCH: usize = 4;

impl FeatureVector {
    pub const fn len_for(n_patches: usize, variant: LbpVariant) -> usize {
        n_patches * BLOCKS_PER_PATCH * variant.bins()
    }

    /// (patch id, block, bin) for a flat position.
    pub fn describe(&self, position: usize) -> (usize, usize, usize) {
        let bins = self.variant.bins();
        let per_patch = BLOCKS_PER_PATCH * bins;
        let patch = self.patch_ids[position / per_patch];
        let rem = position % per_patch;
        (patch, rem / bins, rem % bins)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureError {
    Image(ImageError),
    EmptyPatchSet,
    UnorderedPatchIds,
    PatchIdOutOfRange(usize),
}

impl From<ImageError> for FeatureError {
    fn from(e: ImageError) -> Self {
        FeatureError::Image(e)
    }
}

impl core::fmt::Display for FeatureError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FeatureError::Image(e) => write!(f, "{e}"),
            FeatureError::EmptyPatchSet => write!(f, "patch id list is empty"),
            FeatureError::UnorderedPatchIds => write!(f, "patch ids must be strictly ascending"),
            FeatureError::PatchIdOutOfRange(i) => write!(f, "patch id {i} out of range"),
        }
    }
}

/// Block histograms of the four blocks of one patch, concatenated.
pub fn patch_block_features(
    face: &GrayImage,
    layout: &PatchLayout,
    patch_id: usize,
    variant: LbpVariant,
) -> Result<Vec<f64>, FeatureError> {
    if patch_id >= PATCH_COUNT {
        return Err(FeatureError::PatchIdOutOfRange(patch_id));
    }
    let patch = extract_patch(face, layout.get(patch_id));
    let blocks = split_blocks(&patch)?;
    let mut out = Vec::with_capacity(BLOCKS_PER_PATCH * variant.bins());
    for block in &blocks {
        let labels = lbp_map(block)?;
        out.extend_from_slice(&histogram(&labels, variant));
    }
    Ok(out)
}

/// Feature vector of an aligned face over `patch_ids` (0-based,
/// strictly ascending).
pub fn feature_vector(
    face: &AlignedFace,
    layout: &PatchLayout,
    patch_ids: &[usize],
    variant: LbpVariant,
) -> Result<FeatureVector, FeatureError> {
    if patch_ids.is_empty() {
        return Err(FeatureError::EmptyPatchSet);
    }
    if patch_ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FeatureError::UnorderedPatchIds);
    }
    let mut values = Vec::with_capacity(FeatureVector::len_for(patch_ids.len(), variant));
    for &id in patch_ids {
        values.extend(patch_block_features(&face.image, layout, id, variant)?);
    }
    Ok(FeatureVector { values, patch_ids: patch_ids.to_vec(), variant })
}

/// Block-histogram features of all 19 patches of one face; entry i is
/// P(i+1)'s four concatenated block histograms.
pub fn face_patch_features(
    face: &AlignedFace,
    variant: LbpVariant,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    let layout = crate::patches::layout_patches(&face.landmarks, face.resolution);
    (0..PATCH_COUNT)
        .map(|id| patch_block_features(&face.image, &layout, id, variant))
        .collect()
}

/// Per-patch feature matrices for a whole labeled dataset: one
/// n_samples x (4 * bins) matrix per patch, extracted once and shared
/// by saliency scoring and classifier training.
#[derive(Clone, Debug)]
pub struct PatchFeatureSet {
    pub per_patch: Vec<Mat>,
    pub labels: Vec<usize>,
    pub variant: LbpVariant,
}

impl PatchFeatureSet {
    pub fn extract(
        faces: &[AlignedFace],
        labels: &[usize],
        variant: LbpVariant,
    ) -> Result<PatchFeatureSet, FeatureError> {
        assert_eq!(faces.len(), labels.len(), "one label per face");
        let dim = BLOCKS_PER_PATCH * variant.bins();
        let mut per_patch = vec![Mat::zeros(faces.len(), dim); PATCH_COUNT];
        for (row, face) in faces.iter().enumerate() {
            let features = face_patch_features(face, variant)?;
            for (patch, values) in features.into_iter().enumerate() {
                for (col, v) in values.into_iter().enumerate() {
                    per_patch[patch].set(row, col, v);
                }
            }
        }
        Ok(PatchFeatureSet { per_patch, labels: labels.to_vec(), variant })
    }

    /// Assemble from precomputed per-face patch features.
    pub fn from_rows(
        rows: &[Vec<Vec<f64>>],
        labels: &[usize],
        variant: LbpVariant,
    ) -> PatchFeatureSet {
        assert_eq!(rows.len(), labels.len());
        let dim = BLOCKS_PER_PATCH * variant.bins();
        let mut per_patch = vec![Mat::zeros(rows.len(), dim); PATCH_COUNT];
        for (r, face_features) in rows.iter().enumerate() {
            assert_eq!(face_features.len(), PATCH_COUNT);
            for (patch, values) in face_features.iter().enumerate() {
                assert_eq!(values.len(), dim);
                for (c, &v) in values.iter().enumerate() {
                    per_patch[patch].set(r, c, v);
                }
            }
        }
        PatchFeatureSet { per_patch, labels: labels.to_vec(), variant }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Concatenate the selected patches' features for the given sample
    /// rows, in the order the ids are listed.
    pub fn concat(&self, patch_ids: &[usize], rows: &[usize]) -> Mat {
        let dim: usize = patch_ids.iter().map(|&id| self.per_patch[id].cols()).sum();
        let mut out = Mat::zeros(rows.len(), dim);
        for (r, &sample) in rows.iter().enumerate() {
            let mut offset = 0;
            for &id in patch_ids {
                let src = self.per_patch[id].row(sample);
                for (c, &v) in src.iter().enumerate() {
                    out.set(r, offset + c, v);
                }
                offset += src.len();
            }
        }
        out
    }

    /// One patch's features restricted to the given rows.
    pub fn patch_rows(&self, patch_id: usize, rows: &[usize]) -> Mat {
        self.concat(&[patch_id], rows)
    }

    /// Row-filtered copy (for cross-validation splits).
    pub fn subset(&self, rows: &[usize]) -> PatchFeatureSet {
        let per_patch = (0..PATCH_COUNT).map(|p| self.patch_rows(p, rows)).collect();
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        PatchFeatureSet { per_patch, labels, variant: self.variant }
    }

    /// The 19 per-patch feature vectors of one sample.
    pub fn face_rows(&self, row: usize) -> Vec<Vec<f64>> {
        (0..PATCH_COUNT).map(|p| self.per_patch[p].row(row).to_vec()).collect()
    }
}
