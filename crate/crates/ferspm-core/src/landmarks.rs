//! Learning-free landmark localization on the aligned face: eye-based
//! up-right alignment, lip-corner detection from the horizontal-Sobel /
//! Otsu / dilation / connected-component chain, eyebrow corners via an
//! extra adaptive-threshold step, anthropometric fallback coordinates,
//! and the interpupil-normalized landmark error metric.

use alloc::vec::Vec;

use crate::imaging::{
    adaptive_threshold, connected_components, dilate, equalize_histogram, gaussian_blur_3x3,
    otsu_threshold, resize, sobel_horizontal, Connectivity, GrayImage, Rect, Region,
};
use crate::round_half_up;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// How a landmark was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Detected,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub point: Point,
    pub source: Source,
}

impl Landmark {
    pub fn detected(point: Point) -> Landmark {
        Landmark { point, source: Source::Detected }
    }

    pub fn fallback(point: Point) -> Landmark {
        Landmark { point, source: Source::Fallback }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointName {
    LeftEye,
    RightEye,
    Nose,
    LipLeft,
    LipRight,
    BrowInnerLeft,
    BrowInnerRight,
}

pub const POINT_NAMES: [PointName; 7] = [
    PointName::LeftEye,
    PointName::RightEye,
    PointName::Nose,
    PointName::LipLeft,
    PointName::LipRight,
    PointName::BrowInnerLeft,
    PointName::BrowInnerRight,
];

impl PointName {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointName::LeftEye => "left_eye",
            PointName::RightEye => "right_eye",
            PointName::Nose => "nose",
            PointName::LipLeft => "lip_left",
            PointName::LipRight => "lip_right",
            PointName::BrowInnerLeft => "brow_inner_left",
            PointName::BrowInnerRight => "brow_inner_right",
        }
    }

    pub fn parse_name(s: &str) -> Option<PointName> {
        POINT_NAMES.iter().copied().find(|n| n.as_str() == s)
    }
}

/// The seven named landmarks, in aligned-face pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkSet {
    pub left_eye: Landmark,
    pub right_eye: Landmark,
    pub nose: Landmark,
    pub lip_left: Landmark,
    pub lip_right: Landmark,
    pub brow_inner_left: Landmark,
    pub brow_inner_right: Landmark,
}

impl LandmarkSet {
    pub fn get(&self, name: PointName) -> &Landmark {
        match name {
            PointName::LeftEye => &self.left_eye,
            PointName::RightEye => &self.right_eye,
            PointName::Nose => &self.nose,
            PointName::LipLeft => &self.lip_left,
            PointName::LipRight => &self.lip_right,
            PointName::BrowInnerLeft => &self.brow_inner_left,
            PointName::BrowInnerRight => &self.brow_inner_right,
        }
    }

    pub fn get_mut(&mut self, name: PointName) -> &mut Landmark {
        match name {
            PointName::LeftEye => &mut self.left_eye,
            PointName::RightEye => &mut self.right_eye,
            PointName::Nose => &mut self.nose,
            PointName::LipLeft => &mut self.lip_left,
            PointName::LipRight => &mut self.lip_right,
            PointName::BrowInnerLeft => &mut self.brow_inner_left,
            PointName::BrowInnerRight => &mut self.brow_inner_right,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PointName, &Landmark)> {
        POINT_NAMES.iter().map(move |&n| (n, self.get(n)))
    }

    /// All points from the anthropometric table, flagged fallback.
    pub fn all_fallback(resolution: usize) -> LandmarkSet {
        let mut set = LandmarkSet {
            left_eye: Landmark::fallback(Point::new(0.0, 0.0)),
            right_eye: Landmark::fallback(Point::new(0.0, 0.0)),
            nose: Landmark::fallback(Point::new(0.0, 0.0)),
            lip_left: Landmark::fallback(Point::new(0.0, 0.0)),
            lip_right: Landmark::fallback(Point::new(0.0, 0.0)),
            brow_inner_left: Landmark::fallback(Point::new(0.0, 0.0)),
            brow_inner_right: Landmark::fallback(Point::new(0.0, 0.0)),
        };
        for (name, point) in anthropometric_fallback(resolution, &POINT_NAMES) {
            *set.get_mut(name) = Landmark::fallback(point);
        }
        set
    }

    /// Check geometric invariants for an R x R raster.
    pub fn validate(&self, resolution: usize) -> Result<(), LandmarkError> {
        let r = resolution as f64;
        for (name, lm) in self.iter() {
            let p = lm.point;
            if !(p.x >= 0.0 && p.x < r && p.y >= 0.0 && p.y < r) {
                return Err(LandmarkError::PointOutsideRaster(name));
            }
        }
        if self.left_eye.point.x >= self.right_eye.point.x {
            return Err(LandmarkError::EyesNotOrdered);
        }
        if self.lip_left.point.x >= self.lip_right.point.x {
            return Err(LandmarkError::LipsNotOrdered);
        }
        Ok(())
    }
}

/// Face image at canonical resolution with its landmarks.
#[derive(Clone, Debug)]
pub struct AlignedFace {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    pub resolution: usize,
}

pub const SUPPORTED_RESOLUTIONS: [usize; 4] = [48, 96, 144, 192];

impl AlignedFace {
    pub fn new(
        image: GrayImage,
        landmarks: LandmarkSet,
        resolution: usize,
    ) -> Result<AlignedFace, LandmarkError> {
        if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
            return Err(LandmarkError::UnsupportedResolution(resolution));
        }
        if image.width() != resolution || image.height() != resolution {
            return Err(LandmarkError::NotSquare);
        }
        landmarks.validate(resolution)?;
        Ok(AlignedFace { image, landmarks, resolution })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LandmarkError {
    CoincidentEyes,
    UnsupportedResolution(usize),
    NotSquare,
    PointOutsideRaster(PointName),
    EyesNotOrdered,
    LipsNotOrdered,
    ZeroInterpupilDistance,
    EmptyRoi,
    /// No connected component survived; callers switch to the
    /// anthropometric fallback.
    NoComponent,
}

impl core::fmt::Display for LandmarkError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LandmarkError::CoincidentEyes => write!(f, "eye points coincide"),
            LandmarkError::UnsupportedResolution(r) => {
                write!(f, "unsupported face resolution {r} (supported: 48, 96, 144, 192)")
            }
            LandmarkError::NotSquare => write!(f, "aligned face raster must be square R x R"),
            LandmarkError::PointOutsideRaster(n) => {
                write!(f, "landmark {} outside the face raster", n.as_str())
            }
            LandmarkError::EyesNotOrdered => write!(f, "left eye must be left of right eye"),
            LandmarkError::LipsNotOrdered => write!(f, "left lip corner must be left of right"),
            LandmarkError::ZeroInterpupilDistance => {
                write!(f, "truth interpupil distance is zero")
            }
            LandmarkError::EmptyRoi => write!(f, "landmark search ROI is empty"),
            LandmarkError::NoComponent => write!(f, "no connected component survived"),
        }
    }
}

/// Tunable constants of the landmark chain. The defaults are the
/// normative values used throughout.
#[derive(Clone, Copy, Debug)]
pub struct LandmarkParams {
    /// Spurious-component threshold as a fraction of R^2.
    pub area_min_frac: f64,
    /// Lip-corner bilateral symmetry gate.
    pub symmetry_ratio_min: f64,
    /// Adaptive-threshold window as a fraction of R (forced odd, >= 3).
    pub adaptive_window_frac: f64,
    /// Adaptive-threshold offset in intensity units.
    pub adaptive_offset: i32,
    pub dilate_radius: usize,
}

impl Default for LandmarkParams {
    fn default() -> Self {
        LandmarkParams {
            area_min_frac: 0.001,
            symmetry_ratio_min: 1.2,
            adaptive_window_frac: 1.0 / 8.0,
            adaptive_offset: 10,
            dilate_radius: 1,
        }
    }
}

impl LandmarkParams {
    pub fn area_min(&self, resolution: usize) -> f64 {
        self.area_min_frac * (resolution * resolution) as f64
    }

    pub fn adaptive_window(&self, resolution: usize) -> usize {
        let w = round_half_up(self.adaptive_window_frac * resolution as f64).max(3) as usize;
        if w.is_multiple_of(2) {
            w + 1
        } else {
            w
        }
    }
}

/// Similarity transform from original-image coordinates into the
/// aligned R x R face raster: rotate by -theta about the eye midpoint,
/// translate by the face-box origin, scale to R.
#[derive(Clone, Copy, Debug)]
pub struct AlignTransform {
    cos_t: f64,
    sin_t: f64,
    mid_x: f64,
    mid_y: f64,
    origin_x: f64,
    origin_y: f64,
    scale_x: f64,
    scale_y: f64,
}

impl AlignTransform {
    pub fn apply(&self, p: Point) -> Point {
        let dx = p.x - self.mid_x;
        let dy = p.y - self.mid_y;
        // Rotation by -theta.
        let qx = self.cos_t * dx + self.sin_t * dy + self.mid_x;
        let qy = -self.sin_t * dx + self.cos_t * dy + self.mid_y;
        Point::new((qx - self.origin_x) * self.scale_x, (qy - self.origin_y) * self.scale_y)
    }
}

/// Rotate about the eye midpoint so the eye line is horizontal, crop the
/// face box, resize to R x R and equalize. Returns the face raster and
/// the transform that maps original-image points into it.
///
/// Swapped eye arguments are reordered automatically; coincident eyes
/// are an error.
pub fn align_face(
    img: &GrayImage,
    face: &Rect,
    left_eye: Point,
    right_eye: Point,
    resolution: usize,
) -> Result<(GrayImage, AlignTransform), LandmarkError> {
    let (left_eye, right_eye) =
        if left_eye.x > right_eye.x { (right_eye, left_eye) } else { (left_eye, right_eye) };
    let dx = right_eye.x - left_eye.x;
    let dy = right_eye.y - left_eye.y;
    if libm::hypot(dx, dy) < 1e-9 {
        return Err(LandmarkError::CoincidentEyes);
    }
    let theta = libm::atan2(dy, dx);
    let (sin_t, cos_t) = (libm::sin(theta), libm::cos(theta));
    let mid = left_eye.midpoint(&right_eye);

    let rotated = if sin_t == 0.0 && cos_t > 0.0 {
        img.clone()
    } else {
        rotate_about(img, mid, sin_t, cos_t)
    };

    let face = face
        .intersect(&img.full_rect())
        .ok_or(LandmarkError::EmptyRoi)?;
    let cropped = rotated.crop(&face);
    let scaled = resize(&cropped, resolution, resolution);
    let equalized = equalize_histogram(&scaled);

    let transform = AlignTransform {
        cos_t,
        sin_t,
        mid_x: mid.x,
        mid_y: mid.y,
        origin_x: face.x as f64,
        origin_y: face.y as f64,
        scale_x: resolution as f64 / face.w as f64,
        scale_y: resolution as f64 / face.h as f64,
    };
    Ok((equalized, transform))
}

/// Resample the image rotated by -theta about `center` (bilinear,
/// replicate beyond the borders).
fn rotate_about(img: &GrayImage, center: Point, sin_t: f64, cos_t: f64) -> GrayImage {
    let mut out = GrayImage::filled(img.width(), img.height(), 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = x as f64 - center.x;
            let dy = y as f64 - center.y;
            // Inverse map: rotate the output coordinate by +theta.
            let sx = cos_t * dx - sin_t * dy + center.x;
            let sy = sin_t * dx + cos_t * dy + center.y;
            let v = img.sample_bilinear(sx, sy);
            out.set(x, y, round_half_up(v).clamp(0, 255) as u8);
        }
    }
    out
}

fn clip_roi(resolution: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<Rect> {
    let r = resolution as isize;
    let xa = round_half_up(x0).clamp(0, r as i64 - 1) as usize;
    let ya = round_half_up(y0).clamp(0, r as i64 - 1) as usize;
    let xb = round_half_up(x1).clamp(0, r as i64) as usize;
    let yb = round_half_up(y1).clamp(0, r as i64) as usize;
    if xb > xa && yb > ya {
        Some(Rect::new(xa, ya, xb - xa, yb - ya))
    } else {
        None
    }
}

/// Components surviving the spurious-area filter, in scan-from-top
/// order (ties by larger area, then label).
fn surviving_components(mask: &crate::imaging::BinaryImage, area_min: f64) -> Vec<Region> {
    let mut regions: Vec<Region> = connected_components(mask, Connectivity::Eight)
        .into_iter()
        .filter(|r| r.area as f64 >= area_min)
        .collect();
    regions.sort_by(|a, b| {
        a.bbox
            .y
            .cmp(&b.bbox.y)
            .then(b.area.cmp(&a.area))
            .then(a.label.cmp(&b.label))
    });
    regions
}

fn leftmost_pixel(pixels: &[(usize, usize)]) -> (usize, usize) {
    *pixels.iter().min_by_key(|&&(x, y)| (x, y)).unwrap()
}

fn rightmost_pixel(pixels: &[(usize, usize)]) -> (usize, usize) {
    *pixels.iter().max_by_key(|&&(x, y)| (x, core::cmp::Reverse(y))).unwrap()
}

/// Lip-corner detection on the aligned face.
///
/// Mouth ROI below the nose -> blur -> horizontal Sobel -> Otsu ->
/// dilation -> connected components -> spurious removal -> the first
/// component from the top is the upper lip; its extreme pixels are the
/// corners. If the corners fail the bilateral-symmetry ratio (the upper
/// lip split in two), the second component from the top is merged in
/// and the extremes recomputed.
pub fn detect_lip_corners(
    face: &GrayImage,
    nose: Point,
    params: &LandmarkParams,
) -> Result<(Point, Point), LandmarkError> {
    let resolution = face.width();
    let r = resolution as f64;
    let roi = clip_roi(
        resolution,
        nose.x - 0.30 * r,
        nose.x + 0.30 * r,
        nose.y + 0.10 * r,
        nose.y + 0.45 * r,
    )
    .ok_or(LandmarkError::EmptyRoi)?;

    let crop = face.crop(&roi);
    let blurred = gaussian_blur_3x3(&crop);
    let edges = sobel_horizontal(&blurred);
    let (_, mask) = otsu_threshold(&edges);
    let mask = dilate(&mask, params.dilate_radius);
    let regions = surviving_components(&mask, params.area_min(resolution));
    if regions.is_empty() {
        return Err(LandmarkError::NoComponent);
    }

    let corner = |(x, y): (usize, usize)| {
        Point::new((roi.x + x) as f64, (roi.y + y) as f64)
    };
    let mut left = corner(leftmost_pixel(&regions[0].pixels));
    let mut right = corner(rightmost_pixel(&regions[0].pixels));

    let midline = r / 2.0;
    let spread = (left.x - midline).abs().max((right.x - midline).abs());
    let ratio = if spread > 0.0 { left.distance(&right) / spread } else { 0.0 };
    if ratio < params.symmetry_ratio_min && regions.len() >= 2 {
        let mut pixels = regions[0].pixels.clone();
        pixels.extend_from_slice(&regions[1].pixels);
        left = corner(leftmost_pixel(&pixels));
        right = corner(rightmost_pixel(&pixels));
    }
    Ok((left, right))
}

/// Inner eyebrow corner for one eye: ROI above the eye -> adaptive
/// threshold -> horizontal Sobel -> Otsu -> dilation -> components ->
/// spurious removal -> largest component; the corner is its pixel
/// nearest the face vertical midline.
fn detect_eyebrow_corner(
    face: &GrayImage,
    eye: Point,
    params: &LandmarkParams,
) -> Result<Point, LandmarkError> {
    let resolution = face.width();
    let r = resolution as f64;
    let roi = clip_roi(
        resolution,
        eye.x - 0.15 * r,
        eye.x + 0.15 * r,
        eye.y - 0.25 * r,
        eye.y - 0.02 * r,
    )
    .ok_or(LandmarkError::EmptyRoi)?;

    let crop = face.crop(&roi);
    let dark = adaptive_threshold(&crop, params.adaptive_window(resolution), params.adaptive_offset)
        .expect("window is validated odd >= 3");
    let edges = sobel_horizontal(&dark.to_gray());
    let (_, mask) = otsu_threshold(&edges);
    let mask = dilate(&mask, params.dilate_radius);
    let mut regions = surviving_components(&mask, params.area_min(resolution));
    if regions.is_empty() {
        return Err(LandmarkError::NoComponent);
    }
    regions.sort_by(|a, b| b.area.cmp(&a.area).then(a.label.cmp(&b.label)));

    let midline = r / 2.0;
    let (x, y) = regions[0]
        .pixels
        .iter()
        .copied()
        .min_by(|&(ax, ay), &(bx, by)| {
            let da = ((roi.x + ax) as f64 - midline).abs();
            let db = ((roi.x + bx) as f64 - midline).abs();
            da.partial_cmp(&db).unwrap().then(ay.cmp(&by)).then(ax.cmp(&bx))
        })
        .unwrap();
    Ok(Point::new((roi.x + x) as f64, (roi.y + y) as f64))
}

/// Both inner eyebrow corners; each side fails independently.
pub fn detect_eyebrow_corners(
    face: &GrayImage,
    eye_left: Point,
    eye_right: Point,
    params: &LandmarkParams,
) -> (Result<Point, LandmarkError>, Result<Point, LandmarkError>) {
    (
        detect_eyebrow_corner(face, eye_left, params),
        detect_eyebrow_corner(face, eye_right, params),
    )
}

/// Fixed facial-proportion coordinates (fractions of R) used when a
/// detector finds nothing.
const FALLBACK_TABLE: [(PointName, f64, f64); 7] = [
    (PointName::LeftEye, 0.30, 0.35),
    (PointName::RightEye, 0.70, 0.35),
    (PointName::Nose, 0.50, 0.55),
    (PointName::LipLeft, 0.35, 0.78),
    (PointName::LipRight, 0.65, 0.78),
    (PointName::BrowInnerLeft, 0.40, 0.25),
    (PointName::BrowInnerRight, 0.60, 0.25),
];

/// Anthropometric coordinates for the requested points, rounded half-up
/// to whole pixels.
pub fn anthropometric_fallback(
    resolution: usize,
    missing: &[PointName],
) -> Vec<(PointName, Point)> {
    let r = resolution as f64;
    missing
        .iter()
        .map(|&name| {
            let (_, fx, fy) = FALLBACK_TABLE
                .iter()
                .find(|(n, _, _)| *n == name)
                .expect("every point name is in the table");
            let x = round_half_up(fx * r) as f64;
            let y = round_half_up(fy * r) as f64;
            (name, Point::new(x, y))
        })
        .collect()
}

/// Normalized landmark error: mean point-to-point Euclidean distance
/// over the seven landmarks, divided by the truth interpupil distance.
pub fn landmark_error(pred: &LandmarkSet, truth: &LandmarkSet) -> Result<f64, LandmarkError> {
    let s = truth.left_eye.point.distance(&truth.right_eye.point);
    if s < 1e-12 {
        return Err(LandmarkError::ZeroInterpupilDistance);
    }
    let n = POINT_NAMES.len() as f64;
    let total: f64 = POINT_NAMES
        .iter()
        .map(|&name| pred.get(name).point.distance(&truth.get(name).point))
        .sum();
    Ok(total / (n * s))
}
