//! Cascade-of-boosted-rectangles detection for face, eyes and nose,
//! plus the coarse-ROI gating used before eye/nose search.
//!
//! Cascade models are loaded from a line-oriented text format and never
//! trained here. Evaluation matches the usual scheme: multi-scale
//! sliding window, per-window variance normalization from two integral
//! images, stage-by-stage early rejection, then neighbor grouping of
//! overlapping hits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::imaging::{integral, integral_squared, GrayImage, IntegralImage};
use crate::round_half_up;

pub use crate::imaging::Rect;

/// A rectangle relative to the cascade's canonical window, with its
/// feature weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub weight: f64,
}

/// Stump classifier over a 2-3 rectangle Haar-like feature.
///
/// The feature value is `sum(weight_i * rect_sum_i) / (n * sigma)` where
/// `n` is the window pixel count and `sigma` the window standard
/// deviation floored at 1. The stump emits `left` when the value is
/// below `threshold`, `right` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakClassifier {
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
    pub rects: Vec<WeightedRect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub weak: Vec<WeakClassifier>,
}

/// Ordered rejection cascade over a canonical detection window.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCascade {
    pub window_w: usize,
    pub window_h: usize,
    pub stages: Vec<Stage>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CascadeParseError {
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for CascadeParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

pub const DEFAULT_SCALE_STEP: f64 = 1.1;

/// Default minimum window side: one fifth of the ROI's smaller dimension.
pub fn default_min_size(roi: &Rect) -> usize {
    (roi.w.min(roi.h) / 5).max(1)
}

impl HaarCascade {
    /// Parse the text cascade format:
    ///
    /// ```text
    /// CASCADE v1 <w> <h> <nstages>
    /// STAGE <threshold> <nweak>
    /// WEAK <thr> <left> <right> <nrect>
    /// RECT <x> <y> <w> <h> <weight>
    /// ```
    ///
    /// Blank lines and `#` comments are allowed. Every rectangle must
    /// lie inside the canonical window and every stage must have at
    /// least one weak classifier.
    pub fn parse(text: &str) -> Result<HaarCascade, CascadeParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let err = |line: usize, message: String| CascadeParseError { line, message };
        let (line, header) = lines
            .next()
            .ok_or_else(|| err(0, String::from("empty cascade file")))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("CASCADE") || it.next() != Some("v1") {
            return Err(err(line, String::from("expected 'CASCADE v1 <w> <h> <nstages>'")));
        }
        let window_w: usize = parse_field(it.next(), line, "window width")?;
        let window_h: usize = parse_field(it.next(), line, "window height")?;
        let nstages: usize = parse_field(it.next(), line, "stage count")?;
        if window_w == 0 || window_h == 0 {
            return Err(err(line, String::from("canonical window must be at least 1x1")));
        }
        if nstages == 0 {
            return Err(err(line, String::from("cascade must have at least one stage")));
        }

        let mut stages = Vec::with_capacity(nstages);
        for _ in 0..nstages {
            let (line, l) = lines
                .next()
                .ok_or_else(|| err(usize::MAX, String::from("unexpected end of file: missing STAGE")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some("STAGE") {
                return Err(err(line, format!("expected STAGE, found '{l}'")));
            }
            let threshold: f64 = parse_field(it.next(), line, "stage threshold")?;
            let nweak: usize = parse_field(it.next(), line, "weak count")?;
            if nweak == 0 {
                return Err(err(line, String::from("stage must have at least one weak classifier")));
            }
            let mut weak = Vec::with_capacity(nweak);
            for _ in 0..nweak {
                let (line, l) = lines
                    .next()
                    .ok_or_else(|| err(usize::MAX, String::from("unexpected end of file: missing WEAK")))?;
                let mut it = l.split_whitespace();
                if it.next() != Some("WEAK") {
                    return Err(err(line, format!("expected WEAK, found '{l}'")));
                }
                let thr: f64 = parse_field(it.next(), line, "weak threshold")?;
                let left: f64 = parse_field(it.next(), line, "left value")?;
                let right: f64 = parse_field(it.next(), line, "right value")?;
                let nrect: usize = parse_field(it.next(), line, "rect count")?;
                if !(2..=3).contains(&nrect) {
                    return Err(err(line, format!("weak classifier needs 2-3 rects, got {nrect}")));
                }
                let mut rects = Vec::with_capacity(nrect);
                for _ in 0..nrect {
                    let (line, l) = lines.next().ok_or_else(|| {
                        err(usize::MAX, String::from("unexpected end of file: missing RECT"))
                    })?;
                    let mut it = l.split_whitespace();
                    if it.next() != Some("RECT") {
                        return Err(err(line, format!("expected RECT, found '{l}'")));
                    }
                    let x: usize = parse_field(it.next(), line, "rect x")?;
                    let y: usize = parse_field(it.next(), line, "rect y")?;
                    let w: usize = parse_field(it.next(), line, "rect w")?;
                    let h: usize = parse_field(it.next(), line, "rect h")?;
                    let weight: f64 = parse_field(it.next(), line, "rect weight")?;
                    if w == 0 || h == 0 || x + w > window_w || y + h > window_h {
                        return Err(err(
                            line,
                            format!("rect {x},{y},{w},{h} outside {window_w}x{window_h} window"),
                        ));
                    }
                    rects.push(WeightedRect { x, y, w, h, weight });
                }
                weak.push(WeakClassifier { threshold: thr, left, right, rects });
            }
            stages.push(Stage { threshold, weak });
        }
        Ok(HaarCascade { window_w, window_h, stages })
    }

    /// Serialize back into the text format `parse` reads.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "CASCADE v1 {} {} {}\n",
            self.window_w,
            self.window_h,
            self.stages.len()
        );
        for stage in &self.stages {
            out += &format!("STAGE {} {}\n", stage.threshold, stage.weak.len());
            for weak in &stage.weak {
                out += &format!(
                    "WEAK {} {} {} {}\n",
                    weak.threshold,
                    weak.left,
                    weak.right,
                    weak.rects.len()
                );
                for r in &weak.rects {
                    out += &format!("RECT {} {} {} {} {}\n", r.x, r.y, r.w, r.h, r.weight);
                }
            }
        }
        out
    }
}

fn parse_field<T: core::str::FromStr>(
    tok: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, CascadeParseError> {
    let tok = tok.ok_or_else(|| CascadeParseError {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| CascadeParseError {
        line,
        message: format!("invalid {what}: '{tok}'"),
    })
}

struct WindowContext<'a> {
    sums: &'a IntegralImage,
    squares: &'a IntegralImage,
}

impl WindowContext<'_> {
    /// Stage-by-stage evaluation of one window at a given scale.
    fn window_passes(&self, cascade: &HaarCascade, window: &Rect, scale: f64) -> bool {
        let n = window.area() as f64;
        let sum = self.sums.rect_sum(window) as f64;
        let sumsq = self.squares.rect_sum(window) as f64;
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        let sigma = libm::sqrt(var).max(1.0);
        let norm = n * sigma;

        for stage in &cascade.stages {
            let mut total = 0.0;
            for weak in &stage.weak {
                let mut feature = 0.0;
                for r in &weak.rects {
                    let rect = scale_rect(r, window, scale, self.sums.width(), self.sums.height());
                    feature += r.weight * self.sums.rect_sum(&rect) as f64;
                }
                let value = feature / norm;
                total += if value < weak.threshold { weak.left } else { weak.right };
            }
            if total < stage.threshold {
                return false;
            }
        }
        true
    }
}

fn scale_rect(r: &WeightedRect, window: &Rect, scale: f64, img_w: usize, img_h: usize) -> Rect {
    let x = window.x + round_half_up(r.x as f64 * scale).max(0) as usize;
    let y = window.y + round_half_up(r.y as f64 * scale).max(0) as usize;
    let w = round_half_up(r.w as f64 * scale).max(1) as usize;
    let h = round_half_up(r.h as f64 * scale).max(1) as usize;
    // Rounding can push a rect one pixel past the window; clamp to the image.
    let x = x.min(img_w.saturating_sub(1));
    let y = y.min(img_h.saturating_sub(1));
    Rect::new(x, y, w.min(img_w - x), h.min(img_h - y))
}

/// Multi-scale sliding-window detection inside `roi`.
///
/// Scales start at the smallest factor giving a window side of at least
/// `min_size` and multiply by `scale_step` while the window fits in the
/// ROI; the window slides with stride 1. Hits are grouped by rectangle
/// similarity; groups with at least 3 members become one mean box.
/// Results are sorted by area descending (ties by y then x).
pub fn detect(
    img: &GrayImage,
    cascade: &HaarCascade,
    roi: &Rect,
    scale_step: f64,
    min_size: usize,
) -> Vec<Rect> {
    assert!(scale_step > 1.0, "scale_step must be > 1");
    assert!(img.full_rect().contains(roi), "roi must lie inside the image");

    let sums = integral(img);
    let squares = integral_squared(img);
    let ctx = WindowContext { sums: &sums, squares: &squares };

    let base = cascade.window_w.min(cascade.window_h) as f64;
    let mut scale = (min_size.max(1) as f64 / base).max(1.0);
    let mut hits: Vec<Rect> = Vec::new();
    loop {
        let win_w = round_half_up(cascade.window_w as f64 * scale).max(1) as usize;
        let win_h = round_half_up(cascade.window_h as f64 * scale).max(1) as usize;
        if win_w > roi.w || win_h > roi.h {
            break;
        }
        for y in roi.y..=roi.bottom() - win_h {
            for x in roi.x..=roi.right() - win_w {
                let window = Rect::new(x, y, win_w, win_h);
                if ctx.window_passes(cascade, &window, scale) {
                    hits.push(window);
                }
            }
        }
        scale *= scale_step;
    }

    let mut merged = group_hits(&hits, 3);
    merged.sort_by(|a, b| {
        b.area().cmp(&a.area()).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x))
    });
    merged
}

/// Union-find grouping of similar rectangles; clusters smaller than
/// `min_neighbors` are dropped, the rest are averaged.
fn group_hits(hits: &[Rect], min_neighbors: usize) -> Vec<Rect> {
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }

    for i in 0..n {
        for j in i + 1..n {
            if similar(&hits[i], &hits[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut clusters: Vec<(usize, [f64; 4])> = Vec::new();
    let mut cluster_of = alloc::collections::BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let slot = *cluster_of.entry(root).or_insert_with(|| {
            clusters.push((0, [0.0; 4]));
            clusters.len() - 1
        });
        let entry = &mut clusters[slot];
        entry.0 += 1;
        entry.1[0] += hits[i].x as f64;
        entry.1[1] += hits[i].y as f64;
        entry.1[2] += hits[i].w as f64;
        entry.1[3] += hits[i].h as f64;
    }

    clusters
        .into_iter()
        .filter(|(count, _)| *count >= min_neighbors)
        .map(|(count, sums)| {
            let c = count as f64;
            Rect::new(
                round_half_up(sums[0] / c) as usize,
                round_half_up(sums[1] / c) as usize,
                round_half_up(sums[2] / c).max(1) as usize,
                round_half_up(sums[3] / c).max(1) as usize,
            )
        })
        .collect()
}

/// Rectangle similarity for neighbor grouping: corner offsets within
/// 20% of the smaller box dimensions.
fn similar(a: &Rect, b: &Rect) -> bool {
    let delta = 0.2 * 0.5 * ((a.w.min(b.w) + a.h.min(b.h)) as f64);
    let close = |p: usize, q: usize| (p as f64 - q as f64).abs() <= delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.right(), b.right()) && close(a.bottom(), b.bottom())
}

/// Largest face box in the whole image, if any.
pub fn detect_face(img: &GrayImage, cascade: &HaarCascade) -> Option<Rect> {
    let roi = img.full_rect();
    let min_size = default_min_size(&roi);
    detect(img, cascade, &roi, DEFAULT_SCALE_STEP, min_size).into_iter().next()
}

/// Coarse eye ROI inside the face box: rows [0.20, 0.55) of the face
/// height; columns [0.05, 0.50) of the width for the left eye, mirrored
/// for the right.
pub fn eye_roi(face: &Rect, side: Side) -> Rect {
    let (c0, c1) = match side {
        Side::Left => (0.05, 0.50),
        Side::Right => (0.50, 0.95),
    };
    fraction_roi(face, c0, c1, 0.20, 0.55)
}

/// Coarse nose ROI: rows [0.35, 0.75), columns [0.25, 0.75) of the face box.
pub fn nose_roi(face: &Rect) -> Rect {
    fraction_roi(face, 0.25, 0.75, 0.35, 0.75)
}

fn fraction_roi(face: &Rect, c0: f64, c1: f64, r0: f64, r1: f64) -> Rect {
    let x0 = face.x + round_half_up(c0 * face.w as f64).max(0) as usize;
    let x1 = face.x + round_half_up(c1 * face.w as f64).max(0) as usize;
    let y0 = face.y + round_half_up(r0 * face.h as f64).max(0) as usize;
    let y1 = face.y + round_half_up(r1 * face.h as f64).max(0) as usize;
    Rect::new(x0, y0, x1.saturating_sub(x0).max(1), y1.saturating_sub(y0).max(1))
}

/// Largest eye box inside the coarse per-side ROI.
pub fn detect_eye(img: &GrayImage, cascade: &HaarCascade, side: Side, face: &Rect) -> Option<Rect> {
    let roi = eye_roi(face, side).intersect(&img.full_rect())?;
    let min_size = default_min_size(&roi);
    detect(img, cascade, &roi, DEFAULT_SCALE_STEP, min_size).into_iter().next()
}

/// Largest nose box inside the coarse nose ROI.
pub fn detect_nose(img: &GrayImage, cascade: &HaarCascade, face: &Rect) -> Option<Rect> {
    let roi = nose_roi(face).intersect(&img.full_rect())?;
    let min_size = default_min_size(&roi);
    detect(img, cascade, &roi, DEFAULT_SCALE_STEP, min_size).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    /// Single-stage cascade keyed to a dark square over a bright square:
    /// top-half rect weight +1, bottom-half rect weight -1, so the
    /// feature is strongly positive when the top half is brighter.
    fn two_rect_cascade() -> HaarCascade {
        let text = "\
CASCADE v1 8 8 1
STAGE 1 1
WEAK 0.2 0 1 2
RECT 0 0 8 4 1
RECT 0 4 8 4 -1
";
        HaarCascade::parse(text).unwrap()
    }

    fn pattern_image() -> GrayImage {
        // 32x32 mid-gray field with a bright-over-dark 16x16 pattern at (8, 8).
        let mut img = GrayImage::filled(32, 32, 128);
        for y in 8..16 {
            for x in 8..24 {
                img.set(x, y, 250);
            }
        }
        for y in 16..24 {
            for x in 8..24 {
                img.set(x, y, 10);
            }
        }
        img
    }

    #[test]
    fn parse_round_trips() {
        let cascade = two_rect_cascade();
        let text = cascade.to_text();
        assert_eq!(HaarCascade::parse(&text).unwrap(), cascade);
        assert_eq!(cascade.stages.len(), 1);
    }

    #[test]
    fn parse_rejects_rect_outside_window() {
        let text = "\
CASCADE v1 8 8 1
STAGE 1 1
WEAK 0 0 1 2
RECT 0 0 9 4 1
RECT 0 4 8 4 -1
";
        let err = HaarCascade::parse(text).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.message.contains("outside"), "{}", err.message);
    }

    #[test]
    fn parse_rejects_truncated_file() {
        let text = "CASCADE v1 8 8 2\nSTAGE 1 1\nWEAK 0 0 1 2\nRECT 0 0 4 4 1\n";
        assert!(HaarCascade::parse(text).is_err());
    }

    #[test]
    fn parse_reports_line_of_bad_token() {
        let text = "CASCADE v1 8 8 1\nSTAGE oops 1\n";
        let err = HaarCascade::parse(text).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn blank_image_yields_no_detections() {
        let img = GrayImage::filled(32, 32, 40);
        let out = detect(&img, &two_rect_cascade(), &img.full_rect(), 1.2, 8);
        assert!(out.is_empty());
    }

    #[test]
    fn synthetic_pattern_is_found_once() {
        let img = pattern_image();
        let out = detect(&img, &two_rect_cascade(), &img.full_rect(), 1.2, 8);
        assert_eq!(out.len(), 1, "expected one merged box, got {out:?}");
        let boxed = out[0];
        // The merged box must cover the pattern center.
        let (cx, cy) = boxed.center();
        assert!((cx - 16.0).abs() <= 3.0, "center x {cx}");
        assert!((cy - 16.0).abs() <= 3.0, "center y {cy}");
    }

    #[test]
    fn roi_excluding_pattern_sees_nothing() {
        let img = pattern_image();
        let roi = Rect::new(0, 0, 32, 8);
        let out = detect(&img, &two_rect_cascade(), &roi, 1.2, 4);
        assert!(out.is_empty());
    }

    #[test]
    fn returned_boxes_lie_inside_roi() {
        let img = pattern_image();
        let roi = Rect::new(4, 4, 24, 24);
        for b in detect(&img, &two_rect_cascade(), &roi, 1.2, 8) {
            assert!(roi.contains(&b), "{b:?} outside {roi:?}");
        }
    }

    #[test]
    fn window_evaluation_matches_naive_oracle() {
        // Re-evaluate the stage sum for one window with naive pixel loops.
        let img = pattern_image();
        let cascade = two_rect_cascade();
        let window = Rect::new(8, 8, 16, 16);
        let scale = 2.0;

        let sums = integral(&img);
        let squares = integral_squared(&img);
        let ctx = WindowContext { sums: &sums, squares: &squares };
        let fast = ctx.window_passes(&cascade, &window, scale);

        let naive_sum = |r: &Rect| -> f64 {
            let mut s = 0.0;
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    s += img.get(x, y) as f64;
                }
            }
            s
        };
        let n = window.area() as f64;
        let total = naive_sum(&window);
        let mut sq = 0.0;
        for y in window.y..window.bottom() {
            for x in window.x..window.right() {
                sq += (img.get(x, y) as f64).powi(2);
            }
        }
        let mean = total / n;
        let sigma = (sq / n - mean * mean).max(0.0).sqrt().max(1.0);
        let weak = &cascade.stages[0].weak[0];
        let mut feature = 0.0;
        for r in &weak.rects {
            let rect = scale_rect(r, &window, scale, img.width(), img.height());
            feature += r.weight * naive_sum(&rect);
        }
        let value = feature / (n * sigma);
        let naive_pass =
            (if value < weak.threshold { weak.left } else { weak.right }) >= cascade.stages[0].threshold;
        assert_eq!(fast, naive_pass);
        assert!(fast, "the pattern window should pass");

        // The integral-image path computes the same normalized feature
        // value as direct pixel summation.
        let mut fast_feature = 0.0;
        for r in &weak.rects {
            let rect = scale_rect(r, &window, scale, img.width(), img.height());
            fast_feature += r.weight * sums.rect_sum(&rect) as f64;
        }
        let fast_sigma = {
            let total = sums.rect_sum(&window) as f64;
            let sq_total = squares.rect_sum(&window) as f64;
            let mean = total / n;
            (sq_total / n - mean * mean).max(0.0).sqrt().max(1.0)
        };
        let fast_value = fast_feature / (n * fast_sigma);
        assert!(
            (fast_value - value).abs() <= 1e-9 * value.abs().max(1.0),
            "feature value mismatch: {fast_value} vs {value}"
        );
    }

    #[test]
    fn detection_is_translation_consistent() {
        let base = pattern_image();
        // Shift content by (3, 2) inside a larger canvas.
        let mut shifted = GrayImage::filled(40, 40, 128);
        for y in 0..32 {
            for x in 0..32 {
                shifted.set(x + 3, y + 2, base.get(x, y));
            }
        }
        let cascade = two_rect_cascade();
        let b0 = detect(&base, &cascade, &base.full_rect(), 1.2, 8);
        let roi = Rect::new(3, 2, 32, 32);
        let b1 = detect(&shifted, &cascade, &roi, 1.2, 8);
        assert_eq!(b0.len(), 1);
        assert_eq!(b1.len(), 1);
        assert_eq!(b1[0].x, b0[0].x + 3);
        assert_eq!(b1[0].y, b0[0].y + 2);
        assert_eq!(b1[0].w, b0[0].w);
        assert_eq!(b1[0].h, b0[0].h);
    }

    #[test]
    fn largest_box_wins() {
        let boxes = vec![
            Rect::new(0, 0, 4, 4),
            Rect::new(10, 10, 8, 8),
        ];
        let mut sorted = boxes.clone();
        sorted.sort_by_key(|r| core::cmp::Reverse(r.area()));
        assert_eq!(sorted[0], Rect::new(10, 10, 8, 8));
    }

    #[test]
    fn eye_roi_matches_ledger_fractions() {
        let face = Rect::new(0, 0, 96, 96);
        let roi = eye_roi(&face, Side::Left);
        // rows [0.20, 0.55) x cols [0.05, 0.50) of 96, rounded half-up.
        assert_eq!(roi, Rect::new(5, 19, 43, 34));
        let right = eye_roi(&face, Side::Right);
        assert_eq!(right, Rect::new(48, 19, 43, 34));
        let nose = nose_roi(&face);
        assert_eq!(nose, Rect::new(24, 34, 48, 38));
    }

    #[test]
    fn group_hits_requires_three_neighbors() {
        let hits = vec![Rect::new(10, 10, 20, 20), Rect::new(11, 10, 20, 20)];
        assert!(group_hits(&hits, 3).is_empty());
        let hits = vec![
            Rect::new(10, 10, 20, 20),
            Rect::new(11, 10, 20, 20),
            Rect::new(10, 11, 20, 20),
        ];
        let merged = group_hits(&hits, 3);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0], Rect::new(10, 10, 20, 20));
    }
}
