//! Placement of the 19 active facial patches from a landmark set, patch
//! extraction and the 2x2 block split feeding the block histograms.
//!
//! Every patch is a square of side `round(R/9)`. Centers follow a fixed
//! offset table (in patch-side units) anchored at the landmarks; boxes
//! that would leave the raster are shifted inward, never shrunk, so the
//! feature dimension stays constant.

use crate::imaging::{GrayImage, ImageError, Rect};
use crate::landmarks::{LandmarkSet, Point};
use crate::round_half_up;

pub const PATCH_COUNT: usize = 19;

/// Left/right mirror pairs (0-based patch indices), symmetric about the
/// face midline when the landmarks are symmetric.
pub const MIRROR_PAIRS: [(usize, usize); 8] =
    [(0, 3), (8, 10), (1, 4), (6, 11), (7, 12), (2, 5), (13, 14), (17, 18)];

/// The 19 patch rectangles, indexed 0..19 for P1..P19.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub boxes: [Rect; PATCH_COUNT],
    pub side: usize,
}

impl PatchLayout {
    /// Patch rectangle by 0-based index.
    pub fn get(&self, index: usize) -> &Rect {
        &self.boxes[index]
    }
}

/// Centers of all 19 patches, before boxing and clipping.
///
/// P1/P4 sit on the lip corners, P18/P19 on the inner eyebrows, P16
/// between the eyes with P17 above it, P3/P6 midway between eye and
/// nose, P14/P15 one patch below the eyes, P2/P7/P8 clustered left of
/// the nose (P5/P12/P13 mirrored right), P9/P11 below the lip corners
/// and P10 between them.
fn patch_centers(lm: &LandmarkSet, side: f64) -> [Point; PATCH_COUNT] {
    let s = side;
    let le = lm.left_eye.point;
    let re = lm.right_eye.point;
    let nose = lm.nose.point;
    let ll = lm.lip_left.point;
    let lr = lm.lip_right.point;

    let p1 = ll;
    let p4 = lr;
    let p2 = Point::new(nose.x - s, nose.y);
    let p5 = Point::new(nose.x + s, nose.y);
    let p7 = Point::new(p2.x, p2.y - s);
    let p8 = Point::new(p2.x - s, p2.y);
    let p12 = Point::new(p5.x, p5.y - s);
    let p13 = Point::new(p5.x + s, p5.y);
    let p9 = Point::new(p1.x, p1.y + s);
    let p11 = Point::new(p4.x, p4.y + s);
    let p10 = p9.midpoint(&p11);
    let p16 = le.midpoint(&re);
    let p17 = Point::new(p16.x, p16.y - s);
    let p3 = le.midpoint(&nose);
    let p6 = re.midpoint(&nose);
    let p14 = Point::new(le.x, le.y + s);
    let p15 = Point::new(re.x, re.y + s);
    let p18 = lm.brow_inner_left.point;
    let p19 = lm.brow_inner_right.point;

    [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10, p11, p12, p13, p14, p15, p16, p17, p18, p19]
}

/// Compute the 19-patch layout for an R x R face.
pub fn layout_patches(lm: &LandmarkSet, resolution: usize) -> PatchLayout {
    let side = round_half_up(resolution as f64 / 9.0).max(1) as usize;
    let centers = patch_centers(lm, side as f64);
    let boxes = centers.map(|c| clipped_box(c, side, resolution));
    PatchLayout { boxes, side }
}

/// Square box of side `side` centered at `c`, shifted inward if it
/// crosses the raster edge.
fn clipped_box(c: Point, side: usize, resolution: usize) -> Rect {
    let half = side as f64 / 2.0;
    let max_origin = (resolution - side) as i64;
    let x = round_half_up(c.x - half).clamp(0, max_origin) as usize;
    let y = round_half_up(c.y - half).clamp(0, max_origin) as usize;
    Rect::new(x, y, side, side)
}

/// Pixel-exact patch crop. Panics if the box is outside the raster
/// (layout boxes never are).
pub fn extract_patch(face: &GrayImage, rect: &Rect) -> GrayImage {
    face.crop(rect)
}

/// Split a patch into four blocks: top-left, top-right, bottom-left,
/// bottom-right. Odd sides split at floor(side/2).
pub fn split_blocks(patch: &GrayImage) -> Result<[GrayImage; 4], ImageError> {
    let w = patch.width();
    let h = patch.height();
    if w < 2 || h < 2 {
        return Err(ImageError::TooSmall { min_side: 2 });
    }
    let wx = w / 2;
    let hy = h / 2;
    Ok([
        patch.crop(&Rect::new(0, 0, wx, hy)),
        patch.crop(&Rect::new(wx, 0, w - wx, hy)),
        patch.crop(&Rect::new(0, hy, wx, h - hy)),
        patch.crop(&Rect::new(wx, hy, w - wx, h - hy)),
    ])
}
