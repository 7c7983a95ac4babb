//! Raster types and the classical image operations the pipeline is
//! built from: Gaussian blur, histogram equalization, bilinear resize,
//! horizontal Sobel, Otsu and adaptive thresholding, dilation,
//! connected components and integral images.
//!
//! Conventions shared by every operation here:
//! - borders are replicate-edge for all convolutions and local means,
//! - produced intensities are rounded half-up,
//! - all functions are pure; inputs are never mutated.

use alloc::vec;
use alloc::vec::Vec;

use crate::round_half_up;

/// Row-major 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// Row-major boolean raster, the output of thresholding steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// One connected component of set pixels.
#[derive(Clone, Debug)]
pub struct Region {
    /// 1-based label in row-major first-encounter order.
    pub label: u32,
    pub area: usize,
    pub bbox: Rect,
    /// Pixels in deterministic flood-fill order.
    pub pixels: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageError {
    EmptyImage,
    SizeMismatch { expected: usize, got: usize },
    TooSmall { min_side: usize },
    BadWindow,
}

impl core::fmt::Display for ImageError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ImageError::EmptyImage => write!(f, "image dimensions must be at least 1x1"),
            ImageError::SizeMismatch { expected, got } => {
                write!(f, "pixel buffer length {got} does not match dimensions ({expected})")
            }
            ImageError::TooSmall { min_side } => {
                write!(f, "image side must be at least {min_side}")
            }
            ImageError::BadWindow => write!(f, "window must be odd and at least 3"),
        }
    }
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Rect {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Mean of the four vertices.
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        if r > x && b > y {
            Some(Rect::new(x, y, r - x, b - y))
        } else {
            None
        }
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<GrayImage, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(ImageError::SizeMismatch { expected: width * height, got: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> GrayImage {
        GrayImage { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Sample with replicate-edge clamping; accepts out-of-range signed coords.
    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[yc * self.width + xc]
    }

    /// Bilinear sample at fractional coordinates, clamped to the raster.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc as usize;
        let y0 = yc as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        p00 * (1.0 - fx) * (1.0 - fy)
            + p10 * fx * (1.0 - fy)
            + p01 * (1.0 - fx) * fy
            + p11 * fx * fy
    }

    /// Pixel-exact crop. Panics if `rect` is not inside the raster.
    pub fn crop(&self, rect: &Rect) -> GrayImage {
        assert!(
            rect.w >= 1 && rect.h >= 1 && self.full_rect().contains(rect),
            "crop rect {rect:?} outside {}x{} raster",
            self.width,
            self.height
        );
        let mut pixels = Vec::with_capacity(rect.w * rect.h);
        for y in rect.y..rect.bottom() {
            let row = &self.pixels[y * self.width + rect.x..y * self.width + rect.right()];
            pixels.extend_from_slice(row);
        }
        GrayImage { width: rect.w, height: rect.h, pixels }
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<BinaryImage, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if bits.len() != width * height {
            return Err(ImageError::SizeMismatch { expected: width * height, got: bits.len() });
        }
        Ok(BinaryImage { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> BinaryImage {
        BinaryImage { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 0/255 grayscale rendering, used when a thresholded mask feeds a
    /// convolution stage.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage { width: self.width, height: self.height, pixels }
    }
}

/// Cumulative-sum table with a zero first row and column; entry (x, y)
/// holds the sum of all pixels with coordinates strictly below (x, y).
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u64>,
}

impl IntegralImage {
    /// Image width (the table itself is (width+1) x (height+1)).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> u64 {
        self.sums[y * (self.width + 1) + x]
    }

    /// Sum of pixels inside `rect`; zero-sized rectangles sum to 0.
    /// Panics if the rectangle reaches outside the image.
    #[inline]
    pub fn rect_sum(&self, rect: &Rect) -> u64 {
        assert!(rect.right() <= self.width && rect.bottom() <= self.height);
        let a = self.at(rect.x, rect.y);
        let b = self.at(rect.right(), rect.y);
        let c = self.at(rect.x, rect.bottom());
        let d = self.at(rect.right(), rect.bottom());
        (d + a) - (b + c)
    }
}

/// 3x3 Gaussian smoothing with the binomial [1 2 1] kernel, replicate
/// borders, integer half-up rounding.
pub fn gaussian_blur_3x3(img: &GrayImage) -> GrayImage {
    let w = img.width as isize;
    let h = img.height as isize;
    let mut out = Vec::with_capacity(img.pixels.len());
    const K: [[u32; 3]; 3] = [[1, 2, 1], [2, 4, 2], [1, 2, 1]];
    for y in 0..h {
        for x in 0..w {
            let mut acc: u32 = 0;
            for (dy, row) in K.iter().enumerate() {
                for (dx, &kv) in row.iter().enumerate() {
                    let px = img.get_clamped(x + dx as isize - 1, y + dy as isize - 1);
                    acc += kv * px as u32;
                }
            }
            out.push(((acc + 8) / 16) as u8);
        }
    }
    GrayImage { width: img.width, height: img.height, pixels: out }
}

/// Histogram equalization: v -> round(255 * cdf(v) / N). A constant
/// image maps to constant 255 (all mass in one bin).
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let n = img.pixels.len() as f64;
    let mut map = [0u8; 256];
    let mut cum = 0u64;
    for v in 0..256 {
        cum += hist[v];
        map[v] = round_half_up(255.0 * cum as f64 / n).clamp(0, 255) as u8;
    }
    let pixels = img.pixels.iter().map(|&p| map[p as usize]).collect();
    GrayImage { width: img.width, height: img.height, pixels }
}

/// Bilinear resize. Source coordinates use the pixel-center mapping
/// `src = (dst + 0.5) * (src_len / dst_len) - 0.5`, so resizing to the
/// original size is the identity.
pub fn resize(img: &GrayImage, w: usize, h: usize) -> GrayImage {
    assert!(w >= 1 && h >= 1, "target dimensions must be at least 1x1");
    if w == img.width && h == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..w {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let v = img.sample_bilinear(src_x, src_y);
            pixels.push(round_half_up(v).clamp(0, 255) as u8);
        }
    }
    GrayImage { width: w, height: h, pixels }
}

/// Absolute response of the horizontal-edge Sobel kernel
/// [-1 -2 -1; 0 0 0; 1 2 1], clamped to [0, 255], replicate borders.
pub fn sobel_horizontal(img: &GrayImage) -> GrayImage {
    let w = img.width as isize;
    let h = img.height as isize;
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let top = img.get_clamped(x - 1, y - 1) as i32
                + 2 * img.get_clamped(x, y - 1) as i32
                + img.get_clamped(x + 1, y - 1) as i32;
            let bottom = img.get_clamped(x - 1, y + 1) as i32
                + 2 * img.get_clamped(x, y + 1) as i32
                + img.get_clamped(x + 1, y + 1) as i32;
            out.push((bottom - top).unsigned_abs().min(255) as u8);
        }
    }
    GrayImage { width: img.width, height: img.height, pixels: out }
}

/// Otsu's threshold: maximize between-class variance over all 256
/// candidate levels, ties broken by the lowest level. The binary output
/// sets pixels strictly greater than the threshold. A constant image is
/// degenerate and yields (that value, all false).
pub fn otsu_threshold(img: &GrayImage) -> (u8, BinaryImage) {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    let min = *img.pixels.iter().min().unwrap();
    let max = *img.pixels.iter().max().unwrap();
    if min == max {
        return (min, BinaryImage::empty(img.width, img.height));
    }

    let total_sum: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..256usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_sum - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }

    let bits = img.pixels.iter().map(|&p| p > best_t).collect();
    (best_t, BinaryImage { width: img.width, height: img.height, bits })
}

/// Local-mean threshold: a bit is set where
/// `pixel < mean(window) - offset`, with the mean taken over an odd
/// `window`-sided square, replicate borders. Isolates dark structures.
pub fn adaptive_threshold(
    img: &GrayImage,
    window: usize,
    offset: i32,
) -> Result<BinaryImage, ImageError> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(ImageError::BadWindow);
    }
    let r = (window / 2) as isize;
    let n = (window * window) as i64;
    let mut bits = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut sum: i64 = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    sum += img.get_clamped(x + dx, y + dy) as i64;
                }
            }
            // pixel < sum/n - offset, kept in integers.
            let pixel = img.get_clamped(x, y) as i64;
            bits.push(pixel * n < sum - offset as i64 * n);
        }
    }
    Ok(BinaryImage { width: img.width, height: img.height, bits })
}

/// Morphological dilation with a square structuring element of side
/// `2*radius + 1`. Implemented as separable horizontal + vertical
/// passes, which is exact for square elements.
pub fn dilate(img: &BinaryImage, radius: usize) -> BinaryImage {
    assert!(radius >= 1, "dilation radius must be at least 1");
    let w = img.width;
    let h = img.height;
    let r = radius as isize;
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        for x in 0..w as isize {
            let lo = (x - r).max(0) as usize;
            let hi = ((x + r) as usize).min(w - 1);
            horiz[y * w + x as usize] = (lo..=hi).any(|xx| img.bits[y * w + xx]);
        }
    }
    let mut bits = vec![false; w * h];
    for y in 0..h as isize {
        let lo = (y - r).max(0) as usize;
        let hi = ((y + r) as usize).min(h - 1);
        for x in 0..w {
            bits[y as usize * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
        }
    }
    BinaryImage { width: w, height: h, bits }
}

/// Connected components of set pixels, labeled 1.. in row-major
/// first-encounter order.
pub fn connected_components(img: &BinaryImage, connectivity: Connectivity) -> Vec<Region> {
    let w = img.width;
    let h = img.height;
    let mut labels = vec![0u32; w * h];
    let mut regions = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let neighbors8 = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
    let neighbors4 = [(0, -1), (-1, 0), (1, 0), (0, 1)];
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &neighbors4,
        Connectivity::Eight => &neighbors8,
    };

    for sy in 0..h {
        for sx in 0..w {
            if !img.bits[sy * w + sx] || labels[sy * w + sx] != 0 {
                continue;
            }
            let label = regions.len() as u32 + 1;
            let mut pixels = Vec::new();
            let (mut min_x, mut min_y, mut max_x, mut max_y) = (sx, sy, sx, sy);
            labels[sy * w + sx] = label;
            stack.push((sx, sy));
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                for &(dx, dy) in offsets {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let idx = ny as usize * w + nx as usize;
                    if img.bits[idx] && labels[idx] == 0 {
                        labels[idx] = label;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
            let bbox = Rect::new(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
            regions.push(Region { label, area: pixels.len(), bbox, pixels });
        }
    }
    regions
}

/// Integral image with 64-bit accumulators; exact for 8-bit rasters up
/// to 4096x4096 and beyond.
pub fn integral(img: &GrayImage) -> IntegralImage {
    integral_of(img, |p| p as u64)
}

/// Integral image of squared intensities (for window-variance queries).
pub fn integral_squared(img: &GrayImage) -> IntegralImage {
    integral_of(img, |p| p as u64 * p as u64)
}

fn integral_of(img: &GrayImage, f: impl Fn(u8) -> u64) -> IntegralImage {
    let w = img.width;
    let h = img.height;
    let stride = w + 1;
    let mut sums = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        for x in 0..w {
            row_sum += f(img.pixels[y * w + x]);
            sums[(y + 1) * stride + (x + 1)] = sums[y * stride + (x + 1)] + row_sum;
        }
    }
    IntegralImage { width: w, height: h, sums }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec::Vec;

    pub(crate) fn random_image(rng: &mut SplitMix64, w: usize, h: usize) -> GrayImage {
        let pixels = (0..w * h).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    /// Direct 3x3 convolution oracle with replicate borders.
    fn blur_oracle(img: &GrayImage, x: isize, y: isize) -> u8 {
        let k = [[1i64, 2, 1], [2, 4, 2], [1, 2, 1]];
        let mut acc = 0i64;
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let px = img.get_clamped(x + dx as isize, y + dy as isize) as i64;
                acc += k[(dy + 1) as usize][(dx + 1) as usize] * px;
            }
        }
        ((acc + 8) / 16) as u8
    }

    #[test]
    fn blur_constant_is_identity() {
        let img = GrayImage::filled(5, 4, 77);
        assert_eq!(gaussian_blur_3x3(&img), img);
    }

    #[test]
    fn blur_center_impulse() {
        let mut img = GrayImage::filled(3, 3, 0);
        img.set(1, 1, 16);
        let out = gaussian_blur_3x3(&img);
        assert_eq!(out.get(1, 1), 4);
    }

    #[test]
    fn blur_corner_impulse_uses_replication() {
        let mut img = GrayImage::filled(4, 4, 0);
        img.set(0, 0, 160);
        let out = gaussian_blur_3x3(&img);
        // Replicated taps hitting the corner: weights 4+2+2+1 = 9.
        assert_eq!(out.get(0, 0), 90);
        assert_eq!(out.get(0, 0), blur_oracle(&img, 0, 0));
    }

    #[test]
    fn blur_matches_oracle_on_random_images() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..5 {
            let img = random_image(&mut rng, 9, 7);
            let out = gaussian_blur_3x3(&img);
            for y in 0..7 {
                for x in 0..9 {
                    assert_eq!(out.get(x, y), blur_oracle(&img, x as isize, y as isize));
                }
            }
        }
    }

    #[test]
    fn equalize_constant_maps_to_255() {
        let img = GrayImage::filled(6, 6, 42);
        assert_eq!(equalize_histogram(&img), GrayImage::filled(6, 6, 255));
    }

    #[test]
    fn equalize_uniform_is_near_identity() {
        // One pixel of every intensity: cdf(v) = (v+1)/256.
        let pixels: Vec<u8> = (0..=255).collect();
        let img = GrayImage::new(16, 16, pixels).unwrap();
        let out = equalize_histogram(&img);
        for (out_p, in_p) in out.pixels().iter().zip(img.pixels()) {
            assert!((*out_p as i32 - *in_p as i32).abs() <= 1, "{in_p} -> {out_p}");
        }
    }

    #[test]
    fn equalize_two_level_image() {
        let mut pixels = vec![50u8; 8];
        pixels.extend_from_slice(&[200u8; 8]);
        let img = GrayImage::new(4, 4, pixels).unwrap();
        let out = equalize_histogram(&img);
        // cdf(50) = 1/2 -> round(127.5) = 128; cdf(200) = 1 -> 255.
        assert_eq!(out.get(0, 0), 128);
        assert_eq!(out.get(3, 3), 255);
    }

    #[test]
    fn equalize_is_monotone() {
        let mut rng = SplitMix64::new(2);
        let img = random_image(&mut rng, 16, 16);
        let out = equalize_histogram(&img);
        let mut pairs: Vec<(u8, u8)> =
            img.pixels().iter().copied().zip(out.pixels().iter().copied()).collect();
        pairs.sort();
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let mut rng = SplitMix64::new(3);
        let img = random_image(&mut rng, 13, 8);
        assert_eq!(resize(&img, 13, 8), img);
    }

    #[test]
    fn resize_checkerboard_center() {
        let img = GrayImage::new(2, 2, vec![0, 255, 255, 0]).unwrap();
        let out = resize(&img, 3, 3);
        assert_eq!(out.get(1, 1), 128);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = GrayImage::filled(5, 7, 99);
        let out = resize(&img, 12, 3);
        assert!(out.pixels().iter().all(|&p| p == 99));
    }

    #[test]
    fn sobel_constant_is_zero() {
        let img = GrayImage::filled(6, 6, 180);
        assert!(sobel_horizontal(&img).pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn sobel_horizontal_step_saturates() {
        // Rows 0..3 are 0, rows 3.. are 255.
        let mut img = GrayImage::filled(8, 6, 0);
        for y in 3..6 {
            for x in 0..8 {
                img.set(x, y, 255);
            }
        }
        let out = sobel_horizontal(&img);
        for x in 0..8 {
            assert_eq!(out.get(x, 2), 255);
            assert_eq!(out.get(x, 3), 255);
        }
    }

    #[test]
    fn sobel_ignores_vertical_edges() {
        let mut img = GrayImage::filled(8, 6, 0);
        for y in 0..6 {
            for x in 4..8 {
                img.set(x, y, 255);
            }
        }
        let out = sobel_horizontal(&img);
        for y in 1..5 {
            for x in 0..8 {
                assert_eq!(out.get(x, y), 0, "at ({x},{y})");
            }
        }
    }

    /// Exhaustive between-class-variance search, independent of the
    /// implementation's incremental scan.
    pub(crate) fn otsu_oracle(img: &GrayImage) -> u8 {
        let mut best = (f64::NEG_INFINITY, 0u8);
        for t in 0..256u16 {
            let (mut n0, mut n1, mut s0, mut s1) = (0f64, 0f64, 0f64, 0f64);
            for &p in img.pixels() {
                if (p as u16) <= t {
                    n0 += 1.0;
                    s0 += p as f64;
                } else {
                    n1 += 1.0;
                    s1 += p as f64;
                }
            }
            if n0 == 0.0 || n1 == 0.0 {
                continue;
            }
            let d = s0 / n0 - s1 / n1;
            let var = n0 * n1 * d * d;
            if var > best.0 {
                best = (var, t as u8);
            }
        }
        best.1
    }

    #[test]
    fn otsu_two_level_separates() {
        let mut pixels = vec![10u8; 10];
        pixels.extend_from_slice(&[200u8; 6]);
        let img = GrayImage::new(4, 4, pixels).unwrap();
        let (t, bin) = otsu_threshold(&img);
        assert!((10..200).contains(&t), "threshold {t}");
        for (i, &p) in img.pixels().iter().enumerate() {
            assert_eq!(bin.bits()[i], p == 200);
        }
        assert_eq!(t, otsu_oracle(&img));
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        let img = GrayImage::filled(5, 5, 123);
        let (t, bin) = otsu_threshold(&img);
        assert_eq!(t, 123);
        assert_eq!(bin.count_set(), 0);
    }

    #[test]
    fn otsu_matches_exhaustive_oracle() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..20 {
            let img = random_image(&mut rng, 8, 8);
            let (t, _) = otsu_threshold(&img);
            assert_eq!(t, otsu_oracle(&img));
        }
    }

    #[test]
    fn adaptive_constant_with_positive_offset_is_empty() {
        let img = GrayImage::filled(7, 7, 100);
        let out = adaptive_threshold(&img, 3, 1).unwrap();
        assert_eq!(out.count_set(), 0);
    }

    #[test]
    fn adaptive_finds_single_dark_pixel() {
        let mut img = GrayImage::filled(7, 7, 255);
        img.set(3, 3, 0);
        let out = adaptive_threshold(&img, 3, 10).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                assert_eq!(out.get(x, y), x == 3 && y == 3, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn adaptive_huge_negative_offset_sets_everything() {
        let mut rng = SplitMix64::new(5);
        let img = random_image(&mut rng, 6, 6);
        let out = adaptive_threshold(&img, 3, -256).unwrap();
        assert_eq!(out.count_set(), 36);
    }

    #[test]
    fn adaptive_rejects_even_window() {
        let img = GrayImage::filled(4, 4, 0);
        assert_eq!(adaptive_threshold(&img, 4, 0), Err(ImageError::BadWindow));
    }

    #[test]
    fn dilate_empty_stays_empty() {
        let img = BinaryImage::empty(5, 5);
        assert_eq!(dilate(&img, 1).count_set(), 0);
    }

    #[test]
    fn dilate_single_pixel_makes_block() {
        let mut img = BinaryImage::empty(5, 5);
        img.set(2, 2, true);
        let out = dilate(&img, 1);
        assert_eq!(out.count_set(), 9);
        for y in 1..4 {
            for x in 1..4 {
                assert!(out.get(x, y));
            }
        }
    }

    #[test]
    fn dilate_clips_at_borders() {
        let mut img = BinaryImage::empty(4, 4);
        img.set(0, 0, true);
        let out = dilate(&img, 1);
        assert_eq!(out.count_set(), 4);
    }

    #[test]
    fn dilate_bridges_one_pixel_gap() {
        let mut img = BinaryImage::empty(7, 3);
        img.set(1, 1, true);
        img.set(3, 1, true);
        let out = dilate(&img, 1);
        let regions = connected_components(&out, Connectivity::Eight);
        assert_eq!(regions.len(), 1);
    }

    #[test]
    fn components_empty_image() {
        let img = BinaryImage::empty(4, 4);
        assert!(connected_components(&img, Connectivity::Eight).is_empty());
    }

    #[test]
    fn components_two_blocks() {
        let mut img = BinaryImage::empty(8, 4);
        for y in 0..2 {
            for x in 0..2 {
                img.set(x, y, true);
                img.set(x + 5, y + 2, true);
            }
        }
        let regions = connected_components(&img, Connectivity::Eight);
        assert_eq!(regions.len(), 2);
        assert!(regions.iter().all(|r| r.area == 4));
        assert_eq!(regions[0].bbox, Rect::new(0, 0, 2, 2));
        assert_eq!(regions[1].bbox, Rect::new(5, 2, 2, 2));
    }

    #[test]
    fn components_diagonal_depends_on_connectivity() {
        let mut img = BinaryImage::empty(3, 3);
        img.set(0, 0, true);
        img.set(1, 1, true);
        assert_eq!(connected_components(&img, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&img, Connectivity::Four).len(), 2);
    }

    #[test]
    fn integral_constant_rectangles() {
        let img = GrayImage::filled(6, 5, 1);
        let ii = integral(&img);
        assert_eq!(ii.rect_sum(&Rect::new(1, 1, 3, 2)), 6);
        assert_eq!(ii.rect_sum(&Rect::new(0, 0, 6, 5)), 30);
        assert_eq!(ii.rect_sum(&Rect::new(2, 2, 0, 3)), 0);
    }

    #[test]
    fn integral_matches_naive_on_all_subrectangles() {
        let mut rng = SplitMix64::new(6);
        let img = random_image(&mut rng, 8, 8);
        let ii = integral(&img);
        for y0 in 0..8 {
            for x0 in 0..8 {
                for y1 in y0 + 1..=8 {
                    for x1 in x0 + 1..=8 {
                        let mut naive = 0u64;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                naive += img.get(x, y) as u64;
                            }
                        }
                        let rect = Rect::new(x0, y0, x1 - x0, y1 - y0);
                        assert_eq!(ii.rect_sum(&rect), naive);
                    }
                }
            }
        }
    }

    #[test]
    fn crop_is_pixel_exact() {
        let mut rng = SplitMix64::new(7);
        let img = random_image(&mut rng, 10, 10);
        let full = img.crop(&img.full_rect());
        assert_eq!(full, img);
        let a = img.crop(&Rect::new(2, 3, 5, 4));
        let b = a.crop(&Rect::new(1, 1, 3, 2));
        let direct = img.crop(&Rect::new(3, 4, 3, 2));
        assert_eq!(b, direct);
        assert_eq!(img.crop(&Rect::new(4, 5, 1, 1)).get(0, 0), img.get(4, 5));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_binary() -> impl Strategy<Value = BinaryImage> {
            (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<bool>(), w * h)
                    .prop_map(move |bits| BinaryImage::new(w, h, bits).unwrap())
            })
        }

        proptest! {
            #[test]
            fn dilate_is_extensive_and_monotone(img in arb_binary()) {
                let out = dilate(&img, 1);
                for (i, &b) in img.bits().iter().enumerate() {
                    prop_assert!(!b || out.bits()[i]);
                }
                // Remove a pixel: dilation of the subset stays a subset.
                if let Some(pos) = img.bits().iter().position(|&b| b) {
                    let mut smaller = img.clone();
                    smaller.set(pos % img.width(), pos / img.width(), false);
                    let out_small = dilate(&smaller, 1);
                    for (i, &b) in out_small.bits().iter().enumerate() {
                        prop_assert!(!b || out.bits()[i]);
                    }
                }
            }

            #[test]
            fn components_partition_set_pixels(img in arb_binary()) {
                let regions = connected_components(&img, Connectivity::Eight);
                let mut seen = alloc::collections::BTreeSet::new();
                for r in &regions {
                    prop_assert_eq!(r.area, r.pixels.len());
                    for &(x, y) in &r.pixels {
                        prop_assert!(img.get(x, y));
                        prop_assert!(seen.insert((x, y)), "pixel in two regions");
                        prop_assert!(x >= r.bbox.x && x < r.bbox.right());
                        prop_assert!(y >= r.bbox.y && y < r.bbox.bottom());
                    }
                }
                prop_assert_eq!(seen.len(), img.count_set());
            }
        }
    }
}
