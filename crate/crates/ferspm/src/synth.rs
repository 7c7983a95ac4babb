//! Synthetic face fixtures: deterministic renderered faces with known
//! landmark geometry, class-specific low-contrast textures in the
//! patch areas, and tiny hand-built cascades matched to the rendered
//! organs. The test suite and the `synth` subcommand use these to
//! exercise the entire pipeline without any external dataset.
//!
//! Geometry (face-relative, face side 100): eyes centered at
//! (30, 30) / (70, 30) as 12 px dark squares, brows at rows 14..18,
//! nose as a 12 px block centered at (50, 55), mouth bar at rows
//! 75..83 x cols 32..68. Textures are +-8 around the skin tone, far
//! below the organ contrasts, so they are invisible to the detection
//! chain but dominate the LBP histograms.

use std::fs;
use std::path::{Path, PathBuf};

use ferspm_core::detect::HaarCascade;
use ferspm_core::eval::{ExpressionLabel, ALL_LABELS};
use ferspm_core::imaging::{GrayImage, Rect};
use ferspm_core::landmarks::{Landmark, LandmarkSet, Point};
use ferspm_core::rng::{subseed, SplitMix64};

use crate::landmark_file::write_landmarks;
use crate::pgm::write_pgm;
use crate::Error;

pub const CANVAS: usize = 160;
pub const FACE_SIDE: usize = 100;

const BACKGROUND: u8 = 65;
/// Skin tone rises smoothly toward the lower right so the face
/// histogram is spread over ~50 levels; a flat tone would concentrate
/// the histogram and make equalization blow quantization noise up
/// into spurious edges.
fn skin(x: usize, y: usize) -> u8 {
    (160 + (x + y) * 51 / (2 * FACE_SIDE)) as u8
}
const EYE_VALUE: u8 = 45;
const BROW_VALUE: u8 = 70;
const NOSE_VALUE: u8 = 75;
const MOUTH_VALUE: u8 = 50;
const TEXTURE_AMPLITUDE: i32 = 8;
const NOISE_AMPLITUDE: i32 = 2;

/// Face-relative texture regions (x0, x1, y0, y1) covering the spots
/// where P16, P17, P14, P15, P3 and P6 will land. The two midline
/// regions are clipped to columns 45..55 so no texture enters the
/// eyebrow search ROIs (columns beyond 45 from either side).
const TEXTURE_REGIONS: [(usize, usize, usize, usize); 6] = [
    (45, 55, 20, 40), // P16, between the eyes
    (45, 55, 8, 29),  // P17, above P16
    (20, 40, 31, 52), // P14, below the left eye
    (60, 80, 31, 52), // P15, below the right eye
    (30, 50, 32, 53), // P3, between left eye and nose
    (50, 70, 32, 53), // P6, between right eye and nose
];

#[derive(Clone, Copy, Debug)]
pub struct FaceGeometry {
    /// Face box in canvas coordinates.
    pub face: Rect,
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
}

/// Ground-truth landmarks in aligned R x R coordinates, assuming the
/// face box is detected exactly.
pub fn truth_landmarks(resolution: usize) -> LandmarkSet {
    let s = resolution as f64 / FACE_SIDE as f64;
    let p = |x: f64, y: f64| Landmark::detected(Point::new(x * s, y * s));
    LandmarkSet {
        left_eye: p(30.0, 32.0),
        right_eye: p(70.0, 32.0),
        nose: p(50.0, 55.0),
        lip_left: p(32.0, 75.0),
        lip_right: p(67.0, 75.0),
        brow_inner_left: p(40.0, 15.0),
        brow_inner_right: p(59.0, 15.0),
    }
}

/// Orientation-distinct micro-patterns, one per class; surprise keeps
/// flat skin, which is itself a distinctive LBP signature.
fn class_texture(label: ExpressionLabel, x: usize, y: usize) -> Option<bool> {
    let on = match label {
        ExpressionLabel::Anger => (y / 2).is_multiple_of(2),
        ExpressionLabel::Disgust => (x / 2).is_multiple_of(2),
        ExpressionLabel::Fear => (x / 3 + y / 3).is_multiple_of(2),
        ExpressionLabel::Happiness => ((x + y) / 3).is_multiple_of(2),
        ExpressionLabel::Sadness => ((x + 4 * FACE_SIDE - y) / 3).is_multiple_of(2),
        ExpressionLabel::Surprise => return None,
    };
    Some(on)
}

/// Render one face. The same (label, rng state) always renders the same
/// image; position jitter, texture phase and pixel noise come from the
/// generator.
pub fn render_face(label: ExpressionLabel, rng: &mut SplitMix64) -> (GrayImage, FaceGeometry) {
    let jitter = |rng: &mut SplitMix64| rng.next_below(9) as isize - 4;
    let fx = (30 + jitter(rng)) as usize;
    let fy = (30 + jitter(rng)) as usize;
    let phase_x = rng.next_below(8);
    let phase_y = rng.next_below(8);

    let mut img = GrayImage::filled(CANVAS, CANVAS, BACKGROUND);
    for y in 0..FACE_SIDE {
        for x in 0..FACE_SIDE {
            img.set(fx + x, fy + y, skin(x, y));
        }
    }

    // Class texture, then organs on top of it.
    for &(x0, x1, y0, y1) in &TEXTURE_REGIONS {
        for y in y0..y1.min(FACE_SIDE) {
            for x in x0..x1.min(FACE_SIDE) {
                if let Some(on) = class_texture(label, x + phase_x, y + phase_y) {
                    let v = skin(x, y) as i32
                        + if on { TEXTURE_AMPLITUDE } else { -TEXTURE_AMPLITUDE };
                    img.set(fx + x, fy + y, v.clamp(0, 255) as u8);
                }
            }
        }
    }

    // Eyes: a short upper-lid ramp into a solid dark core, kept
    // vertically compact so the eyebrow search band above the detected
    // eye center contains at most a sliver of the eye itself.
    for x0 in [24usize, 64] {
        for (i, y) in (27..30).enumerate() {
            for x in x0..x0 + 12 {
                let base = skin(x, y) as i32;
                let v = base - (base - EYE_VALUE as i32) * (i as i32 + 1) / 4;
                img.set(fx + x, fy + y, v.clamp(0, 255) as u8);
            }
        }
        for y in 30..36 {
            for x in x0..x0 + 12 {
                img.set(fx + x, fy + y, EYE_VALUE);
            }
        }
    }

    let mut organ = |x0: usize, y0: usize, w: usize, h: usize, v: u8| {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                img.set(fx + x, fy + y, v);
            }
        }
    };
    organ(19, 14, 22, 4, BROW_VALUE); // left brow
    organ(59, 14, 22, 4, BROW_VALUE); // right brow
    organ(44, 49, 12, 12, NOSE_VALUE); // nose
    organ(32, 75, 36, 8, MOUTH_VALUE); // mouth

    // Light pixel noise over the whole canvas.
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let n = rng.next_below(2 * NOISE_AMPLITUDE as usize + 1) as i32 - NOISE_AMPLITUDE;
            let v = img.get(x, y) as i32 + n;
            img.set(x, y, v.clamp(0, 255) as u8);
        }
    }

    let geometry = FaceGeometry {
        face: Rect::new(fx, fy, FACE_SIDE, FACE_SIDE),
        left_eye: Point::new((fx + 30) as f64, (fy + 32) as f64),
        right_eye: Point::new((fx + 70) as f64, (fy + 32) as f64),
        nose: Point::new((fx + 50) as f64, (fy + 55) as f64),
    };
    (img, geometry)
}

/// Face cascade on a 20x20 window: eyes-dark-vs-midforehead,
/// mouth-dark-vs-chin, nose-dark-vs-cheeks and brow-band-vs-forehead.
/// All four must fire; the mouth and brow features pin the window's
/// vertical extent so off-scale windows fail.
pub fn face_cascade() -> HaarCascade {
    let text = "\
CASCADE v1 20 20 1
STAGE 4 4
WEAK 0.05 0 1 3
RECT 4 5 4 4 -1
RECT 12 5 4 4 -1
RECT 8 5 4 4 2
WEAK 0.04 0 1 2
RECT 7 15 6 2 -1
RECT 7 18 6 2 1
WEAK 0.03 0 1 3
RECT 9 10 2 2 -2
RECT 5 10 2 2 1
RECT 13 10 2 2 1
WEAK 0.025 0 1 2
RECT 4 2 12 2 -1
RECT 4 0 12 2 1
";
    HaarCascade::parse(text).expect("built-in cascade is valid")
}

/// Dark-center-bright-surround detector used for both eyes and nose.
fn center_surround_cascade() -> HaarCascade {
    let text = "\
CASCADE v1 12 12 1
STAGE 1 1
WEAK -0.9 1 0 2
RECT 0 0 12 12 -1
RECT 3 3 6 6 4
";
    HaarCascade::parse(text).expect("built-in cascade is valid")
}

pub fn eye_cascade() -> HaarCascade {
    center_surround_cascade()
}

pub fn nose_cascade() -> HaarCascade {
    center_surround_cascade()
}

pub struct FixtureSet {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub face_cascade: PathBuf,
    pub eye_cascade: PathBuf,
    pub nose_cascade: PathBuf,
    pub images: Vec<PathBuf>,
}

/// Write a complete fixture dataset: `per_class` images per expression
/// as PGM, ground-truth landmark files, the three cascades and a
/// manifest (without landmark overrides; truth files sit next to the
/// images as `<name>.pts`).
pub fn write_fixture_set(
    dir: impl AsRef<Path>,
    per_class: usize,
    seed: u64,
) -> Result<FixtureSet, Error> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let truth = truth_landmarks(96);
    let mut manifest = String::from("# synthetic fixture set\n");
    let mut images = Vec::new();
    for label in ALL_LABELS {
        let mut rng = SplitMix64::new(subseed(seed, label.index() as u64));
        for idx in 0..per_class {
            let (img, _) = render_face(label, &mut rng);
            let stem = format!("{}_{idx:03}", label.as_str());
            let image_path = dir.join(format!("{stem}.pgm"));
            write_pgm(&image_path, &img)?;
            write_landmarks(dir.join(format!("{stem}.pts")), &truth)?;
            manifest.push_str(&format!("{stem}.pgm,{}\n", label.as_str()));
            images.push(image_path);
        }
    }

    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let face_path = dir.join("face.cascade");
    let eye_path = dir.join("eye.cascade");
    let nose_path = dir.join("nose.cascade");
    crate::cascade_file::save_cascade(&face_path, &face_cascade())?;
    crate::cascade_file::save_cascade(&eye_path, &eye_cascade())?;
    crate::cascade_file::save_cascade(&nose_path, &nose_cascade())?;

    Ok(FixtureSet {
        dir: dir.to_path_buf(),
        manifest: manifest_path,
        face_cascade: face_path,
        eye_cascade: eye_path,
        nose_cascade: nose_path,
        images,
    })
}

/// The bundled cascades as an in-memory set.
pub fn fixture_cascades() -> crate::pipeline::Cascades {
    crate::pipeline::Cascades {
        face: Some(face_cascade()),
        eye: Some(eye_cascade()),
        nose: Some(nose_cascade()),
    }
}
