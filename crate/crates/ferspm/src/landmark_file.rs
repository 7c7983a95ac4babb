//! Landmark files: one `<name> <x> <y>` line per point, names exactly
//! the seven canonical landmark names, coordinates in aligned-face
//! pixels. Also renders the diagnostic overlay with 3x3 crosses.

use std::fs;
use std::path::Path;

use ferspm_core::imaging::GrayImage;
use ferspm_core::landmarks::{Landmark, LandmarkSet, Point, PointName, POINT_NAMES};
use ferspm_core::round_half_up;

use crate::Error;

pub fn landmarks_to_string(set: &LandmarkSet) -> String {
    let mut out = String::new();
    for (name, lm) in set.iter() {
        out.push_str(&format!("{} {} {}\n", name.as_str(), lm.point.x, lm.point.y));
    }
    out
}

pub fn write_landmarks(path: impl AsRef<Path>, set: &LandmarkSet) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, landmarks_to_string(set)).map_err(|e| Error::io(path, e))
}

pub fn parse_landmarks(text: &str, origin: &Path) -> Result<LandmarkSet, Error> {
    let mut found: Vec<(PointName, Point)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let name_str = it.next().unwrap();
        let name = PointName::parse_name(name_str)
            .ok_or_else(|| Error::parse(origin, line_no, format!("unknown landmark '{name_str}'")))?;
        if found.iter().any(|(n, _)| *n == name) {
            return Err(Error::parse(origin, line_no, format!("duplicate landmark '{name_str}'")));
        }
        let mut coord = || -> Result<f64, Error> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(origin, line_no, "expected '<name> <x> <y>'"))
        };
        let x = coord()?;
        let y = coord()?;
        found.push((name, Point::new(x, y)));
    }
    for name in POINT_NAMES {
        if !found.iter().any(|(n, _)| *n == name) {
            return Err(Error::parse(origin, 0, format!("missing landmark '{}'", name.as_str())));
        }
    }
    let get = |name: PointName| {
        let (_, p) = found.iter().find(|(n, _)| *n == name).unwrap();
        Landmark::detected(*p)
    };
    Ok(LandmarkSet {
        left_eye: get(PointName::LeftEye),
        right_eye: get(PointName::RightEye),
        nose: get(PointName::Nose),
        lip_left: get(PointName::LipLeft),
        lip_right: get(PointName::LipRight),
        brow_inner_left: get(PointName::BrowInnerLeft),
        brow_inner_right: get(PointName::BrowInnerRight),
    })
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<LandmarkSet, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, path)
}

/// Copy of the face with a white 3x3 cross at every landmark.
pub fn overlay(face: &GrayImage, set: &LandmarkSet) -> GrayImage {
    let mut out = face.clone();
    let w = face.width() as i64;
    let h = face.height() as i64;
    for (_, lm) in set.iter() {
        let cx = round_half_up(lm.point.x);
        let cy = round_half_up(lm.point.y);
        for (dx, dy) in [(0i64, 0i64), (-1, 0), (1, 0), (0, -1), (0, 1)] {
            let x = cx + dx;
            let y = cy + dy;
            if (0..w).contains(&x) && (0..h).contains(&y) {
                out.set(x as usize, y as usize, 255);
            }
        }
    }
    out
}
