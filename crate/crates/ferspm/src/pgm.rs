//! Binary 8-bit PGM (P5) reading and writing per the netpbm format:
//! `P5`, whitespace-separated width / height / maxval (with `#`
//! comments allowed between tokens), one whitespace byte, then raw
//! pixel rows.

use std::fs;
use std::path::Path;

use ferspm_core::imaging::GrayImage;

use crate::Error;

pub fn read_pgm_bytes(bytes: &[u8], origin: &Path) -> Result<GrayImage, Error> {
    let bad = |msg: &str| Error::parse(origin, 0, msg);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a P5 PGM file"));
    }

    let mut pos = 2usize;
    let next_token = |pos: &mut usize| -> Result<usize, Error> {
        // Skip whitespace and '#' comment lines.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::parse(origin, 0, "expected a numeric header field"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(origin, 0, "invalid numeric header field"))
    };

    let width = next_token(&mut pos)?;
    let height = next_token(&mut pos)?;
    let maxval = next_token(&mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM (maxval <= 255) is supported"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing whitespace before pixel data"));
    }
    pos += 1;

    let expected = width
        .checked_mul(height)
        .ok_or_else(|| bad("image dimensions overflow"))?;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(bad("truncated pixel data"));
    }
    GrayImage::new(width, height, data[..expected].to_vec())
        .map_err(|e| Error::parse(origin, 0, e.to_string()))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pgm_bytes(&bytes, path)
}

pub fn pgm_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(img)).map_err(|e| Error::io(path, e))
}
