//! Image loading: 8-bit binary PGM and 8-bit PNG (grayscale and RGB;
//! RGB converts through luma 0.299 R + 0.587 G + 0.114 B rounded
//! half-up). Format is chosen by magic bytes, not extension.

use std::fs;
use std::path::Path;

use ferspm_core::imaging::GrayImage;
use ferspm_core::round_half_up;

use crate::pgm::read_pgm_bytes;
use crate::Error;

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    round_half_up(y).clamp(0, 255) as u8
}

pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        read_pgm_bytes(&bytes, path)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        read_png_bytes(&bytes, path)
    } else {
        Err(Error::parse(path, 0, "unsupported image format (need P5 PGM or PNG)"))
    }
}

fn read_png_bytes(bytes: &[u8], origin: &Path) -> Result<GrayImage, Error> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::parse(origin, 0, format!("bad PNG: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::parse(origin, 0, format!("bad PNG: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::parse(origin, 0, "only 8-bit PNG is supported"));
    }
    let w = info.width as usize;
    let h = info.height as usize;
    let data = &buf[..info.buffer_size()];
    let pixels: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => data.to_vec(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        png::ColorType::Rgba => data.chunks_exact(4).map(|p| luma(p[0], p[1], p[2])).collect(),
        png::ColorType::Indexed => {
            return Err(Error::parse(origin, 0, "indexed PNG is not supported"));
        }
    };
    GrayImage::new(w, h, pixels).map_err(|e| Error::parse(origin, 0, e.to_string()))
}
