//! Grayscale image files: 8/16-bit PNG, binary PGM (P5), and raw
//! little-endian `f32` grids with a JSON sidecar.
//!
//! Integer formats are normalized to `[0, 1]` by their maximum code value on
//! load and quantized back with rounding on save, so an image loaded from an
//! integer file round-trips bit-identically.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    Pgm,
    RawF32,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Result<FileFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(FileFormat::Png),
            Some("pgm") => Ok(FileFormat::Pgm),
            Some("f32") | Some("raw") => Ok(FileFormat::RawF32),
            _ => Err(Error::UnsupportedFormat(format!(
                "{} (expected .png, .pgm or .f32)",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSidecar {
    width: usize,
    height: usize,
}

/// Location of the `{width, height}` sidecar for a raw float grid.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "{}: netpbm variant P{} (only binary P5 is supported)",
            path.display(),
            bytes[1] as char
        )))
    } else if FileFormat::from_path(path).ok() == Some(FileFormat::RawF32) {
        decode_raw(path, &bytes)
    } else if bytes.len() < PNG_MAGIC.len() && PNG_MAGIC.starts_with(&bytes) && !bytes.is_empty() {
        Err(Error::malformed(path, "truncated PNG signature"))
    } else if bytes.is_empty() {
        Err(Error::malformed(path, "empty file"))
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: unrecognized file signature",
            path.display()
        )))
    }
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match FileFormat::from_path(path)? {
        FileFormat::Png => encode_png(img)?,
        FileFormat::Pgm => encode_pgm(img),
        FileFormat::RawF32 => {
            let sidecar = serde_json::to_string(&RawSidecar {
                width: img.width(),
                height: img.height(),
            })
            .expect("sidecar serialization cannot fail");
            let side = sidecar_path(path);
            fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))?;
            img.data()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::malformed(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (data, depth): (Vec<f64>, u8) = match decoded {
        DynamicImage::ImageLuma8(buf) => (
            buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
            8,
        ),
        DynamicImage::ImageLuma16(buf) => (
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            16,
        ),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: PNG color type {:?} (only grayscale is supported)",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(Image::new(w, h, data)?.with_bit_depth(Some(depth)))
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = if img.bit_depth() == Some(8) {
        let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap())
    } else {
        let raw: Vec<u16> = img
            .data()
            .iter()
            .map(|&v| quantize(v, 65535.0) as u16)
            .collect();
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap())
    };
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidInput(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn pgm_token(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let width = pgm_token(bytes, &mut pos).ok_or_else(|| Error::malformed(path, "missing width"))?;
    let height =
        pgm_token(bytes, &mut pos).ok_or_else(|| Error::malformed(path, "missing height"))?;
    let maxval =
        pgm_token(bytes, &mut pos).ok_or_else(|| Error::malformed(path, "missing maxval"))?;
    if width == 0 || height == 0 {
        return Err(Error::malformed(path, "zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::malformed(path, format!("maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::malformed(path, "header not terminated"));
    }
    pos += 1;
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * bytes_per_sample;
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(Error::malformed(
            path,
            format!("raster truncated: {} of {needed} bytes", raster.len()),
        ));
    }
    let max = maxval as f64;
    let data: Vec<f64> = if bytes_per_sample == 1 {
        raster[..needed].iter().map(|&v| v as f64 / max).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / max)
            .collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(Error::malformed(path, "sample exceeds maxval"));
    }
    let depth = if maxval < 256 { 8 } else { 16 };
    Ok(Image::new(width, height, data)?.with_bit_depth(Some(depth)))
}

fn encode_pgm(img: &Image) -> Vec<u8> {
    let sixteen = img.bit_depth() != Some(8);
    let maxval = if sixteen { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.data() {
        let q = quantize(v, maxval as f64) as u16;
        if sixteen {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

fn decode_raw(path: &Path, bytes: &[u8]) -> Result<Image> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RawSidecar =
        serde_json::from_str(&text).map_err(|e| Error::malformed(&side, e.to_string()))?;
    if bytes.len() != meta.width * meta.height * 4 {
        return Err(Error::malformed(
            path,
            format!(
                "{} bytes does not match {}x{} f32 grid",
                bytes.len(),
                meta.width,
                meta.height
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image::new(meta.width, meta.height, data)
}
