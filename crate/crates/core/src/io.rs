//! Grayscale image decoding and confidence-map encoding.
//!
//! `raw_f32` layout: two little-endian `u32` (height, width) followed by
//! `height * width` little-endian `f32` samples in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormatKind {
    Pgm,
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    RawF32,
    Png16,
    Csv,
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

impl ImageFormatKind {
    pub fn from_path(path: &Path) -> Option<Self> {
        match extension(path).as_str() {
            "pgm" | "pnm" => Some(ImageFormatKind::Pgm),
            "png" => Some(ImageFormatKind::Png),
            _ => None,
        }
    }
}

impl MapFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match extension(path).as_str() {
            "raw" | "f32" | "bin" => Some(MapFormat::RawF32),
            "png" => Some(MapFormat::Png16),
            "csv" => Some(MapFormat::Csv),
            _ => None,
        }
    }
}

/// Decodes an 8- or 16-bit grayscale PGM/PNG into an intensity grid in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>, format: ImageFormatKind) -> Result<ImageGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let format = match format {
        ImageFormatKind::Pgm => ImageFormat::Pnm,
        ImageFormatKind::Png => ImageFormat::Png,
    };
    let decoded = image::load(BufReader::new(file), format).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                reason: format!("expected single-channel grayscale, found {:?}", other.color()),
            })
        }
    };
    ImageGrid::new(height, width, data, ValueDomain::Intensity)
}

/// Loads a grayscale image, choosing the decoder from the file extension.
pub fn load_image_auto(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let format = ImageFormatKind::from_path(path).ok_or_else(|| Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason: "unrecognized extension (expected .pgm or .png)".into(),
    })?;
    load_image(path, format)
}

pub fn save_map(grid: &ImageGrid, path: impl AsRef<Path>, format: MapFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MapFormat::RawF32 => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            write_raw_f32(grid, &mut out).map_err(|e| Error::io(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))
        }
        MapFormat::Png16 => {
            let samples: Vec<u16> = grid.data().iter().map(|&v| quantize_u16(v)).collect();
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(grid.width() as u32, grid.height() as u32, samples)
                    .expect("buffer sized from grid dimensions");
            buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
                image::ImageError::IoError(source) => Error::io(path, source),
                other => Error::Decode {
                    path: path.to_path_buf(),
                    reason: other.to_string(),
                },
            })
        }
        MapFormat::Csv => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            write_csv(grid, &mut out).map_err(|e| Error::io(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))
        }
    }
}

/// Saves a map, choosing the encoder from the file extension.
pub fn save_map_auto(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = MapFormat::from_path(path).ok_or_else(|| {
        Error::param(
            "output",
            format!(
                "{}: unrecognized extension (expected .raw, .png or .csv)",
                path.display()
            ),
        )
    })?;
    save_map(grid, path, format)
}

/// `round(v * 65535)`; samples outside `[0, 1]` saturate.
pub fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub(crate) fn write_raw_f32(grid: &ImageGrid, out: &mut impl Write) -> std::io::Result<()> {
    write_raw_header(grid.height(), grid.width(), out)?;
    write_raw_samples(grid.data(), out)
}

pub(crate) fn write_raw_header(height: usize, width: usize, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(width as u32).to_le_bytes())
}

pub(crate) fn write_raw_samples(samples: &[f64], out: &mut impl Write) -> std::io::Result<()> {
    for &v in samples {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn write_csv(grid: &ImageGrid, out: &mut impl Write) -> std::io::Result<()> {
    for i in 0..grid.height() {
        let row = grid.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a `raw_f32` file as `(height, width, samples)` without validating the samples.
pub(crate) fn read_raw_f32_parts(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 8 {
        return Err(decode_err("file shorter than the 8-byte header".into()));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| decode_err("header dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(decode_err(format!(
            "header declares {height}x{width} ({expected} bytes) but body holds {} bytes",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((height, width, samples))
}

pub fn load_raw_f32(path: impl AsRef<Path>, domain: ValueDomain) -> Result<ImageGrid> {
    let (h, w, data) = read_raw_f32_parts(path.as_ref())?;
    ImageGrid::new(h, w, data, domain)
}

/// Loads either a grayscale image (`.pgm`/`.png`) or a `raw_f32` map.
pub fn load_any(path: impl AsRef<Path>, domain: ValueDomain) -> Result<ImageGrid> {
    let path = path.as_ref();
    match MapFormat::from_path(path) {
        Some(MapFormat::RawF32) => load_raw_f32(path, domain),
        _ => load_image_auto(path)?.with_domain(domain),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pgm_8bit_normalizes() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        std::fs::write(&path, bytes).unwrap();
        let g = load_image(&path, ImageFormatKind::Pgm).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(g.domain(), ValueDomain::Intensity);
    }

    #[test]
    fn pgm_16bit_normalizes() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n65535\n".to_vec();
        for v in [0u16, 65535, 32768, 1] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let g = load_image(&path, ImageFormatKind::Pgm).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 32768.0 / 65535.0, 1.0 / 65535.0]);
    }

    #[test]
    fn one_by_one_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, b"P5\n1 1\n255\n\x80").unwrap();
        assert!(matches!(
            load_image(&path, ImageFormatKind::Pgm),
            Err(Error::InvalidDimensions { height: 1, width: 1 })
        ));
    }

    #[test]
    fn png16_max_maps_to_one_and_back() {
        let dir = tmp();
        let path = dir.path().join("a.png");
        let g = ImageGrid::filled(3, 4, 1.0, ValueDomain::Confidence).unwrap();
        save_map(&g, &path, MapFormat::Png16).unwrap();
        let raw = image::open(&path).unwrap().into_luma16();
        assert!(raw.pixels().all(|p| p.0[0] == 65535));
        let back = load_image(&path, ImageFormatKind::Png).unwrap();
        assert!(back.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn color_png_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("c.png");
        image::RgbImage::new(4, 4).save(&path).unwrap();
        assert!(matches!(
            load_image(&path, ImageFormatKind::Png),
            Err(Error::UnsupportedImage { .. })
        ));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_image("/nonexistent/x.png", ImageFormatKind::Png).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn csv_layout() {
        let dir = tmp();
        let path = dir.path().join("m.csv");
        let g = ImageGrid::new(3, 2, vec![0.0, 0.5, 0.25, 1.0, 0.1, 0.2], ValueDomain::Confidence).unwrap();
        save_map(&g, &path, MapFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "0,0.5\n0.25,1\n0.1,0.2\n");
    }

    #[test]
    fn raw_header_and_roundtrip() {
        let dir = tmp();
        let path = dir.path().join("m.raw");
        let g = ImageGrid::new(2, 3, vec![0.0, 0.5, 0.25, 1.0, 0.125, 0.75], ValueDomain::Confidence).unwrap();
        save_map(&g, &path, MapFormat::RawF32).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 + 6 * 4);
        assert_eq!(&bytes[0..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(load_raw_f32(&path, ValueDomain::Confidence).unwrap(), g);
    }

    #[test]
    fn truncated_raw_is_decode_error() {
        let dir = tmp();
        let path = dir.path().join("m.raw");
        std::fs::write(&path, [2, 0, 0, 0, 2, 0, 0, 0, 0, 0]).unwrap();
        assert!(matches!(
            load_raw_f32(&path, ValueDomain::Unconstrained),
            Err(Error::Decode { .. })
        ));
    }
}
