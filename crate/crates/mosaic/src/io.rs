//! Frame ingestion and image file IO.
//!
//! Frames are read from PNG or binary PPM (P6) files. A sequence is ingested
//! from a directory (taking every `.png`/`.ppm` inside) or from a glob
//! pattern; files are sorted lexicographically and the position defines the
//! frame index.

use crate::raster::{Frame, GrayImage, RasterError};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("failed to encode {path}: {source}")]
    Encode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("invalid glob pattern {pattern}: {source}")]
    Pattern {
        pattern: String,
        source: glob::PatternError,
    },
    #[error("no frames matched '{0}'")]
    NoFrames(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Decodes a PNG or PPM file into a [`Frame`] with the given index.
pub fn read_frame(path: &Path, index: usize) -> Result<Frame, IoError> {
    let img = image::open(path)
        .map_err(|source| IoError::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Frame::new(index, w as usize, h as usize, img.into_raw())?)
}

/// Encodes a frame as PNG.
pub fn write_frame_png(path: &Path, frame: &Frame) -> Result<(), IoError> {
    image::save_buffer(
        path,
        frame.data(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|source| IoError::Encode {
        path: path.to_path_buf(),
        source,
    })
}

/// Encodes a frame as binary PPM (P6, maxval 255).
pub fn write_frame_ppm(path: &Path, frame: &Frame) -> Result<(), IoError> {
    let wrap = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    write!(out, "P6\n{} {}\n255\n", frame.width(), frame.height()).map_err(wrap)?;
    out.write_all(frame.data()).map_err(wrap)?;
    out.flush().map_err(wrap)
}

/// Writes a frame in the format implied by the extension (`.ppm` for P6,
/// anything else PNG).
pub fn write_frame(path: &Path, frame: &Frame) -> Result<(), IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ppm") => write_frame_ppm(path, frame),
        _ => write_frame_png(path, frame),
    }
}

/// Writes a `[0, 1]` grayscale image as an 8-bit PNG (debug output).
pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<(), IoError> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::save_buffer(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|source| IoError::Encode {
        path: path.to_path_buf(),
        source,
    })
}

fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
}

/// Resolves an input argument (directory or glob pattern) to a
/// lexicographically sorted list of frame files.
pub fn resolve_frame_paths(input: &str) -> Result<Vec<PathBuf>, IoError> {
    let as_path = Path::new(input);
    let mut paths: Vec<PathBuf> = if as_path.is_dir() {
        std::fs::read_dir(as_path)
            .map_err(|source| IoError::File {
                path: as_path.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_frame_file(p))
            .collect()
    } else {
        glob::glob(input)
            .map_err(|source| IoError::Pattern {
                pattern: input.to_string(),
                source,
            })?
            .filter_map(|e| e.ok())
            .filter(|p| p.is_file())
            .collect()
    };
    paths.sort();
    if paths.is_empty() {
        return Err(IoError::NoFrames(input.to_string()));
    }
    Ok(paths)
}

/// Loads every frame matched by a directory or glob input, indices assigned
/// by lexicographic order.
pub fn load_frames(input: &str) -> Result<Vec<Frame>, IoError> {
    resolve_frame_paths(input)?
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect()
}
