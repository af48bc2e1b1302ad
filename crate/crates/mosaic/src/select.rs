//! Keyframe selection by mutual offset.
//!
//! The offset between a pair of frames is measured with SAD block matching:
//! a reference patch is compared against horizontally shifted target blocks
//! and the displacement with the lowest sum of absolute differences wins.
//! Frames are kept when their offset from the last kept frame reaches a
//! threshold, so near-duplicates are discarded before registration.

use crate::raster::{to_grayscale, Frame, GrayImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(
        "block match patch out of bounds: center ({cx},{cy}), block {block}, range {range} in {width}x{height}"
    )]
    PatchOutOfBounds {
        cx: usize,
        cy: usize,
        block: usize,
        range: usize,
        width: usize,
        height: usize,
    },
}

/// Configuration for SAD block matching between a frame pair.
#[derive(Debug, Clone, Copy)]
pub struct BlockMatchConfig {
    /// Side of the square reference block in pixels; odd, >= 3.
    pub block_size: usize,
    /// Maximum horizontal displacement tested, in pixels.
    pub search_range: usize,
    /// Center of the reference patch; image center when `None`.
    pub patch_center: Option<(usize, usize)>,
}

impl Default for BlockMatchConfig {
    fn default() -> Self {
        Self {
            block_size: 21,
            search_range: 64,
            patch_center: None,
        }
    }
}

/// Measured mutual offset between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetMeasurement {
    /// Signed horizontal displacement in pixels, in `[-search_range, +search_range]`.
    pub displacement: i64,
    /// SAD of the best-matching block, on `[0, 1]` intensities.
    pub sad: f64,
}

fn block_sad(reference: &GrayImage, target: &GrayImage, x0: usize, y0: usize, shift: i64, n: usize) -> f64 {
    let mut acc = 0.0f64;
    for dy in 0..n {
        for dx in 0..n {
            let r = reference.get(x0 + dx, y0 + dy);
            let t = target.get((x0 as i64 + shift) as usize + dx, y0 + dy);
            acc += (r - t).abs() as f64;
        }
    }
    acc
}

/// Finds the horizontal displacement of the reference patch inside the target
/// image that minimizes the SAD over the block. Ties break toward smaller
/// |displacement|, then toward the negative one.
pub fn sad_block_offset(
    reference: &GrayImage,
    target: &GrayImage,
    cfg: &BlockMatchConfig,
) -> Result<OffsetMeasurement, SelectError> {
    debug_assert_eq!(reference.width(), target.width());
    debug_assert_eq!(reference.height(), target.height());
    let (w, h) = (reference.width(), reference.height());
    let n = cfg.block_size;
    let half = n / 2;
    let (cx, cy) = cfg.patch_center.unwrap_or((w / 2, h / 2));

    let oob = || SelectError::PatchOutOfBounds {
        cx,
        cy,
        block: n,
        range: cfg.search_range,
        width: w,
        height: h,
    };
    if cx < half || cy < half || cy + half >= h {
        return Err(oob());
    }
    let x0 = cx - half;
    let y0 = cy - half;
    // Every tested shift must keep the target block inside the image.
    if (x0 as i64) < cfg.search_range as i64 || x0 + n - 1 + cfg.search_range >= w {
        return Err(oob());
    }

    let mut best = OffsetMeasurement {
        displacement: 0,
        sad: block_sad(reference, target, x0, y0, 0, n),
    };
    // Visit displacements in tie-break order (0, -1, +1, -2, +2, ...) and
    // accept only strict improvements.
    for mag in 1..=cfg.search_range as i64 {
        for d in [-mag, mag] {
            let sad = block_sad(reference, target, x0, y0, d, n);
            if sad < best.sad {
                best = OffsetMeasurement {
                    displacement: d,
                    sad,
                };
            }
        }
    }
    Ok(best)
}

/// Scans the sequence and keeps frames whose measured |offset| from the most
/// recently kept frame first reaches `offset_threshold` (or saturates the
/// search range). The first frame is always kept; the last frame is appended
/// if not already kept. Returns indices into `frames`.
pub fn select_frame_indices(
    frames: &[Frame],
    cfg: &BlockMatchConfig,
    offset_threshold: usize,
) -> Result<Vec<usize>, SelectError> {
    assert!(!frames.is_empty(), "select_frames requires at least one frame");
    let mut kept = vec![0usize];
    if frames.len() == 1 {
        return Ok(kept);
    }

    let mut reference = to_grayscale(&frames[0]);
    for i in 1..frames.len() {
        let target = to_grayscale(&frames[i]);
        let m = sad_block_offset(&reference, &target, cfg)?;
        let mag = m.displacement.unsigned_abs() as usize;
        if mag >= offset_threshold || mag == cfg.search_range {
            kept.push(i);
            reference = target;
        }
    }
    if *kept.last().unwrap() != frames.len() - 1 {
        kept.push(frames.len() - 1);
    }
    Ok(kept)
}

/// Like [`select_frame_indices`], returning the kept frames themselves.
pub fn select_frames(
    frames: &[Frame],
    cfg: &BlockMatchConfig,
    offset_threshold: usize,
) -> Result<Vec<Frame>, SelectError> {
    Ok(select_frame_indices(frames, cfg, offset_threshold)?
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}
