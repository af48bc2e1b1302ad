//! Multi-band blending with Gaussian/Laplacian pyramids.
//!
//! Two registered images are each decomposed into band-pass levels; per
//! level the bands are mixed under the matching Gaussian-pyramid level of a
//! weight mask and the combined pyramid is collapsed. Low frequencies blend
//! over a wide spatial range, high frequencies over a narrow one, which
//! suppresses ghosting where registration is imperfect.
//!
//! Reduce/expand use the 5-tap binomial kernel `[1,4,6,4,1]/16` with edge
//! replication; collapse is the exact inverse of the Laplacian decomposition
//! in real arithmetic.

use crate::raster::GrayImage;
use thiserror::Error;

const KERNEL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("{requested} pyramid levels would shrink {width}x{height} below 2x2")]
    TooManyLevels {
        requested: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PyramidKind {
    Gaussian,
    Laplacian,
}

/// A stack of images, each level downsampled 2x (ceil) from the previous.
/// A Laplacian pyramid's last level is the Gaussian residual.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
    pub kind: PyramidKind,
}

/// Blend weights in `[0, 1]`; 1 selects image 1.
#[derive(Debug, Clone)]
pub struct BlendMask {
    weights: GrayImage,
}

impl BlendMask {
    /// Wraps a weight image, clamping into `[0, 1]`.
    pub fn new(weights: GrayImage) -> Self {
        let data = weights.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self {
            weights: GrayImage::from_vec(weights.width(), weights.height(), data)
                .expect("dimensions preserved"),
        }
    }

    pub fn weights(&self) -> &GrayImage {
        &self.weights
    }
}

fn reduce_rows(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let out_w = (w + 1) / 2;
    GrayImage::from_fn(out_w, h, |x, y| {
        let mut acc = 0.0f32;
        for (i, &k) in KERNEL.iter().enumerate() {
            let s = (2 * x as i64 + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
            acc += k * img.get(s, y);
        }
        acc
    })
}

fn transpose(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.height(), img.width(), |x, y| img.get(y, x))
}

/// Downsamples by 2 (ceil dimensions) with the binomial kernel.
pub fn reduce(img: &GrayImage) -> GrayImage {
    transpose(&reduce_rows(&transpose(&reduce_rows(img))))
}

fn expand_rows(img: &GrayImage, out_w: usize) -> GrayImage {
    let w = img.width() as i64;
    GrayImage::from_fn(out_w, img.height(), |x, y| {
        let mut acc = 0.0f32;
        for (i, &k) in KERNEL.iter().enumerate() {
            let s = x as i64 - (i as i64 - 2);
            if s.rem_euclid(2) == 0 {
                let idx = (s / 2).clamp(0, w - 1) as usize;
                acc += k * img.get(idx, y);
            }
        }
        2.0 * acc
    })
}

/// Upsamples to the given dimensions (which must be the size this level was
/// reduced from, i.e. in `[2w-1, 2w]` per axis).
pub fn expand(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    transpose(&expand_rows(&transpose(&expand_rows(img, out_w)), out_h))
}

fn check_levels(width: usize, height: usize, n_levels: usize) -> Result<(), BlendError> {
    let (mut w, mut h) = (width, height);
    for _ in 1..n_levels.max(1) {
        w = (w + 1) / 2;
        h = (h + 1) / 2;
    }
    if n_levels == 0 || w < 2 || h < 2 {
        return Err(BlendError::TooManyLevels {
            requested: n_levels,
            width,
            height,
        });
    }
    Ok(())
}

/// Largest level count keeping the coarsest level at least `min_size` on its
/// short side.
pub fn max_levels(width: usize, height: usize, min_size: usize) -> usize {
    let mut n = 1;
    let (mut w, mut h) = (width, height);
    while w / 2 >= min_size && h / 2 >= min_size {
        w /= 2;
        h /= 2;
        n += 1;
    }
    n
}

pub fn build_gaussian_pyramid(img: &GrayImage, n_levels: usize) -> Result<Pyramid, BlendError> {
    check_levels(img.width(), img.height(), n_levels)?;
    let mut levels = Vec::with_capacity(n_levels);
    levels.push(img.clone());
    for _ in 1..n_levels {
        levels.push(reduce(levels.last().unwrap()));
    }
    Ok(Pyramid {
        levels,
        kind: PyramidKind::Gaussian,
    })
}

/// Band-pass decomposition: `L_k = G_k - expand(G_{k+1})`, with the coarsest
/// Gaussian level kept as the residual.
pub fn build_laplacian_pyramid(img: &GrayImage, n_levels: usize) -> Result<Pyramid, BlendError> {
    let gaussian = build_gaussian_pyramid(img, n_levels)?;
    let g = &gaussian.levels;
    let mut levels = Vec::with_capacity(n_levels);
    for k in 0..n_levels - 1 {
        let up = expand(&g[k + 1], g[k].width(), g[k].height());
        let data = g[k]
            .data()
            .iter()
            .zip(up.data())
            .map(|(a, b)| a - b)
            .collect();
        levels.push(GrayImage::from_vec(g[k].width(), g[k].height(), data).expect("dims match"));
    }
    levels.push(g[n_levels - 1].clone());
    Ok(Pyramid {
        levels,
        kind: PyramidKind::Laplacian,
    })
}

/// Inverts [`build_laplacian_pyramid`]: repeatedly expands and adds the
/// band-pass levels back.
pub fn collapse(pyramid: &Pyramid) -> GrayImage {
    debug_assert_eq!(pyramid.kind, PyramidKind::Laplacian);
    let levels = &pyramid.levels;
    let mut acc = levels.last().expect("pyramid has levels").clone();
    for k in (0..levels.len() - 1).rev() {
        let up = expand(&acc, levels[k].width(), levels[k].height());
        let data = levels[k]
            .data()
            .iter()
            .zip(up.data())
            .map(|(a, b)| a + b)
            .collect();
        acc = GrayImage::from_vec(levels[k].width(), levels[k].height(), data).expect("dims match");
    }
    acc
}

/// Multi-band blend: per level `L_k = P1_k·G_k + P2_k·(1-G_k)` where `G` is
/// the Gaussian pyramid of the mask; the combined pyramid is collapsed.
/// Output is real-valued; clamp only at materialization.
pub fn blend_multiband(
    img1: &GrayImage,
    img2: &GrayImage,
    mask: &BlendMask,
    n_levels: usize,
) -> Result<GrayImage, BlendError> {
    let (w, h) = (img1.width(), img1.height());
    for other in [img2, mask.weights()] {
        if other.width() != w || other.height() != h {
            return Err(BlendError::DimensionMismatch(w, h, other.width(), other.height()));
        }
    }

    let p1 = build_laplacian_pyramid(img1, n_levels)?;
    let p2 = build_laplacian_pyramid(img2, n_levels)?;
    let gm = build_gaussian_pyramid(mask.weights(), n_levels)?;

    let levels = p1
        .levels
        .iter()
        .zip(&p2.levels)
        .zip(&gm.levels)
        .map(|((l1, l2), g)| {
            let data = l1
                .data()
                .iter()
                .zip(l2.data())
                .zip(g.data())
                .map(|((a, b), w)| a * w + b * (1.0 - w))
                .collect();
            GrayImage::from_vec(l1.width(), l1.height(), data).expect("dims match")
        })
        .collect();

    Ok(collapse(&Pyramid {
        levels,
        kind: PyramidKind::Laplacian,
    }))
}
