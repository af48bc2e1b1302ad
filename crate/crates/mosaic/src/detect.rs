//! Scale-invariant interest point detection via Difference-of-Gaussian
//! scale-space extrema.
//!
//! A Gaussian pyramid is built per octave, adjacent levels are subtracted,
//! and 3x3x3 local extrema of the band-pass stack are refined to subpixel
//! position and scale by a quadratic fit, then filtered by contrast and by
//! the principal-curvature edge ratio.

use crate::raster::{gaussian_blur, GrayImage};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Smallest image dimension the detector accepts.
pub const MIN_IMAGE_DIM: usize = 32;

/// Blur level assumed for the input image.
const ASSUMED_INPUT_BLUR: f64 = 0.5;

/// Margin (in octave pixels) excluded from the extremum scan.
const SCAN_BORDER: usize = 2;

const MAX_INTERP_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("image {width}x{height} is below the {MIN_IMAGE_DIM} px minimum dimension")]
    ImageTooSmall { width: usize, height: usize },
}

/// A detected interest point in original-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Characteristic scale in pixels: the σ of the coarser Gaussian bounding
    /// the band-pass level at the extremum.
    pub scale: f64,
    /// Interpolated DoG value at the extremum (signed).
    pub response: f32,
}

/// Scale-space construction and filtering parameters.
#[derive(Debug, Clone, Copy)]
pub struct ScaleSpaceConfig {
    /// Number of octaves; `None` selects `floor(log2(min_dim)) - 3`.
    pub octaves: Option<usize>,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Minimum interpolated |DoG| (scaled by scales_per_octave) for a keypoint.
    pub contrast_threshold: f32,
    /// Maximum principal-curvature ratio before a point counts as an edge.
    pub edge_ratio_threshold: f64,
    /// Keep at most this many keypoints, strongest responses first.
    pub max_keypoints: usize,
}

impl Default for ScaleSpaceConfig {
    fn default() -> Self {
        Self {
            octaves: None,
            scales_per_octave: 3,
            base_sigma: 1.6,
            contrast_threshold: 0.03,
            edge_ratio_threshold: 10.0,
            max_keypoints: 1000,
        }
    }
}

/// Every second pixel; output dimensions `ceil(n / 2)`.
fn downsample_half(img: &GrayImage) -> GrayImage {
    let (w, h) = ((img.width() + 1) / 2, (img.height() + 1) / 2);
    GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y))
}

struct Octave {
    dogs: Vec<GrayImage>,
    /// 2^octave_index, the sampling factor back to original coordinates.
    factor: f64,
}

fn build_octaves(img: &GrayImage, cfg: &ScaleSpaceConfig, n_octaves: usize) -> Vec<Octave> {
    let s = cfg.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let seed_sigma = (cfg.base_sigma * cfg.base_sigma - ASSUMED_INPUT_BLUR * ASSUMED_INPUT_BLUR)
        .max(0.0)
        .sqrt();
    let mut base = gaussian_blur(img, seed_sigma);

    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(base.clone());
        for i in 1..s + 3 {
            // Incremental blur taking level i-1 (σ base·k^(i-1)) to σ base·k^i.
            let prev_sigma = cfg.base_sigma * k.powi(i as i32 - 1);
            let delta = prev_sigma * (k * k - 1.0).sqrt();
            gaussians.push(gaussian_blur(&gaussians[i - 1], delta));
        }
        let dogs = (0..s + 2)
            .map(|i| {
                let hi = &gaussians[i + 1];
                let lo = &gaussians[i];
                let data = hi
                    .data()
                    .iter()
                    .zip(lo.data())
                    .map(|(a, b)| a - b)
                    .collect();
                GrayImage::from_vec(lo.width(), lo.height(), data).expect("levels share dimensions")
            })
            .collect();
        // Level s has blur 2·base, seeding the next octave at half resolution.
        base = downsample_half(&gaussians[s]);
        octaves.push(Octave {
            dogs,
            factor: (1u64 << o) as f64,
        });
    }
    octaves
}

#[inline]
fn is_extremum(dogs: &[GrayImage], lvl: usize, x: usize, y: usize, floor: f32) -> bool {
    let v = dogs[lvl].get(x, y);
    if v.abs() < floor {
        return false;
    }
    let positive = v > 0.0;
    for (li, img) in dogs[lvl - 1..=lvl + 1].iter().enumerate() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if li == 1 && dx == 0 && dy == 0 {
                    continue;
                }
                let u = img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                if (positive && v <= u) || (!positive && v >= u) {
                    return false;
                }
            }
        }
    }
    true
}

struct Refined {
    x: f64,
    y: f64,
    lvl: f64,
    contrast: f32,
    /// Integer location the fit converged at, for the edge test.
    at: (usize, usize, usize),
}

fn refine_extremum(dogs: &[GrayImage], mut lvl: usize, mut x: usize, mut y: usize) -> Option<Refined> {
    let w = dogs[0].width();
    let h = dogs[0].height();
    let n_lvls = dogs.len();
    for _ in 0..MAX_INTERP_STEPS {
        let d = |l: usize, xx: i64, yy: i64| dogs[l].get(xx as usize, yy as usize) as f64;
        let (xi, yi) = (x as i64, y as i64);
        let v = d(lvl, xi, yi);

        let gx = (d(lvl, xi + 1, yi) - d(lvl, xi - 1, yi)) / 2.0;
        let gy = (d(lvl, xi, yi + 1) - d(lvl, xi, yi - 1)) / 2.0;
        let gs = (d(lvl + 1, xi, yi) - d(lvl - 1, xi, yi)) / 2.0;

        let hxx = d(lvl, xi + 1, yi) + d(lvl, xi - 1, yi) - 2.0 * v;
        let hyy = d(lvl, xi, yi + 1) + d(lvl, xi, yi - 1) - 2.0 * v;
        let hss = d(lvl + 1, xi, yi) + d(lvl - 1, xi, yi) - 2.0 * v;
        let hxy = (d(lvl, xi + 1, yi + 1) - d(lvl, xi - 1, yi + 1) - d(lvl, xi + 1, yi - 1)
            + d(lvl, xi - 1, yi - 1))
            / 4.0;
        let hxs = (d(lvl + 1, xi + 1, yi) - d(lvl + 1, xi - 1, yi) - d(lvl - 1, xi + 1, yi)
            + d(lvl - 1, xi - 1, yi))
            / 4.0;
        let hys = (d(lvl + 1, xi, yi + 1) - d(lvl + 1, xi, yi - 1) - d(lvl - 1, xi, yi + 1)
            + d(lvl - 1, xi, yi - 1))
            / 4.0;

        let hess = Matrix3::new(hxx, hxy, hxs, hxy, hyy, hys, hxs, hys, hss);
        let grad = Vector3::new(gx, gy, gs);
        let offset = hess.try_inverse()? * -grad;
        let (ox, oy, os) = (offset[0], offset[1], offset[2]);

        if ox.abs() < 0.5 && oy.abs() < 0.5 && os.abs() < 0.5 {
            let contrast = v + 0.5 * grad.dot(&offset);
            return Some(Refined {
                x: x as f64 + ox,
                y: y as f64 + oy,
                lvl: lvl as f64 + os,
                contrast: contrast as f32,
                at: (lvl, x, y),
            });
        }
        // Extremum belongs to a neighboring sample; shift and retry.
        x = (x as i64 + ox.round().clamp(-1.0, 1.0) as i64) as usize;
        y = (y as i64 + oy.round().clamp(-1.0, 1.0) as i64) as usize;
        let next = lvl as i64 + os.round().clamp(-1.0, 1.0) as i64;
        if next < 1
            || next > n_lvls as i64 - 2
            || x < SCAN_BORDER
            || x >= w - SCAN_BORDER
            || y < SCAN_BORDER
            || y >= h - SCAN_BORDER
        {
            return None;
        }
        lvl = next as usize;
    }
    None
}

fn is_edge_like(dog: &GrayImage, x: usize, y: usize, edge_ratio: f64) -> bool {
    let d = |xx: i64, yy: i64| dog.get(xx as usize, yy as usize) as f64;
    let (xi, yi) = (x as i64, y as i64);
    let v2 = 2.0 * d(xi, yi);
    let hxx = d(xi + 1, yi) + d(xi - 1, yi) - v2;
    let hyy = d(xi, yi + 1) + d(xi, yi - 1) - v2;
    let hxy = (d(xi + 1, yi + 1) - d(xi - 1, yi + 1) - d(xi + 1, yi - 1) + d(xi - 1, yi - 1)) / 4.0;
    let tr = hxx + hyy;
    let det = hxx * hyy - hxy * hxy;
    if det <= 0.0 {
        return true;
    }
    tr * tr * edge_ratio > (edge_ratio + 1.0).powi(2) * det
}

/// Detects DoG extrema, sorted by descending |response| and capped at
/// `cfg.max_keypoints`. Keypoints closer than 3σ to the image border are
/// discarded.
pub fn detect_keypoints(img: &GrayImage, cfg: &ScaleSpaceConfig) -> Result<Vec<Keypoint>, DetectError> {
    let (w, h) = (img.width(), img.height());
    let min_dim = w.min(h);
    if min_dim < MIN_IMAGE_DIM {
        return Err(DetectError::ImageTooSmall { width: w, height: h });
    }

    let s = cfg.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let default_octaves = ((min_dim as f64).log2().floor() as usize).saturating_sub(3).max(1);
    // Coarsest octave must still fit the scan window.
    let fit_limit = (min_dim as f64 / (2 * SCAN_BORDER + 3) as f64).log2().floor() as usize + 1;
    let n_octaves = cfg.octaves.unwrap_or(default_octaves).clamp(1, fit_limit.max(1));

    let octaves = build_octaves(img, cfg, n_octaves);
    let prefilter = 0.5 * cfg.contrast_threshold / s as f32;

    let mut keypoints = Vec::new();
    for oct in &octaves {
        let (ow, oh) = (oct.dogs[0].width(), oct.dogs[0].height());
        if ow < 2 * SCAN_BORDER + 3 || oh < 2 * SCAN_BORDER + 3 {
            continue;
        }
        for lvl in 1..=s {
            for y in SCAN_BORDER..oh - SCAN_BORDER {
                for x in SCAN_BORDER..ow - SCAN_BORDER {
                    if !is_extremum(&oct.dogs, lvl, x, y, prefilter) {
                        continue;
                    }
                    let Some(r) = refine_extremum(&oct.dogs, lvl, x, y) else {
                        continue;
                    };
                    if r.contrast.abs() * (s as f32) < cfg.contrast_threshold {
                        continue;
                    }
                    if is_edge_like(&oct.dogs[r.at.0], r.at.1, r.at.2, cfg.edge_ratio_threshold) {
                        continue;
                    }
                    let kx = r.x * oct.factor;
                    let ky = r.y * oct.factor;
                    // Scale of the coarser Gaussian bounding the band at the extremum.
                    let scale = cfg.base_sigma * oct.factor * k.powf(r.lvl + 1.0);
                    let margin = 3.0 * scale;
                    if kx < margin
                        || ky < margin
                        || kx > (w - 1) as f64 - margin
                        || ky > (h - 1) as f64 - margin
                    {
                        continue;
                    }
                    keypoints.push(Keypoint {
                        x: kx,
                        y: ky,
                        scale,
                        response: r.contrast,
                    });
                }
            }
        }
    }

    keypoints.sort_unstable_by(|a, b| {
        b.response
            .abs()
            .total_cmp(&a.response.abs())
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.scale.total_cmp(&b.scale))
    });
    keypoints.truncate(cfg.max_keypoints);
    Ok(keypoints)
}
