//! Centre-Symmetric Local Binary Pattern codes and grid histogram descriptors.
//!
//! A CS-LBP code compares the `p` samples on a radius-`r` circle pairwise
//! across the center: bit `i` fires when `g_i - g_{i+p/2}` exceeds a small
//! threshold `t`, giving `2^(p/2)` patterns (16 for p = 8). The descriptor
//! resamples the keypoint's measurement region to a canonical patch, codes
//! every interior pixel, and accumulates per-cell histograms over an
//! `m x m` Cartesian grid.

use crate::detect::Keypoint;
use crate::raster::GrayImage;
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Canonical patch pixels per grid cell.
const CELL_PIXELS: usize = 8;

#[derive(Debug, Error)]
pub enum CslbpError {
    #[error("sampling circle of radius {radius} at ({cx},{cy}) exits the {width}x{height} patch")]
    OutOfBounds {
        cx: usize,
        cy: usize,
        radius: f64,
        width: usize,
        height: usize,
    },
    #[error("measurement region (side {side:.1}) around ({x:.1},{y:.1}) exits the {width}x{height} image")]
    RegionOutOfBounds {
        x: f64,
        y: f64,
        side: f64,
        width: usize,
        height: usize,
    },
}

/// CS-LBP code and descriptor-grid parameters.
#[derive(Debug, Clone, Copy)]
pub struct CslbpParams {
    /// Sampling circle radius in patch pixels.
    pub radius: f64,
    /// Samples on the circle; even, >= 4.
    pub neighbors: usize,
    /// Gray-level difference threshold on `[0, 1]` intensities.
    pub threshold: f32,
    /// Grid cells per side.
    pub grid: usize,
    /// Multiplier mapping keypoint scale to measurement-region side.
    pub region_scale: f64,
    /// Minimum measurement-region side in pixels.
    pub min_region: f64,
    /// Bilinear vote sharing across cell boundaries (disable for oracle tests).
    pub vote_sharing: bool,
}

impl Default for CslbpParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            neighbors: 8,
            threshold: 0.01,
            grid: 4,
            region_scale: 12.0,
            min_region: 24.0,
            vote_sharing: true,
        }
    }
}

impl CslbpParams {
    /// Number of distinct codes, `2^(p/2)`.
    pub fn code_count(&self) -> usize {
        1 << (self.neighbors / 2)
    }

    /// Descriptor length, `m² · 2^(p/2)`.
    pub fn descriptor_len(&self) -> usize {
        self.grid * self.grid * self.code_count()
    }

    /// Side of the canonical resampled patch: the coded area (`m` cells of
    /// [`CELL_PIXELS`]) plus the sampling-circle margin.
    pub fn patch_side(&self) -> usize {
        self.grid * CELL_PIXELS + 2 * self.radius.ceil() as usize
    }

    fn region_side(&self, scale: f64) -> f64 {
        (self.region_scale * scale).max(self.min_region)
    }
}

/// A normalized CS-LBP grid histogram attached to its keypoint.
#[derive(Debug, Clone)]
pub struct Descriptor {
    pub keypoint: Keypoint,
    values: Vec<f32>,
}

impl Descriptor {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean distance between two descriptors.
    pub fn distance(&self, other: &Descriptor) -> f32 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt()
    }

    #[cfg(test)]
    pub(crate) fn from_raw(keypoint: Keypoint, values: Vec<f32>) -> Self {
        Self { keypoint, values }
    }
}

/// CS-LBP code of the pixel at `(cx, cy)`: bit `i` is set iff
/// `g_i - g_{i+p/2} > t` over `p` equally spaced samples on the radius-`r`
/// circle, bilinearly interpolated.
pub fn cslbp_code(
    patch: &GrayImage,
    cx: usize,
    cy: usize,
    params: &CslbpParams,
) -> Result<u32, CslbpError> {
    let r = params.radius;
    let (w, h) = (patch.width(), patch.height());
    if (cx as f64) < r || (cy as f64) < r || cx as f64 + r > (w - 1) as f64 || cy as f64 + r > (h - 1) as f64 {
        return Err(CslbpError::OutOfBounds {
            cx,
            cy,
            radius: r,
            width: w,
            height: h,
        });
    }

    let p = params.neighbors;
    let half = p / 2;
    let mut samples = vec![0f32; p];
    for (i, s) in samples.iter_mut().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / p as f64;
        let sx = cx as f64 + r * angle.cos();
        let sy = cy as f64 + r * angle.sin();
        *s = patch.sample_bilinear_clamped(sx, sy);
    }

    let mut code = 0u32;
    for i in 0..half {
        if samples[i] - samples[i + half] > params.threshold {
            code |= 1 << i;
        }
    }
    Ok(code)
}

/// Raw (pre-normalization) grid histogram of a canonical patch. Each coded
/// pixel votes a total weight of 1, bilinearly shared between adjacent cells
/// when `vote_sharing` is on.
fn patch_histogram(patch: &GrayImage, params: &CslbpParams) -> Vec<f32> {
    let m = params.grid;
    let codes = params.code_count();
    let margin = params.radius.ceil() as usize;
    let cell_px = CELL_PIXELS as f64;
    let mut hist = vec![0f32; m * m * codes];

    for y in margin..patch.height() - margin {
        for x in margin..patch.width() - margin {
            let code = cslbp_code(patch, x, y, params).expect("coded pixel circle is in bounds") as usize;
            if params.vote_sharing {
                // Fractional cell coordinates relative to cell centers.
                let tu = ((x - margin) as f64 + 0.5) / cell_px - 0.5;
                let tv = ((y - margin) as f64 + 0.5) / cell_px - 0.5;
                let iu = tu.floor();
                let iv = tv.floor();
                let (fu, fv) = ((tu - iu) as f32, (tv - iv) as f32);
                for (du, wu) in [(0i64, 1.0 - fu), (1, fu)] {
                    for (dv, wv) in [(0i64, 1.0 - fv), (1, fv)] {
                        let cu = (iu as i64 + du).clamp(0, m as i64 - 1) as usize;
                        let cv = (iv as i64 + dv).clamp(0, m as i64 - 1) as usize;
                        hist[(cv * m + cu) * codes + code] += wu * wv;
                    }
                }
            } else {
                let cu = (((x - margin) as f64) / cell_px) as usize;
                let cv = (((y - margin) as f64) / cell_px) as usize;
                hist[(cv.min(m - 1) * m + cu.min(m - 1)) * codes + code] += 1.0;
            }
        }
    }
    hist
}

fn normalize(mut values: Vec<f32>) -> Vec<f32> {
    let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-12 {
        return values;
    }
    for v in values.iter_mut() {
        *v = (*v / norm).min(0.2);
    }
    let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm >= 1e-12 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
    values
}

/// Builds the descriptor for one keypoint: the measurement region
/// (`region_scale · σ`, at least `min_region` px) is resampled to the
/// canonical patch, coded, histogrammed per cell, then L2-normalized with
/// a 0.2 clip and renormalization.
pub fn describe(img: &GrayImage, kp: &Keypoint, params: &CslbpParams) -> Result<Descriptor, CslbpError> {
    let side = params.region_side(kp.scale);
    let half = side / 2.0;
    let (w, h) = (img.width(), img.height());
    if kp.x - half < 0.0 || kp.y - half < 0.0 || kp.x + half > (w - 1) as f64 || kp.y + half > (h - 1) as f64 {
        return Err(CslbpError::RegionOutOfBounds {
            x: kp.x,
            y: kp.y,
            side,
            width: w,
            height: h,
        });
    }

    let n = params.patch_side();
    let step = side / n as f64;
    let origin = (n as f64 - 1.0) / 2.0;
    let patch = GrayImage::from_fn(n, n, |px, py| {
        let sx = kp.x + (px as f64 - origin) * step;
        let sy = kp.y + (py as f64 - origin) * step;
        img.sample_bilinear_clamped(sx, sy)
    });

    Ok(Descriptor {
        keypoint: *kp,
        values: normalize(patch_histogram(&patch, params)),
    })
}

/// Descriptors for every keypoint whose measurement region fits in the image;
/// keypoints that do not fit are skipped.
pub fn describe_all(img: &GrayImage, keypoints: &[Keypoint], params: &CslbpParams) -> Vec<Descriptor> {
    use rayon::prelude::*;
    keypoints
        .par_iter()
        .filter_map(|kp| describe(img, kp, params).ok())
        .collect()
}

#[derive(Serialize)]
struct DumpHeader {
    count: usize,
    dim: usize,
    dtype: &'static str,
    layout: &'static str,
}

/// Writes descriptors as `<prefix>.bin` (little-endian f32, row-major) plus
/// a `<prefix>.json` header, for offline analysis.
pub fn dump_descriptors(prefix: &Path, descriptors: &[Descriptor]) -> std::io::Result<()> {
    let dim = descriptors.first().map_or(0, |d| d.len());
    let mut bin = std::io::BufWriter::new(std::fs::File::create(prefix.with_extension("bin"))?);
    for d in descriptors {
        for v in d.values() {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    bin.flush()?;
    let header = DumpHeader {
        count: descriptors.len(),
        dim,
        dtype: "f32",
        layout: "row-major",
    };
    std::fs::write(
        prefix.with_extension("json"),
        serde_json::to_string_pretty(&header)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn flat_patch_codes_zero() {
        let patch = GrayImage::from_fn(5, 5, |_, _| 0.42);
        let code = cslbp_code(&patch, 2, 2, &CslbpParams::default()).unwrap();
        assert_eq!(code, 0);
    }

    #[test]
    fn single_firing_pair_codes_one() {
        // 180°-symmetric patch: every opposite sample pair is equal, so no
        // bit fires; then raise g_0's pixel by 2t to fire bit 0 alone. The
        // diagonal samples pick up only a 0.207 bilinear share of that pixel,
        // below threshold.
        let params = CslbpParams::default();
        let t = params.threshold;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut vals = [[0.0f32; 5]; 5];
        for y in 0..5usize {
            for x in 0..5usize {
                let (dx, dy) = (x as i64 - 2, y as i64 - 2);
                if dy < 0 || (dy == 0 && dx < 0) {
                    vals[y][x] = rng.random_range(0.2..0.8);
                } else if dx == 0 && dy == 0 {
                    vals[y][x] = 0.5;
                }
            }
        }
        for y in 0..5usize {
            for x in 0..5usize {
                let (dx, dy) = (x as i64 - 2, y as i64 - 2);
                if dy > 0 || (dy == 0 && dx > 0) {
                    vals[y][x] = vals[(2 - dy) as usize][(2 - dx) as usize];
                }
            }
        }
        let mut patch = GrayImage::from_fn(5, 5, |x, y| vals[y][x]);
        assert_eq!(cslbp_code(&patch, 2, 2, &params).unwrap(), 0);
        patch.set(3, 2, patch.get(3, 2) + 2.0 * t);
        assert_eq!(cslbp_code(&patch, 2, 2, &params).unwrap(), 1);
    }

    #[test]
    fn eight_neighbors_produce_exactly_sixteen_patterns() {
        let params = CslbpParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut seen = [false; 16];
        for _ in 0..20_000 {
            let patch = GrayImage::from_fn(3, 3, |_, _| rng.random::<f32>());
            let code = cslbp_code(&patch, 1, 1, &params).unwrap();
            assert!(code < 16);
            seen[code as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "all 16 codes reachable");
    }

    #[test]
    fn code_invariant_to_intensity_shift_and_threshold_scaled_gain() {
        let params = CslbpParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let patch = GrayImage::from_fn(5, 5, |_, _| rng.random_range(0.0..0.5));
            let code = cslbp_code(&patch, 2, 2, &params).unwrap();

            let shifted = GrayImage::from_fn(5, 5, |x, y| patch.get(x, y) + 0.25);
            assert_eq!(cslbp_code(&shifted, 2, 2, &params).unwrap(), code);

            let gained = GrayImage::from_fn(5, 5, |x, y| patch.get(x, y) * 2.0);
            let scaled_params = CslbpParams {
                threshold: params.threshold * 2.0,
                ..params
            };
            assert_eq!(cslbp_code(&gained, 2, 2, &scaled_params).unwrap(), code);
        }
    }

    #[test]
    fn circle_out_of_bounds_is_rejected() {
        let patch = GrayImage::new(5, 5);
        assert!(matches!(
            cslbp_code(&patch, 0, 2, &CslbpParams::default()),
            Err(CslbpError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn default_descriptor_is_256_dimensional() {
        let params = CslbpParams::default();
        assert_eq!(params.descriptor_len(), 256);
        assert_eq!(params.code_count(), 16);
    }

    #[test]
    fn flat_region_mass_sits_on_bin_zero() {
        let img = GrayImage::from_fn(64, 64, |_, _| 0.5);
        let kp = Keypoint {
            x: 32.0,
            y: 32.0,
            scale: 2.0,
            response: 1.0,
        };
        let d = describe(&img, &kp, &CslbpParams::default()).unwrap();
        for (i, &v) in d.values().iter().enumerate() {
            if i % 16 == 0 {
                // 16 equally loaded bin-0 slots at unit norm: each 1/4.
                assert!((v - 0.25).abs() < 1e-6);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn raw_histogram_mass_equals_coded_pixels() {
        let params = CslbpParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = params.patch_side();
        let patch = GrayImage::from_fn(n, n, |_, _| rng.random::<f32>());
        for sharing in [true, false] {
            let p = CslbpParams {
                vote_sharing: sharing,
                ..params
            };
            let hist = patch_histogram(&patch, &p);
            let coded = (n - 2) * (n - 2); // margin 1 on each side
            let total: f32 = hist.iter().sum();
            assert!((total - coded as f32).abs() < 1e-2, "sharing={sharing} total={total}");
        }
    }

    #[test]
    fn whole_cell_shift_permutes_cells_without_sharing() {
        let params = CslbpParams {
            vote_sharing: false,
            ..CslbpParams::default()
        };
        let n = params.patch_side();
        let coded = params.grid * CELL_PIXELS;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..coded).map(|_| rng.random::<f32>()).collect())
            .collect();
        // Content periodic in x with period = coded width, so a shift by one
        // cell is a circular permutation of cell columns.
        let value = |x: usize, y: usize, shift: usize| rows[y][(x + coded - 1 + shift) % coded];
        let a = GrayImage::from_fn(n, n, |x, y| value(x, y, 0));
        let b = GrayImage::from_fn(n, n, |x, y| value(x, y, CELL_PIXELS));
        let ha = patch_histogram(&a, &params);
        let hb = patch_histogram(&b, &params);
        let m = params.grid;
        let codes = params.code_count();
        for cv in 0..m {
            for cu in 0..m {
                let from = (cv * m + (cu + 1) % m) * codes;
                let to = (cv * m + cu) * codes;
                assert_eq!(&ha[from..from + codes], &hb[to..to + codes], "cell ({cu},{cv})");
            }
        }
    }

    #[test]
    fn region_out_of_bounds_is_reported() {
        let img = GrayImage::new(64, 64);
        let kp = Keypoint {
            x: 5.0,
            y: 32.0,
            scale: 2.0,
            response: 1.0,
        };
        assert!(matches!(
            describe(&img, &kp, &CslbpParams::default()),
            Err(CslbpError::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn descriptor_is_unit_norm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let img = GrayImage::from_fn(96, 96, |_, _| rng.random::<f32>());
        let kp = Keypoint {
            x: 48.0,
            y: 48.0,
            scale: 3.0,
            response: 1.0,
        };
        let d = describe(&img, &kp, &CslbpParams::default()).unwrap();
        let norm: f32 = d.values().iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }
}
