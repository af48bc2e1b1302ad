//! Raster types, grayscale conversion and perspective warping — the substrate
//! every other stage consumes.
//!
//! Interior arithmetic runs in floating point on `[0, 1]` intensities;
//! quantization to 8 bits happens only when a frame is materialized.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

/// Luma weights for RGB → grayscale conversion (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("homography is singular (|det| = {0:.3e})")]
    SingularHomography(f64),
    #[error("invalid raster dimensions {width}x{height} for buffer of length {len}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
}

/// An indexed 8-bit RGB raster, the unit of ingestion and final output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    /// Wraps interleaved RGB bytes. Fails unless `data.len() == width * height * 3`
    /// with both dimensions at least 1.
    pub fn new(index: usize, width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            index,
            width,
            height,
            data,
        })
    }

    pub fn from_fn(index: usize, width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(index, width, height, data).expect("from_fn produces a consistent buffer")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB bytes, row-major.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// A grayscale raster with real-valued intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a continuous position. Returns `None` unless
    /// `(x, y)` lies inside the continuous domain `[0, w-1] x [0, h-1]`,
    /// i.e. unless every non-zero-weight tap is in bounds.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f32> {
        if !(0.0..=(self.width - 1) as f64).contains(&x) || !(0.0..=(self.height - 1) as f64).contains(&y) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }

    /// Bilinear sample clamped to the image border (for resampling kernels
    /// that may step slightly outside).
    #[inline]
    pub fn sample_bilinear_clamped(&self, x: f64, y: f64) -> f32 {
        let cx = x.clamp(0.0, (self.width - 1) as f64);
        let cy = y.clamp(0.0, (self.height - 1) as f64);
        self.sample_bilinear(cx, cy).expect("clamped position is in bounds")
    }
}

/// A binary coverage mask, 1 where a warped image has valid content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// A 3x3 projective transform, kept normalized to `h[2][2] = 1` when finite
/// and guaranteed invertible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Validates invertibility (|det| > 1e-12 after normalization).
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self, RasterError> {
        let m = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        Self::from_matrix(m)
    }

    pub(crate) fn from_matrix(m: Matrix3<f64>) -> Result<Self, RasterError> {
        let mut m = m;
        let h22 = m[(2, 2)];
        if h22.abs() > 1e-12 && h22.is_finite() {
            m /= h22;
        }
        let det = m.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(RasterError::SingularHomography(det.abs()));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Row-major 9-element form, convenient for serialization.
    pub fn to_row_major(&self) -> [f64; 9] {
        let r = self.matrix();
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ]
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self, RasterError> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    /// Maps a point; `None` when the point lies on the plane at infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let v = self.m * Vector3::new(x, y, 1.0);
        if v[2].abs() < 1e-12 {
            return None;
        }
        Some((v[0] / v[2], v[1] / v[2]))
    }

    pub fn inverse(&self) -> Result<Homography, RasterError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(RasterError::SingularHomography(0.0))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Homography) -> Result<Homography, RasterError> {
        Self::from_matrix(self.m * rhs.m)
    }
}

/// Per-pixel luma 0.299 R + 0.587 G + 0.114 B, rescaled to `[0, 1]`.
pub fn to_grayscale(f: &Frame) -> GrayImage {
    let data = f
        .data()
        .chunks_exact(3)
        .map(|px| {
            let luma = LUMA_WEIGHTS[0] * px[0] as f64
                + LUMA_WEIGHTS[1] * px[1] as f64
                + LUMA_WEIGHTS[2] * px[2] as f64;
            (luma / 255.0) as f32
        })
        .collect();
    GrayImage::from_vec(f.width(), f.height(), data).expect("frame dimensions are valid")
}

/// Result of [`warp_perspective`].
pub struct Warped {
    pub image: GrayImage,
    pub mask: Mask,
}

/// Warps `img` onto a `canvas_w x canvas_h` canvas under `h` (which maps
/// source coordinates to canvas coordinates). Each output pixel is sampled at
/// `h⁻¹ · (x, y, 1)` with bilinear interpolation; samples outside the source
/// get `fill` and mask 0.
pub fn warp_perspective(
    img: &GrayImage,
    h: &Homography,
    canvas_w: usize,
    canvas_h: usize,
    fill: f32,
) -> Result<Warped, RasterError> {
    let inv = h.inverse()?;
    let mut out = GrayImage::new(canvas_w, canvas_h);
    let mut mask = Mask::new(canvas_w, canvas_h);

    out.data
        .par_chunks_mut(canvas_w)
        .zip(mask.data.par_chunks_mut(canvas_w))
        .enumerate()
        .for_each(|(y, (row, mask_row))| {
            for x in 0..canvas_w {
                let sampled = inv
                    .apply(x as f64, y as f64)
                    .and_then(|(sx, sy)| img.sample_bilinear(sx, sy));
                match sampled {
                    Some(v) => {
                        row[x] = v;
                        mask_row[x] = 1;
                    }
                    None => row[x] = fill,
                }
            }
        });

    Ok(Warped { image: out, mask })
}

/// Separable Gaussian blur with edge replication. Kernel radius `ceil(4σ)`.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let denom = 2.0 * sigma * sigma;
    for i in -(radius as i64)..=(radius as i64) {
        kernel.push((-(i * i) as f64 / denom).exp());
    }
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|v| (v / sum) as f32).collect();

    let (w, h) = (img.width, img.height);
    let mut tmp = GrayImage::new(w, h);
    tmp.data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - radius as i64).clamp(0, w as i64 - 1) as usize;
                acc += kv * img.get(sx, y);
            }
            row[x] = acc;
        }
    });
    let mut out = GrayImage::new(w, h);
    out.data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + k as i64 - radius as i64).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp.get(x, sy);
            }
            row[x] = acc;
        }
    });
    out
}
