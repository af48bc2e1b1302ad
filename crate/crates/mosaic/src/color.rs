//! Statistical color alignment between frames.
//!
//! Each channel of the source frame is remapped so its mean and standard
//! deviation match the target's: `I' = (σ_t/σ_s)(I − m_s) + m_t`. Alignment
//! keeps real-valued pixels; clamping to `[0, 255]` and rounding happen only
//! when a frame is materialized back to 8 bits.

use crate::raster::{Frame, GrayImage, LUMA_WEIGHTS};

/// Minimum source standard deviation (in 8-bit intensity units) below which
/// a channel is treated as degenerate and mapped uniformly to the target mean.
pub const DEGENERATE_SIGMA: f64 = 1e-6;

/// Per-channel population statistics in 8-bit intensity units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub stddev: f64,
}

/// Population mean and standard deviation of each RGB channel.
pub fn channel_stats(frame: &Frame) -> [ChannelStats; 3] {
    stats_of(frame.data().chunks_exact(3).map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]))
}

fn stats_of(pixels: impl Iterator<Item = [f64; 3]> + Clone) -> [ChannelStats; 3] {
    let mut n = 0usize;
    let mut sum = [0.0f64; 3];
    for px in pixels.clone() {
        for c in 0..3 {
            sum[c] += px[c];
        }
        n += 1;
    }
    let mean = [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64];
    let mut var = [0.0f64; 3];
    for px in pixels {
        for c in 0..3 {
            let d = px[c] - mean[c];
            var[c] += d * d;
        }
    }
    [0, 1, 2].map(|c| ChannelStats {
        mean: mean[c],
        stddev: (var[c] / n as f64).sqrt(),
    })
}

/// A frame with real-valued (pre-rounding) RGB intensities in 8-bit units.
#[derive(Debug, Clone)]
pub struct AlignedFrame {
    pub index: usize,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl AlignedFrame {
    pub fn from_frame(frame: &Frame) -> Self {
        Self {
            index: frame.index,
            width: frame.width(),
            height: frame.height(),
            values: frame.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB values, unclamped, in 8-bit units.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stats(&self) -> [ChannelStats; 3] {
        stats_of(self.values.chunks_exact(3).map(|p| [p[0], p[1], p[2]]))
    }

    /// Clamps to `[0, 255]` and rounds, materializing an 8-bit frame.
    pub fn to_frame(&self) -> Frame {
        let data = self
            .values
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8)
            .collect();
        Frame::new(self.index, self.width, self.height, data).expect("aligned buffer is consistent")
    }

    /// One `[0, 1]` plane per channel, clamped, for warping and blending.
    pub fn planes(&self) -> [GrayImage; 3] {
        [0, 1, 2].map(|c| {
            let data = self
                .values
                .chunks_exact(3)
                .map(|p| (p[c] / 255.0).clamp(0.0, 1.0) as f32)
                .collect();
            GrayImage::from_vec(self.width, self.height, data).expect("aligned buffer is consistent")
        })
    }

    /// Luma plane in `[0, 1]`, for feature detection after alignment.
    pub fn luma(&self) -> GrayImage {
        let data = self
            .values
            .chunks_exact(3)
            .map(|p| {
                let l = LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2];
                ((l / 255.0).clamp(0.0, 1.0)) as f32
            })
            .collect();
        GrayImage::from_vec(self.width, self.height, data).expect("aligned buffer is consistent")
    }
}

/// Remaps each channel of `source` to the target statistics. Channels with a
/// degenerate source stddev map uniformly to the target mean.
pub fn align_to_stats(source: &AlignedFrame, target: &[ChannelStats; 3]) -> AlignedFrame {
    let src = source.stats();
    let mut out = source.clone();
    for (c, stats) in target.iter().enumerate() {
        if src[c].stddev < DEGENERATE_SIGMA {
            for px in out.values.chunks_exact_mut(3) {
                px[c] = stats.mean;
            }
        } else {
            let gain = stats.stddev / src[c].stddev;
            for px in out.values.chunks_exact_mut(3) {
                px[c] = gain * (px[c] - src[c].mean) + stats.mean;
            }
        }
    }
    out
}

/// Aligns `source`'s per-channel distribution onto `target`'s.
pub fn align_colors(source: &Frame, target: &Frame) -> AlignedFrame {
    align_to_stats(&AlignedFrame::from_frame(source), &channel_stats(target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_frame(w: usize, h: usize, lo: u8, hi: u8, seed: u64) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(0, w, h, |_, _| {
            [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)]
        })
    }

    #[test]
    fn matching_stats_reduce_to_identity() {
        let f = random_frame(32, 24, 40, 200, 1);
        let aligned = align_colors(&f, &f);
        for (a, b) in aligned.values().iter().zip(f.data()) {
            assert!((a - *b as f64).abs() < 1e-9);
        }
        assert_eq!(aligned.to_frame(), f);
    }

    #[test]
    fn hand_evaluated_mapping() {
        // source: half 90, half 110 -> mean 100, population sigma 10
        let source = Frame::from_fn(0, 2, 1, |x, _| if x == 0 { [90; 3] } else { [110; 3] });
        // target: half 100, half 140 -> mean 120, population sigma 20
        let target = Frame::from_fn(0, 2, 1, |x, _| if x == 0 { [100; 3] } else { [140; 3] });
        let aligned = align_colors(&source, &target);
        // pixel 110: (20/10)*(110-100)+120 = 140
        assert!((aligned.values()[3] - 140.0).abs() < 1e-9);
        // pixel 90: (20/10)*(90-100)+120 = 100
        assert!((aligned.values()[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_channel_maps_to_target_mean() {
        let source = Frame::from_fn(0, 8, 8, |x, y| [77, (x * 8 + y) as u8, (y * 8 + x) as u8]);
        let target = Frame::from_fn(0, 8, 8, |x, y| {
            let v = ((x + y) * 9) as u8;
            [v.wrapping_add(64), v, v / 2]
        });
        let tstats = channel_stats(&target);
        let aligned = align_colors(&source, &target);
        for px in aligned.values().chunks_exact(3) {
            assert!((px[0] - tstats[0].mean).abs() < 1e-9);
        }
    }

    #[test]
    fn aligned_stats_match_target_within_1e6() {
        for seed in 0..6u64 {
            let source = random_frame(48, 40, 30, 120, seed);
            let target = random_frame(48, 40, 100, 220, seed + 50);
            let aligned = align_colors(&source, &target);
            let got = aligned.stats();
            let want = channel_stats(&target);
            for c in 0..3 {
                assert!((got[c].mean - want[c].mean).abs() < 1e-6, "mean c={c}");
                assert!((got[c].stddev - want[c].stddev).abs() < 1e-6, "stddev c={c}");
            }
        }
    }

    #[test]
    fn alignment_is_idempotent() {
        let source = random_frame(32, 32, 20, 130, 3);
        let target = random_frame(32, 32, 90, 240, 4);
        let tstats = channel_stats(&target);
        let once = align_colors(&source, &target);
        let twice = align_to_stats(&once, &tstats);
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn per_channel_ordering_is_preserved() {
        let source = random_frame(16, 16, 0, 255, 5);
        let target = random_frame(16, 16, 60, 180, 6);
        let aligned = align_colors(&source, &target);
        let src: Vec<f64> = source.data().iter().map(|&v| v as f64).collect();
        for c in 0..3 {
            let mut pairs: Vec<(f64, f64)> = src
                .chunks_exact(3)
                .zip(aligned.values().chunks_exact(3))
                .map(|(s, a)| (s[c], a[c]))
                .collect();
            pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            for w in pairs.windows(2) {
                assert!(w[1].1 >= w[0].1 - 1e-12);
            }
        }
    }

    #[test]
    fn planes_and_luma_are_clamped_unit_range() {
        // Force values beyond [0,255] before materialization.
        let source = random_frame(16, 16, 100, 140, 7);
        let target = random_frame(16, 16, 10, 250, 8);
        let aligned = align_colors(&source, &target);
        for plane in aligned.planes() {
            assert!(plane.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(aligned.luma().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
