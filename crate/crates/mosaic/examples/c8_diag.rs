use mosaic::config::{BlendMode, PipelineConfig};
use mosaic::pipeline::build_mosaic_from_frames;
use mosaic::raster::to_grayscale;
use mosaic::register::RansacConfig;
use mosaic::select::BlockMatchConfig;
use mosaic::synth::{generate_sequence, ParallaxBand, SceneSpec};

fn main() {
    for seed in [888u64, 1234, 42, 7, 2024] {
        for band_tex in [Some(4.0f64), Some(5.0)] {
            for levels in [None] {
                let spec = SceneSpec {
                    seed, scene_width: 360, scene_height: 160,
                    frame_width: 200, frame_height: 140, n_frames: 7,
                    dx_per_frame: 20.0, dy_per_frame: 0.0, noise_sigma: 0.0,
                    texture_sigma: 2.0, casts: Vec::new(),
                    parallax: Some(ParallaxBand { y0: 58, y1: 82, extra_per_frame: 4.0, texture_sigma: band_tex, feather_rows: 4 }),
                };
                let seq = generate_sequence(&spec).unwrap();
                let base = PipelineConfig {
                    block: BlockMatchConfig { block_size: 21, search_range: 48, patch_center: None },
                    offset_threshold: Some(35),
                    blend_levels: levels,
                    ransac: RansacConfig { seed: 3, inlier_threshold: 1.5, assumed_outlier_ratio: 0.6, ..Default::default() },
                    ..Default::default()
                };
                let build = |mode: BlendMode| {
                    build_mosaic_from_frames(seq.frames.clone(), &PipelineConfig { blend_mode: mode, ..base.clone() }).unwrap()
                };
                let hard = build(BlendMode::None);
                let soft = build(BlendMode::Multiband);
                // skip if registration failed badly
                let mut reg_ok = true;
                for (k, g) in hard.report.global_homographies.iter().enumerate() {
                    let h = mosaic::raster::Homography::from_row_major(*g).unwrap();
                    let e: f64 = [(0.0,0.0),(199.0,0.0),(0.0,139.0),(199.0,139.0)].iter().map(|&(x,y)| {
                        let (gx, gy) = h.apply(x, y).unwrap();
                        ((gx - (x + 40.0 * k as f64)).powi(2) + (gy - y).powi(2)).sqrt()
                    }).sum::<f64>() / 4.0;
                    if e > 0.5 { reg_ok = false; }
                }
                let hg = to_grayscale(&hard.mosaic);
                let sg = to_grayscale(&soft.mosaic);
                let w = hard.report.canvas_width;
                let off = hard.report.canvas_offset;
                let (fw, fh) = (200.0f64, 140.0f64);
                let frame_dist = |i: usize, cx: usize, cy: usize| -> f64 {
                    let x = cx as f64 - off[0] - 40.0 * i as f64;
                    let y = cy as f64 - off[1];
                    if x < 0.0 || y < 0.0 || x > fw - 1.0 || y > fh - 1.0 { return -1.0; }
                    x.min(fw - 1.0 - x).min(y).min(fh - 1.0 - y)
                };
                let grad = |img: &mosaic::raster::GrayImage, x: usize, y: usize| -> f64 {
                    let gx = (img.get(x + 1, y) - img.get(x - 1, y)) as f64 / 2.0;
                    let gy = (img.get(x, y + 1) - img.get(x, y - 1)) as f64 / 2.0;
                    (gx * gx + gy * gy).sqrt()
                };
                for window in [1usize, 2] {
                    let mut max_h = 0.0f64; let mut max_s = 0.0f64;
                    for sy in 64..77usize {
                        let cy = (sy as f64 + off[1]).round() as usize;
                        for i in 1..4usize {
                            let mut seam = None;
                            for cx in 1..w - 1 {
                                let a = (0..i).map(|j| frame_dist(j, cx, cy)).fold(-1.0f64, f64::max);
                                let b = frame_dist(i, cx, cy);
                                if a >= 0.0 && b >= 0.0 && b > a { seam = Some(cx); break; }
                            }
                            if let Some(sx) = seam {
                                for x in sx.saturating_sub(window).max(1)..=(sx + window).min(w - 2) {
                                    max_h = max_h.max(grad(&hg, x, cy));
                                    max_s = max_s.max(grad(&sg, x, cy));
                                }
                            }
                        }
                    }
                    println!("seed {seed} band_tex {band_tex:?} levels {levels:?} win ±{window}: hard {max_h:.4} soft {max_s:.4} ratio {:.3} reg_ok {reg_ok}",
                        max_s / max_h);
                }
            }
        }
    }
}
