//! End-to-end mosaic construction: ingest, select keyframes, align colors,
//! register consecutive pairs, compose transforms onto a global canvas, warp
//! and blend, and emit the mosaic with a machine-readable report.

use crate::blend::{self, BlendError, BlendMask};
use crate::color::{align_to_stats, AlignedFrame};
use crate::config::{BlendMode, ConfigError, PipelineConfig};
use crate::cslbp::{describe_all, dump_descriptors, Descriptor};
use crate::detect::{detect_keypoints, DetectError, Keypoint};
use crate::io::{load_frames, write_frame_png, IoError};
use crate::raster::{warp_perspective, Frame, GrayImage, Homography, Mask, RasterError};
use crate::register::{estimate_homography, match_nndr, RegisterError, RegistrationResult};
use crate::select::{select_frame_indices, SelectError};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input frames")]
    EmptyInput,
    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("registration failed for pair ({},{}): {source}", pair.0, pair.1)]
    Registration {
        pair: (usize, usize),
        source: RegisterError,
        /// Partial report naming the failing pair.
        report: Box<MosaicReport>,
    },
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Registration statistics for one consecutive kept-frame pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    /// Original index of the earlier frame (registration target).
    pub prev_index: usize,
    /// Original index of the later frame (registration query).
    pub next_index: usize,
    pub prev_keypoints: usize,
    pub next_keypoints: usize,
    pub matches: usize,
    pub inliers: usize,
    pub mean_reproj_error: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTimings {
    pub selection_ms: f64,
    pub color_align_ms: f64,
    pub registration_ms: f64,
    pub compositing_ms: f64,
    pub total_ms: f64,
}

/// Machine-readable build report; always produced, also on registration
/// failure (with `error` set and the pairs completed so far).
#[derive(Debug, Clone, Serialize)]
pub struct MosaicReport {
    pub selected_indices: Vec<usize>,
    pub pairs: Vec<PairReport>,
    /// Row-major global transforms mapping each kept frame onto frame-0
    /// coordinates.
    pub global_homographies: Vec<[f64; 9]>,
    pub canvas_width: usize,
    pub canvas_height: usize,
    /// Translation from frame-0 coordinates to canvas coordinates.
    pub canvas_offset: [f64; 2],
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<StageTimings>,
}

pub struct MosaicOutput {
    pub mosaic: Frame,
    pub report: MosaicReport,
}

/// Chains pairwise transforms into global ones. `pairwise[i]` maps frame
/// `i+1` coordinates onto frame `i` coordinates; the result at `i` maps frame
/// `i` coordinates onto frame-0 coordinates, normalized to `h[2][2] = 1`.
pub fn compose_transforms(pairwise: &[Homography]) -> Result<Vec<Homography>, RasterError> {
    let mut global = Vec::with_capacity(pairwise.len() + 1);
    global.push(Homography::identity());
    for h in pairwise {
        let prev: &Homography = global.last().unwrap();
        global.push(prev.compose(h)?);
    }
    Ok(global)
}

/// Normalized distance of each pixel to its frame border, used to place the
/// seam through well-covered territory.
fn border_distance_image(w: usize, h: usize) -> GrayImage {
    let norm = (w + h) as f32;
    GrayImage::from_fn(w, h, |x, y| {
        let d = x.min(y).min(w - 1 - x).min(h - 1 - y);
        d as f32 / norm
    })
}

struct WarpedFrame {
    planes: [GrayImage; 3],
    mask: Mask,
    border_dist: GrayImage,
}

fn warp_aligned(
    frame: &AlignedFrame,
    to_canvas: &Homography,
    canvas_w: usize,
    canvas_h: usize,
) -> Result<WarpedFrame, RasterError> {
    let planes = frame.planes();
    let mut warped_planes = Vec::with_capacity(3);
    let mut mask = None;
    for p in &planes {
        let w = warp_perspective(p, to_canvas, canvas_w, canvas_h, 0.0)?;
        if mask.is_none() {
            mask = Some(w.mask);
        }
        warped_planes.push(w.image);
    }
    let dist = border_distance_image(frame.width(), frame.height());
    let dist_warped = warp_perspective(&dist, to_canvas, canvas_w, canvas_h, 0.0)?;
    let mut it = warped_planes.into_iter();
    Ok(WarpedFrame {
        planes: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        mask: mask.expect("at least one plane warped"),
        border_dist: dist_warped.image,
    })
}

struct Accumulator {
    planes: [GrayImage; 3],
    mask: Mask,
    border_dist: GrayImage,
}

/// Bounding box (inclusive) of pixels set in both masks, or `None` when the
/// overlap is empty.
fn overlap_bbox(a: &Mask, b: &Mask) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = (a.width(), a.height());
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            if a.get(x, y) && b.get(x, y) {
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bbox
}

fn merge_into(acc: &mut Accumulator, new: &WarpedFrame, cfg: &PipelineConfig) -> Result<(), BlendError> {
    let (w, h) = (acc.mask.width(), acc.mask.height());
    let overlap = overlap_bbox(&acc.mask, &new.mask);

    // Binary seam decision: keep the accumulator where its content sits
    // farther from its own frame border than the newcomer's.
    let weight = GrayImage::from_fn(w, h, |x, y| {
        match (acc.mask.get(x, y), new.mask.get(x, y)) {
            (true, true) => {
                if acc.border_dist.get(x, y) >= new.border_dist.get(x, y) {
                    1.0
                } else {
                    0.0
                }
            }
            (true, false) => 1.0,
            (false, true) => 0.0,
            (false, false) => 1.0,
        }
    });

    let blend_levels = overlap.map(|(x0, y0, x1, y1)| {
        let (ow, oh) = (x1 - x0 + 1, y1 - y0 + 1);
        let auto = (ow.min(oh).max(2) as f64).log2().floor() as usize;
        let wanted = cfg.blend_levels.unwrap_or(auto.saturating_sub(2).clamp(2, 6));
        wanted.min(blend::max_levels(w, h, 2)).max(1)
    });

    match (cfg.blend_mode, blend_levels) {
        (BlendMode::Multiband, Some(levels)) => {
            // Fill each side's uncovered territory with the other's content so
            // the pyramids see no artificial zero borders.
            let filled = |own: &GrayImage, own_mask: &Mask, other: &GrayImage, other_mask: &Mask| {
                GrayImage::from_fn(w, h, |x, y| {
                    if own_mask.get(x, y) {
                        own.get(x, y)
                    } else if other_mask.get(x, y) {
                        other.get(x, y)
                    } else {
                        0.0
                    }
                })
            };
            let mask = BlendMask::new(weight);
            for c in 0..3 {
                let a = filled(&acc.planes[c], &acc.mask, &new.planes[c], &new.mask);
                let b = filled(&new.planes[c], &new.mask, &acc.planes[c], &acc.mask);
                acc.planes[c] = blend::blend_multiband(&a, &b, &mask, levels)?;
            }
        }
        _ => {
            // Hard composite (no overlap, or blending disabled for ablation).
            for c in 0..3 {
                let plane = GrayImage::from_fn(w, h, |x, y| {
                    match (acc.mask.get(x, y), new.mask.get(x, y)) {
                        (true, true) => {
                            if weight.get(x, y) >= 0.5 {
                                acc.planes[c].get(x, y)
                            } else {
                                new.planes[c].get(x, y)
                            }
                        }
                        (true, false) => acc.planes[c].get(x, y),
                        (false, true) => new.planes[c].get(x, y),
                        (false, false) => 0.0,
                    }
                });
                acc.planes[c] = plane;
            }
        }
    }

    for y in 0..h {
        for x in 0..w {
            if new.mask.get(x, y) {
                if !acc.mask.get(x, y) {
                    acc.mask.set(x, y, true);
                }
                let d = acc.border_dist.get(x, y).max(new.border_dist.get(x, y));
                acc.border_dist.set(x, y, d);
            }
        }
    }
    Ok(())
}

fn materialize(acc: &Accumulator, fill: u8) -> Frame {
    let (w, h) = (acc.mask.width(), acc.mask.height());
    Frame::from_fn(0, w, h, |x, y| {
        if acc.mask.get(x, y) {
            [0, 1, 2].map(|c| (acc.planes[c].get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8)
        } else {
            [fill; 3]
        }
    })
}

struct FrameFeatures {
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
}

#[derive(Serialize)]
struct MatchDump {
    prev_index: usize,
    next_index: usize,
    homography: [f64; 9],
    matches: Vec<MatchDumpEntry>,
}

#[derive(Serialize)]
struct MatchDumpEntry {
    query_idx: usize,
    train_idx: usize,
    distance: f32,
    ratio: f32,
    inlier: bool,
}

fn dump_pair_debug(
    dir: &Path,
    pair_no: usize,
    prev_index: usize,
    next_index: usize,
    matches: &[crate::register::Match],
    reg: &RegistrationResult,
) {
    let dump = MatchDump {
        prev_index,
        next_index,
        homography: reg.homography.to_row_major(),
        matches: matches
            .iter()
            .zip(&reg.inlier_mask)
            .map(|(m, &inl)| MatchDumpEntry {
                query_idx: m.query_idx,
                train_idx: m.train_idx,
                distance: m.distance,
                ratio: m.ratio,
                inlier: inl,
            })
            .collect(),
    };
    if let Ok(json) = serde_json::to_string_pretty(&dump) {
        let _ = std::fs::write(dir.join(format!("pair_{pair_no:02}_matches.json")), json);
    }
}

fn keypoint_overlay(frame: &Frame, keypoints: &[Keypoint]) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let mut data = frame.data().to_vec();
    for kp in keypoints {
        let (cx, cy) = (kp.x.round() as i64, kp.y.round() as i64);
        for d in -3i64..=3 {
            for &(x, y) in &[(cx + d, cy), (cx, cy + d)] {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    let i = (y as usize * w + x as usize) * 3;
                    data[i] = 255;
                    data[i + 1] = 40;
                    data[i + 2] = 40;
                }
            }
        }
    }
    Frame::new(frame.index, w, h, data).expect("overlay preserves dimensions")
}

/// Builds a mosaic from frames read from a directory or glob pattern.
pub fn build_mosaic(input: &str, cfg: &PipelineConfig) -> Result<MosaicOutput, PipelineError> {
    build_mosaic_from_frames(load_frames(input)?, cfg)
}

/// Builds a mosaic from in-memory frames (indices are taken from the frames).
pub fn build_mosaic_from_frames(
    frames: Vec<Frame>,
    cfg: &PipelineConfig,
) -> Result<MosaicOutput, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let (fw, fh) = (frames[0].width(), frames[0].height());
    for f in &frames {
        if f.width() != fw || f.height() != fh {
            return Err(PipelineError::MixedDimensions {
                index: f.index,
                got_w: f.width(),
                got_h: f.height(),
                want_w: fw,
                want_h: fh,
            });
        }
    }
    cfg.validate_for(fw, fh)?;
    let debug_dir = cfg.debug_dir.as_deref();
    if let Some(dir) = debug_dir {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let t_start = Instant::now();

    // Stage 1: keyframe selection.
    let threshold = cfg.offset_threshold_for(fw);
    let kept = select_frame_indices(&frames, &cfg.block, threshold)?;
    let t_select = Instant::now();

    // Stage 2: chained color alignment toward the first kept frame's palette.
    let mut aligned: Vec<AlignedFrame> = Vec::with_capacity(kept.len());
    for (pos, &idx) in kept.iter().enumerate() {
        let raw = AlignedFrame::from_frame(&frames[idx]);
        if cfg.color_align && pos > 0 {
            let target = aligned[pos - 1].stats();
            aligned.push(align_to_stats(&raw, &target));
        } else {
            aligned.push(raw);
        }
    }
    if let Some(dir) = debug_dir {
        for a in &aligned {
            let _ = write_frame_png(&dir.join(format!("aligned_{:03}.png", a.index)), &a.to_frame());
        }
    }
    let t_color = Instant::now();

    // Stage 3: pairwise registration on the aligned luma.
    let selected_indices: Vec<usize> = kept.iter().map(|&i| frames[i].index).collect();
    let mut report = MosaicReport {
        selected_indices: selected_indices.clone(),
        pairs: Vec::new(),
        global_homographies: Vec::new(),
        canvas_width: 0,
        canvas_height: 0,
        canvas_offset: [0.0, 0.0],
        seed: cfg.ransac.seed,
        error: None,
        timings_ms: None,
    };

    let features: Vec<FrameFeatures> = {
        let mut feats = Vec::with_capacity(aligned.len());
        for a in &aligned {
            let luma = a.luma();
            let keypoints = detect_keypoints(&luma, &cfg.detect)?;
            let descriptors = describe_all(&luma, &keypoints, &cfg.cslbp);
            if let Some(dir) = debug_dir {
                let _ = write_frame_png(
                    &dir.join(format!("keypoints_{:03}.png", a.index)),
                    &keypoint_overlay(&a.to_frame(), &keypoints),
                );
                let _ = dump_descriptors(&dir.join(format!("descriptors_{:03}", a.index)), &descriptors);
            }
            feats.push(FrameFeatures {
                keypoints,
                descriptors,
            });
        }
        feats
    };

    let mut pairwise: Vec<Homography> = Vec::with_capacity(kept.len().saturating_sub(1));
    for k in 1..kept.len() {
        let prev = &features[k - 1];
        let next = &features[k];
        let matches = match_nndr(&next.descriptors, &prev.descriptors, cfg.nndr_ratio);
        let pts_q: Vec<(f64, f64)> = next.descriptors.iter().map(|d| (d.keypoint.x, d.keypoint.y)).collect();
        let pts_t: Vec<(f64, f64)> = prev.descriptors.iter().map(|d| (d.keypoint.x, d.keypoint.y)).collect();
        let pair_ids = (selected_indices[k - 1], selected_indices[k]);
        match estimate_homography(&matches, &pts_q, &pts_t, &cfg.ransac) {
            Ok(reg) => {
                report.pairs.push(PairReport {
                    prev_index: pair_ids.0,
                    next_index: pair_ids.1,
                    prev_keypoints: prev.keypoints.len(),
                    next_keypoints: next.keypoints.len(),
                    matches: matches.len(),
                    inliers: reg.inlier_count(),
                    mean_reproj_error: reg.mean_reproj_error,
                    iterations: reg.iterations_used,
                });
                if let Some(dir) = debug_dir {
                    dump_pair_debug(dir, k - 1, pair_ids.0, pair_ids.1, &matches, &reg);
                }
                pairwise.push(reg.homography);
            }
            Err(source) => {
                report.error = Some(format!(
                    "registration failed for pair ({},{}): {source}",
                    pair_ids.0, pair_ids.1
                ));
                return Err(PipelineError::Registration {
                    pair: pair_ids,
                    source,
                    report: Box::new(report),
                });
            }
        }
    }
    let t_register = Instant::now();

    // Stage 4: global composition, canvas sizing, warping, blending.
    let global = compose_transforms(&pairwise)?;
    let corners = [(0.0, 0.0), ((fw - 1) as f64, 0.0), (0.0, (fh - 1) as f64), ((fw - 1) as f64, (fh - 1) as f64)];
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for g in &global {
        for &(x, y) in &corners {
            let (cx, cy) = g.apply(x, y).ok_or(RasterError::SingularHomography(0.0))?;
            min_x = min_x.min(cx);
            min_y = min_y.min(cy);
            max_x = max_x.max(cx);
            max_y = max_y.max(cy);
        }
    }
    // Snap bounds within numerical noise of an integer so estimation error
    // below 1e-4 px cannot widen the canvas by a pixel.
    let snap = |v: f64| if (v - v.round()).abs() < 1e-4 { v.round() } else { v };
    let (min_x, min_y, max_x, max_y) = (snap(min_x), snap(min_y), snap(max_x), snap(max_y));
    let offset = Homography::translation(-min_x.floor(), -min_y.floor());
    let canvas_w = (max_x.ceil() - min_x.floor()) as usize + 1;
    let canvas_h = (max_y.ceil() - min_y.floor()) as usize + 1;
    report.global_homographies = global.iter().map(|g| g.to_row_major()).collect();
    report.canvas_width = canvas_w;
    report.canvas_height = canvas_h;
    report.canvas_offset = [-min_x.floor(), -min_y.floor()];

    let mut acc: Option<Accumulator> = None;
    for (a, g) in aligned.iter().zip(&global) {
        let to_canvas = offset.compose(g)?;
        let warped = warp_aligned(a, &to_canvas, canvas_w, canvas_h)?;
        match acc.as_mut() {
            None => {
                acc = Some(Accumulator {
                    planes: warped.planes,
                    mask: warped.mask,
                    border_dist: warped.border_dist,
                });
            }
            Some(acc) => merge_into(acc, &warped, cfg)?,
        }
    }
    let acc = acc.expect("at least one frame accumulated");
    let mosaic = materialize(&acc, 0);
    let t_total = Instant::now();

    if cfg.record_timings {
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        report.timings_ms = Some(StageTimings {
            selection_ms: ms(t_start, t_select),
            color_align_ms: ms(t_select, t_color),
            registration_ms: ms(t_color, t_register),
            compositing_ms: ms(t_register, t_total),
            total_ms: ms(t_start, t_total),
        });
    }

    Ok(MosaicOutput { mosaic, report })
}
