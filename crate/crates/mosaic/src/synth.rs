//! Synthetic test sequences with known ground truth.
//!
//! A band-limited random texture plays the scene; frames are windows panned
//! across it with exactly known per-pair homographies. Optional per-frame
//! color casts (applied after warping, so color alignment has work to do),
//! pixel noise, and a faster-moving horizontal band that injects parallax
//! the way scene relief does.

use crate::io::{write_frame_png, IoError};
use crate::raster::{gaussian_blur, Frame, GrayImage, Homography};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Per-frame affine color distortion on `[0, 1]` intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorCast {
    pub gain: [f64; 3],
    pub bias: [f64; 3],
}

impl ColorCast {
    pub fn none() -> Self {
        Self {
            gain: [1.0; 3],
            bias: [0.0; 3],
        }
    }
}

/// A horizontal scene band translated by an extra per-frame offset,
/// breaking the single-homography model.
#[derive(Debug, Clone, Copy)]
pub struct ParallaxBand {
    /// Scene rows `[y0, y1)` belonging to the foreground layer.
    pub y0: usize,
    pub y1: usize,
    /// Additional horizontal displacement per frame, in pixels.
    pub extra_per_frame: f64,
    /// Band-limit blur for the band's own texture; `None` shares the scene
    /// texture. A smoother foreground mimics sandy relief.
    pub texture_sigma: Option<f64>,
    /// Half-width of the low-contrast quiet zone around each band boundary.
    /// Texture contrast fades to zero at the boundary itself, so the
    /// displacement shear stays invisible and spawns no false features.
    /// 0 keeps full contrast up to the hard edge.
    pub feather_rows: usize,
}

impl ParallaxBand {
    /// 1 inside the band, 0 outside.
    pub fn weight(&self, y: f64) -> f64 {
        if y >= self.y0 as f64 && y < self.y1 as f64 {
            1.0
        } else {
            0.0
        }
    }

    /// Texture contrast envelope: 0 at each band boundary, rising to 1 at
    /// `feather_rows` away on both sides.
    pub fn contrast(&self, y: f64) -> f64 {
        if self.feather_rows == 0 {
            return 1.0;
        }
        let f = self.feather_rows as f64;
        let d = (y - self.y0 as f64).abs().min((y - self.y1 as f64).abs());
        let t = (d / f).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }
}

/// Generator parameters for one synthetic sequence.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub scene_width: usize,
    pub scene_height: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub n_frames: usize,
    /// Camera translation per frame, in scene pixels.
    pub dx_per_frame: f64,
    pub dy_per_frame: f64,
    /// Gaussian pixel noise stddev on `[0, 1]` intensities.
    pub noise_sigma: f64,
    /// Band-limit blur applied to the white-noise texture.
    pub texture_sigma: f64,
    /// Per-frame casts; empty means none.
    pub casts: Vec<ColorCast>,
    pub parallax: Option<ParallaxBand>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_width: 400,
            scene_height: 200,
            frame_width: 240,
            frame_height: 160,
            n_frames: 12,
            dx_per_frame: 5.0,
            dy_per_frame: 0.0,
            noise_sigma: 0.0,
            texture_sigma: 1.5,
            casts: Vec::new(),
            parallax: None,
        }
    }
}

impl SceneSpec {
    /// Parses the flat `key = value` spec format. Color casts are given as
    /// per-frame ramps (`cast_gain_step_r` etc.): frame `i` gets gain
    /// `1 + i·step` and bias `i·step`.
    pub fn from_kv_text(text: &str) -> Result<Self, SynthError> {
        let mut spec = Self::default();
        let mut gain_step = [0.0f64; 3];
        let mut bias_step = [0.0f64; 3];
        let mut parallax: (Option<usize>, Option<usize>, Option<f64>) = (None, None, None);
        let mut band_texture: Option<f64> = None;
        let mut band_feather: usize = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SynthError::SpecInvalid(format!("line {}: '{}'", lineno + 1, line)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| SynthError::SpecInvalid(format!("key '{key}': {e}"));
            macro_rules! set {
                ($field:expr) => {
                    $field = value.parse().map_err(|e| bad(format!("{e}")))?
                };
            }
            match key {
                "seed" => set!(spec.seed),
                "scene_width" => set!(spec.scene_width),
                "scene_height" => set!(spec.scene_height),
                "frame_width" => set!(spec.frame_width),
                "frame_height" => set!(spec.frame_height),
                "frames" => set!(spec.n_frames),
                "dx_per_frame" => set!(spec.dx_per_frame),
                "dy_per_frame" => set!(spec.dy_per_frame),
                "noise_sigma" => set!(spec.noise_sigma),
                "texture_sigma" => set!(spec.texture_sigma),
                "cast_gain_step_r" => set!(gain_step[0]),
                "cast_gain_step_g" => set!(gain_step[1]),
                "cast_gain_step_b" => set!(gain_step[2]),
                "cast_bias_step_r" => set!(bias_step[0]),
                "cast_bias_step_g" => set!(bias_step[1]),
                "cast_bias_step_b" => set!(bias_step[2]),
                "parallax_y0" => parallax.0 = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "parallax_y1" => parallax.1 = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "parallax_extra_per_frame" => {
                    parallax.2 = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "parallax_texture_sigma" => {
                    band_texture = Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "parallax_feather_rows" => {
                    band_feather = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                other => return Err(SynthError::SpecInvalid(format!("unknown key '{other}'"))),
            }
        }
        if gain_step != [0.0; 3] || bias_step != [0.0; 3] {
            spec.casts = (0..spec.n_frames)
                .map(|i| ColorCast {
                    gain: [0, 1, 2].map(|c| 1.0 + gain_step[c] * i as f64),
                    bias: [0, 1, 2].map(|c| bias_step[c] * i as f64),
                })
                .collect();
        }
        if let (Some(y0), Some(y1), Some(extra)) = parallax {
            spec.parallax = Some(ParallaxBand {
                y0,
                y1,
                extra_per_frame: extra,
                texture_sigma: band_texture,
                feather_rows: band_feather,
            });
        } else if parallax.0.is_some() || parallax.1.is_some() || parallax.2.is_some() {
            return Err(SynthError::SpecInvalid(
                "parallax needs parallax_y0, parallax_y1 and parallax_extra_per_frame".into(),
            ));
        }
        Ok(spec)
    }
}

/// Frames plus the exact geometry they were rendered with.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub frames: Vec<Frame>,
    /// `pairwise[i]` maps frame `i+1` coordinates onto frame `i` coordinates.
    pub pairwise: Vec<Homography>,
    /// Scene position of each frame's (0, 0) corner.
    pub origins: Vec<[f64; 2]>,
    /// The clean scene raster (no cast, no noise).
    pub scene: Frame,
}

/// Ground-truth manifest written next to generated frames and consumed by
/// the evaluation tools.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub frame_width: usize,
    pub frame_height: usize,
    pub frames: Vec<String>,
    pub scene: String,
    /// Row-major 3x3; entry `i` maps frame `i+1` coordinates onto frame `i`.
    pub pairwise_homographies: Vec<[f64; 9]>,
    pub origins: Vec<[f64; 2]>,
    pub seed: u64,
    pub noise_sigma: f64,
}

fn stretched_noise(w: usize, h: usize, sigma: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let noise = GrayImage::from_fn(w, h, |_, _| rng.random::<f32>());
    let smooth = gaussian_blur(&noise, sigma);
    let (lo, hi) = smooth
        .data()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = (hi - lo).max(1e-6);
    GrayImage::from_fn(w, h, |x, y| (smooth.get(x, y) - lo) / range)
}

fn build_scene(spec: &SceneSpec) -> Frame {
    let (w, h) = (spec.scene_width, spec.scene_height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = stretched_noise(w, h, spec.texture_sigma, &mut rng);
    let channels: Vec<GrayImage> = (0..3)
        .map(|_| stretched_noise(w, h, spec.texture_sigma, &mut rng))
        .collect();
    let band_field = spec
        .parallax
        .and_then(|b| b.texture_sigma)
        .map(|sigma| stretched_noise(w, h, sigma, &mut rng));
    Frame::from_fn(0, w, h, |x, y| {
        let (band_w, contrast) = match &spec.parallax {
            Some(b) => (b.weight(y as f64), b.contrast(y as f64)),
            None => (0.0, 1.0),
        };
        let mut px = [0u8; 3];
        for c in 0..3 {
            let bg = (0.7 * shared.get(x, y) + 0.3 * channels[c].get(x, y)) as f64;
            let v = match &band_field {
                Some(field) if band_w > 0.0 => field.get(x, y) as f64,
                _ => bg,
            };
            let v = 0.5 + (v - 0.5) * contrast;
            px[c] = ((0.1 + 0.8 * v) * 255.0).round() as u8;
        }
        px
    })
}

fn validate(spec: &SceneSpec) -> Result<(), SynthError> {
    let err = |msg: String| Err(SynthError::SpecInvalid(msg));
    if spec.n_frames == 0 {
        return err("n_frames must be at least 1".into());
    }
    if spec.frame_width < 1 || spec.frame_height < 1 {
        return err("frame dimensions must be at least 1".into());
    }
    if !spec.casts.is_empty() && spec.casts.len() != spec.n_frames {
        return err(format!(
            "casts must be empty or one per frame ({} given, {} frames)",
            spec.casts.len(),
            spec.n_frames
        ));
    }
    if let Some(b) = &spec.parallax {
        if b.y0 >= b.y1 || b.y1 > spec.scene_height {
            return err(format!("parallax band rows {}..{} out of range", b.y0, b.y1));
        }
    }
    for i in 0..spec.n_frames {
        let ox = i as f64 * spec.dx_per_frame;
        let oy = i as f64 * spec.dy_per_frame;
        let extra = spec.parallax.map_or(0.0, |b| b.extra_per_frame * i as f64);
        let min_x = ox + extra.min(0.0);
        let max_x = ox + (spec.frame_width - 1) as f64 + extra.max(0.0);
        if min_x < 0.0
            || oy < 0.0
            || max_x > (spec.scene_width - 1) as f64
            || oy + (spec.frame_height - 1) as f64 > (spec.scene_height - 1) as f64
        {
            return err(format!("frame {i} window exits the scene raster"));
        }
    }
    Ok(())
}

/// Renders the sequence. Deterministic for a given seed; the returned
/// homographies exactly relate the noise-free geometry of consecutive frames.
pub fn generate_sequence(spec: &SceneSpec) -> Result<GeneratedSequence, SynthError> {
    validate(spec)?;
    let scene = build_scene(spec);
    let planes: Vec<GrayImage> = (0..3)
        .map(|c| {
            GrayImage::from_fn(scene.width(), scene.height(), |x, y| {
                scene.pixel(x, y)[c] as f32 / 255.0
            })
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut origins = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let ox = i as f64 * spec.dx_per_frame;
        let oy = i as f64 * spec.dy_per_frame;
        origins.push([ox, oy]);
        let cast = spec.casts.get(i).copied().unwrap_or(ColorCast::none());
        let extra = spec.parallax.map_or(0.0, |b| b.extra_per_frame * i as f64);

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let frame = Frame::from_fn(i, spec.frame_width, spec.frame_height, |x, y| {
            let sy = y as f64 + oy;
            // The shear at the band boundary lands in the quiet zone, so a
            // hard displacement switch leaves no visible edge.
            let band_w = spec.parallax.map_or(0.0, |b| b.weight(sy));
            let sx = x as f64 + ox + extra * band_w;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = planes[c].sample_bilinear_clamped(sx, sy) as f64;
                let mut v = cast.gain[c] * v + cast.bias[c];
                if spec.noise_sigma > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v += spec.noise_sigma * n;
                }
                px[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
            px
        });
        frames.push(frame);
    }

    let pairwise = (1..spec.n_frames)
        .map(|_| Homography::translation(spec.dx_per_frame, spec.dy_per_frame))
        .collect();

    Ok(GeneratedSequence {
        frames,
        pairwise,
        origins,
        scene,
    })
}

/// Generates and writes the sequence into `dir`: numbered PNG frames, the
/// clean scene raster, and `manifest.json`.
pub fn write_sequence(dir: &Path, spec: &SceneSpec) -> Result<GroundTruthManifest, SynthError> {
    let seq = generate_sequence(spec)?;
    std::fs::create_dir_all(dir).map_err(|source| IoError::File {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for frame in &seq.frames {
        let name = format!("frame_{:03}.png", frame.index);
        write_frame_png(&dir.join(&name), frame)?;
        names.push(name);
    }
    write_frame_png(&dir.join("scene.png"), &seq.scene)?;
    let manifest = GroundTruthManifest {
        frame_width: spec.frame_width,
        frame_height: spec.frame_height,
        frames: names,
        scene: "scene.png".to_string(),
        pairwise_homographies: seq.pairwise.iter().map(|h| h.to_row_major()).collect(),
        origins: seq.origins.clone(),
        seed: spec.seed,
        noise_sigma: spec.noise_sigma,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json).map_err(|source| IoError::File {
        path: dir.join("manifest.json"),
        source,
    })?;
    Ok(manifest)
}

/// Reads a manifest written by [`write_sequence`].
pub fn read_manifest(path: &Path) -> Result<GroundTruthManifest, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| SynthError::SpecInvalid(format!("manifest parse error: {e}")))
}
