//! Pipeline configuration and the flat `key = value` config file format.
//!
//! Every key is optional; unset keys keep their documented defaults. Lines
//! starting with `#` and blank lines are ignored.

use crate::cslbp::CslbpParams;
use crate::detect::ScaleSpaceConfig;
use crate::register::RansacConfig;
use crate::select::BlockMatchConfig;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected 'key = value', got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("config key '{key}': cannot parse '{value}' ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
}

/// How overlapping frames are composited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendMode {
    /// Hard-mask composite; keeps the ghosting/seams that blending removes.
    None,
    /// Laplacian-pyramid multi-band blending.
    Multiband,
}

/// Everything the end-to-end pipeline needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub block: BlockMatchConfig,
    /// Keyframe offset threshold in pixels; `None` means 25% of frame width.
    pub offset_threshold: Option<usize>,
    /// Chained statistical color alignment (disable for ablation).
    pub color_align: bool,
    pub detect: ScaleSpaceConfig,
    pub cslbp: CslbpParams,
    pub nndr_ratio: f32,
    pub ransac: RansacConfig,
    pub blend_mode: BlendMode,
    /// Pyramid levels for blending; `None` derives from the overlap size.
    pub blend_levels: Option<usize>,
    /// Record stage timings in the report (off keeps reports byte-identical
    /// across runs).
    pub record_timings: bool,
    /// Dump per-stage debug artifacts here when set.
    pub debug_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            block: BlockMatchConfig::default(),
            offset_threshold: None,
            color_align: true,
            detect: ScaleSpaceConfig::default(),
            cslbp: CslbpParams::default(),
            nndr_ratio: 0.8,
            ransac: RansacConfig::default(),
            blend_mode: BlendMode::Multiband,
            blend_levels: None,
            record_timings: false,
            debug_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Effective keyframe threshold for a given frame width.
    pub fn offset_threshold_for(&self, frame_width: usize) -> usize {
        self.offset_threshold.unwrap_or((frame_width / 4).max(1))
    }

    /// Cross-field sanity checks that need the frame dimensions.
    pub fn validate_for(&self, frame_width: usize, frame_height: usize) -> Result<(), ConfigError> {
        let needed = self.block.block_size + 2 * self.block.search_range;
        if needed >= frame_width {
            return Err(ConfigError::BadValue {
                key: "search_range".into(),
                value: self.block.search_range.to_string(),
                reason: format!(
                    "block {} plus 2x search range must fit in frame width {frame_width}",
                    self.block.block_size
                ),
            });
        }
        if self.block.block_size >= frame_height {
            return Err(ConfigError::BadValue {
                key: "block_size".into(),
                value: self.block.block_size.to_string(),
                reason: format!("must fit in frame height {frame_height}"),
            });
        }
        if self.block.block_size < 3 || self.block.block_size % 2 == 0 {
            return Err(ConfigError::BadValue {
                key: "block_size".into(),
                value: self.block.block_size.to_string(),
                reason: "must be odd and at least 3".into(),
            });
        }
        if !(0.0..1.0).contains(&self.ransac.assumed_outlier_ratio) {
            return Err(ConfigError::BadValue {
                key: "ransac_outlier_ratio".into(),
                value: self.ransac.assumed_outlier_ratio.to_string(),
                reason: "must lie in [0, 1)".into(),
            });
        }
        if !(0.0..1.0).contains(&self.ransac.success_prob) || self.ransac.success_prob == 0.0 {
            return Err(ConfigError::BadValue {
                key: "ransac_p".into(),
                value: self.ransac.success_prob.to_string(),
                reason: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }

    /// Parses the flat `key = value` config text over the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: lineno + 1,
                text: line.to_string(),
            })?;
            cfg.apply_kv(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one key/value pair.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        }
        match key {
            "block_size" => self.block.block_size = parse(key, value)?,
            "search_range" => self.block.search_range = parse(key, value)?,
            "offset_threshold" => self.offset_threshold = Some(parse(key, value)?),
            "color_align" => self.color_align = parse(key, value)?,
            "octaves" => self.detect.octaves = Some(parse(key, value)?),
            "scales_per_octave" => self.detect.scales_per_octave = parse(key, value)?,
            "base_sigma" => self.detect.base_sigma = parse(key, value)?,
            "contrast_threshold" => self.detect.contrast_threshold = parse(key, value)?,
            "edge_ratio" => self.detect.edge_ratio_threshold = parse(key, value)?,
            "max_keypoints" => self.detect.max_keypoints = parse(key, value)?,
            "cslbp_radius" => self.cslbp.radius = parse(key, value)?,
            "cslbp_neighbors" => self.cslbp.neighbors = parse(key, value)?,
            "cslbp_threshold" => self.cslbp.threshold = parse(key, value)?,
            "cslbp_grid" => self.cslbp.grid = parse(key, value)?,
            "region_scale" => self.cslbp.region_scale = parse(key, value)?,
            "nndr_ratio" => self.nndr_ratio = parse(key, value)?,
            "ransac_p" => self.ransac.success_prob = parse(key, value)?,
            "ransac_outlier_ratio" => self.ransac.assumed_outlier_ratio = parse(key, value)?,
            "ransac_inlier_px" => self.ransac.inlier_threshold = parse(key, value)?,
            "ransac_max_iter" => self.ransac.max_iterations = parse(key, value)?,
            "seed" => self.ransac.seed = parse(key, value)?,
            "blend" => {
                self.blend_mode = match value {
                    "none" => BlendMode::None,
                    "multiband" => BlendMode::Multiband,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: other.to_string(),
                            reason: "expected 'none' or 'multiband'".into(),
                        })
                    }
                }
            }
            "blend_levels" => self.blend_levels = Some(parse(key, value)?),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}
