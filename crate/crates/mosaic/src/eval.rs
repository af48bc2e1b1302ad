//! Detector and matching evaluation against known ground-truth homographies:
//! repeatability, recall and 1-precision over synthetic or warped-real pairs.

use crate::cslbp::{describe_all, CslbpParams};
use crate::detect::{detect_keypoints, DetectError, ScaleSpaceConfig};
use crate::raster::{GrayImage, Homography};
use crate::register::{estimate_homography, match_nndr, RansacConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("repeatability undefined: both keypoint lists are empty")]
    ZeroKeypoints,
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Known mapping from left-frame points to right-frame points, plus the
/// acceptance radius for counting a correspondence as correct.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth {
    pub homography: Homography,
    pub tolerance_px: f64,
}

/// One evaluation row in the benchmark-table layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub left_keypoints: usize,
    pub right_keypoints: usize,
    /// NNDR matches (pre-RANSAC).
    pub matches: usize,
    /// RANSAC inliers among the matches (post-RANSAC).
    pub inliers: usize,
    pub repeatability: f64,
    pub recall: f64,
    pub one_minus_precision: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str =
        "left_keypoints,right_keypoints,matches,inliers,repeatability,recall,one_minus_precision";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3}",
            self.left_keypoints,
            self.right_keypoints,
            self.matches,
            self.inliers,
            self.repeatability,
            self.recall,
            self.one_minus_precision
        )
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Repeatability `matched / (left + right)`, rounded to 3 decimals for
/// reporting.
pub fn repeatability(left_count: usize, right_count: usize, matched: usize) -> Result<f64, EvalError> {
    if left_count + right_count == 0 {
        return Err(EvalError::ZeroKeypoints);
    }
    Ok(round3(matched as f64 / (left_count + right_count) as f64))
}

/// Scores matched point pairs against the ground truth: a match is correct
/// iff the homography maps its left point within `tolerance_px` of its right
/// point. Returns `(recall, 1-precision)`; both 0 when there are no matches.
pub fn recall_precision(
    matched_pairs: &[((f64, f64), (f64, f64))],
    gt: &GroundTruth,
    total_gt_correspondences: usize,
) -> (f64, f64) {
    assert!(total_gt_correspondences >= 1, "needs at least one ground-truth correspondence");
    let mut correct = 0usize;
    for &((lx, ly), (rx, ry)) in matched_pairs {
        let mapped = gt.homography.apply(lx, ly);
        if let Some((mx, my)) = mapped {
            if ((mx - rx).powi(2) + (my - ry).powi(2)).sqrt() <= gt.tolerance_px {
                correct += 1;
            }
        }
    }
    let false_matches = matched_pairs.len() - correct;
    let recall = correct as f64 / total_gt_correspondences as f64;
    let one_minus_precision = if matched_pairs.is_empty() {
        0.0
    } else {
        false_matches as f64 / (correct + false_matches) as f64
    };
    (recall, one_minus_precision)
}

/// Ground-truth correspondence count: left keypoints whose mapped position
/// lands inside the right frame with a detected right keypoint within
/// tolerance.
pub fn count_gt_correspondences(
    left: &[(f64, f64)],
    right: &[(f64, f64)],
    gt: &GroundTruth,
    right_width: usize,
    right_height: usize,
) -> usize {
    left.iter()
        .filter(|&&(x, y)| {
            let Some((mx, my)) = gt.homography.apply(x, y) else {
                return false;
            };
            if mx < 0.0 || my < 0.0 || mx > (right_width - 1) as f64 || my > (right_height - 1) as f64 {
                return false;
            }
            right
                .iter()
                .any(|&(rx, ry)| ((mx - rx).powi(2) + (my - ry).powi(2)).sqrt() <= gt.tolerance_px)
        })
        .count()
}

/// Evaluation knobs for [`evaluate_pair`].
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub detect: ScaleSpaceConfig,
    pub cslbp: CslbpParams,
    pub nndr_ratio: f32,
    pub ransac: RansacConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            detect: ScaleSpaceConfig::default(),
            cslbp: CslbpParams::default(),
            nndr_ratio: 0.8,
            ransac: RansacConfig::default(),
        }
    }
}

/// Runs the full detect/describe/match protocol on a left/right pair and
/// scores it against the ground truth.
pub fn evaluate_pair(
    left: &GrayImage,
    right: &GrayImage,
    gt: &GroundTruth,
    cfg: &EvalConfig,
) -> Result<MetricRow, EvalError> {
    let left_kps = detect_keypoints(left, &cfg.detect)?;
    let right_kps = detect_keypoints(right, &cfg.detect)?;
    let left_desc = describe_all(left, &left_kps, &cfg.cslbp);
    let right_desc = describe_all(right, &right_kps, &cfg.cslbp);

    let matches = match_nndr(&left_desc, &right_desc, cfg.nndr_ratio);
    let pts_l: Vec<(f64, f64)> = left_desc.iter().map(|d| (d.keypoint.x, d.keypoint.y)).collect();
    let pts_r: Vec<(f64, f64)> = right_desc.iter().map(|d| (d.keypoint.x, d.keypoint.y)).collect();
    let inliers = estimate_homography(&matches, &pts_l, &pts_r, &cfg.ransac)
        .map(|r| r.inlier_count())
        .unwrap_or(0);

    let matched_pairs: Vec<((f64, f64), (f64, f64))> = matches
        .iter()
        .map(|m| (pts_l[m.query_idx], pts_r[m.train_idx]))
        .collect();
    let left_pts_all: Vec<(f64, f64)> = left_kps.iter().map(|k| (k.x, k.y)).collect();
    let right_pts_all: Vec<(f64, f64)> = right_kps.iter().map(|k| (k.x, k.y)).collect();
    let total_gt = count_gt_correspondences(
        &left_pts_all,
        &right_pts_all,
        gt,
        right.width(),
        right.height(),
    );

    let (recall, one_minus_precision) = if total_gt == 0 {
        (0.0, 0.0)
    } else {
        recall_precision(&matched_pairs, gt, total_gt)
    };

    Ok(MetricRow {
        left_keypoints: left_kps.len(),
        right_keypoints: right_kps.len(),
        matches: matches.len(),
        inliers,
        repeatability: repeatability(left_kps.len(), right_kps.len(), matches.len()).unwrap_or(0.0),
        recall: round3(recall),
        one_minus_precision: round3(one_minus_precision),
    })
}
