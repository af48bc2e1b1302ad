//! Descriptor matching and robust homography estimation.
//!
//! Matching uses the nearest-neighbor distance ratio test with a
//! mutual-uniqueness filter on train indices. The homography relating the
//! matched point sets is estimated with RANSAC — iteration count sized from
//! the outlier ratio, minimal 4-point samples fit by a normalized direct
//! linear transform, degenerate (collinear) samples rejected — and refit by
//! least squares on the best consensus set.

use crate::cslbp::Descriptor;
use crate::raster::Homography;
use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Points per minimal homography sample.
pub const RANSAC_SAMPLE_SIZE: usize = 4;

/// Collinearity tolerance (px) for degenerate-sample rejection.
const DEGENERACY_TOLERANCE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("homography estimation needs at least 4 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("no consensus: best inlier count {best} of {total} matches")]
    NoConsensus { best: usize, total: usize },
}

/// An accepted descriptor correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    /// L2 distance to the nearest train descriptor.
    pub distance: f32,
    /// Distance ratio d1/d2 against the second-nearest.
    pub ratio: f32,
}

/// RANSAC sizing and acceptance parameters.
#[derive(Debug, Clone, Copy)]
pub struct RansacConfig {
    /// Probability that at least one sample is outlier-free.
    pub success_prob: f64,
    /// Assumed prior outlier ratio `v`; re-estimated adaptively.
    pub assumed_outlier_ratio: f64,
    /// Symmetric reprojection error (px) below which a match is an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            success_prob: 0.99,
            assumed_outlier_ratio: 0.5,
            inlier_threshold: 3.0,
            max_iterations: 2000,
            seed: 0,
        }
    }
}

/// Robust estimation output: model, per-match inlier flags and fit quality.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Maps query coordinates onto train coordinates.
    pub homography: Homography,
    pub inlier_mask: Vec<bool>,
    pub iterations_used: usize,
    /// Mean symmetric reprojection error over inliers, in pixels.
    pub mean_reproj_error: f64,
}

impl RegistrationResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Nearest-neighbor distance ratio matching. Each query keeps its nearest
/// train descriptor iff `d1/d2 < ratio_threshold`; matches sharing a train
/// index keep only the closest one. Empty inputs yield an empty list.
pub fn match_nndr(query: &[Descriptor], train: &[Descriptor], ratio_threshold: f32) -> Vec<Match> {
    if query.is_empty() || train.len() < 2 {
        return Vec::new();
    }
    let candidates: Vec<Option<Match>> = query
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut d1 = f32::INFINITY;
            let mut d2 = f32::INFINITY;
            let mut best = 0usize;
            for (ti, t) in train.iter().enumerate() {
                let d = q.distance(t);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    best = ti;
                } else if d < d2 {
                    d2 = d;
                }
            }
            let ratio = if d2 > 0.0 { d1 / d2 } else { 1.0 };
            (ratio < ratio_threshold).then_some(Match {
                query_idx: qi,
                train_idx: best,
                distance: d1,
                ratio,
            })
        })
        .collect();

    // Mutual uniqueness: one match per train index, smallest distance wins.
    let mut by_train: std::collections::HashMap<usize, Match> = std::collections::HashMap::new();
    for m in candidates.into_iter().flatten() {
        by_train
            .entry(m.train_idx)
            .and_modify(|cur| {
                if m.distance < cur.distance {
                    *cur = m;
                }
            })
            .or_insert(m);
    }
    let mut matches: Vec<Match> = by_train.into_values().collect();
    matches.sort_by_key(|m| m.query_idx);
    matches
}

/// Number of RANSAC iterations `N = ceil(log(1-p) / log(1-(1-v)^m))` for
/// sample size `m = 4`, capped at `max_iterations`; 1 when `v = 0`.
pub fn ransac_iterations(cfg: &RansacConfig) -> usize {
    iterations_for(cfg.success_prob, cfg.assumed_outlier_ratio, cfg.max_iterations)
}

fn iterations_for(p: f64, v: f64, cap: usize) -> usize {
    if v <= 0.0 {
        return 1;
    }
    let inlier_sample_prob = (1.0 - v).powi(RANSAC_SAMPLE_SIZE as i32);
    if inlier_sample_prob <= 0.0 {
        return cap;
    }
    let n = (1.0 - p).ln() / (1.0 - inlier_sample_prob).ln();
    if !n.is_finite() {
        return cap;
    }
    (n.ceil().max(1.0) as usize).min(cap)
}

fn point_of(list: &[(f64, f64)], idx: usize) -> (f64, f64) {
    list[idx]
}

/// True when any three of the four points are collinear within
/// [`DEGENERACY_TOLERANCE`] (or two coincide).
fn sample_degenerate(pts: &[(f64, f64); 4]) -> bool {
    for skip in 0..4 {
        let tri: Vec<(f64, f64)> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        let (ax, ay) = tri[0];
        let (bx, by) = tri[1];
        let (cx, cy) = tri[2];
        let ab = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        if ab < 1e-9 {
            return true;
        }
        let cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if cross.abs() / ab < DEGENERACY_TOLERANCE {
            return true;
        }
    }
    false
}

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
fn normalizing_transform(pts: &[(f64, f64)]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (cx, cy) = (cx / n, cy / n);
    let mean_dist = pts
        .iter()
        .map(|(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-9 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Direct linear transform on `n >= 4` correspondences (query -> train),
/// with Hartley point normalization for conditioning.
fn fit_homography_dlt(query: &[(f64, f64)], train: &[(f64, f64)]) -> Option<Homography> {
    let n = query.len();
    debug_assert!(n >= 4 && train.len() == n);
    let tq = normalizing_transform(query)?;
    let tt = normalizing_transform(train)?;

    let norm = |t: &Matrix3<f64>, (x, y): (f64, f64)| {
        let v = t * nalgebra::Vector3::new(x, y, 1.0);
        (v[0] / v[2], v[1] / v[2])
    };

    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let (x, y) = norm(&tq, query[i]);
        let (u, v) = norm(&tt, train[i]);
        a[(2 * i, 0)] = -x;
        a[(2 * i, 1)] = -y;
        a[(2 * i, 2)] = -1.0;
        a[(2 * i, 6)] = u * x;
        a[(2 * i, 7)] = u * y;
        a[(2 * i, 8)] = u;
        a[(2 * i + 1, 3)] = -x;
        a[(2 * i + 1, 4)] = -y;
        a[(2 * i + 1, 5)] = -1.0;
        a[(2 * i + 1, 6)] = v * x;
        a[(2 * i + 1, 7)] = v * y;
        a[(2 * i + 1, 8)] = v;
    }

    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let min_idx = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)?;
    let h_vec = eig.eigenvectors.column(min_idx);
    let h_norm = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], h_vec[3], h_vec[4], h_vec[5], h_vec[6], h_vec[7], h_vec[8],
    );

    let h = tt.try_inverse()? * h_norm * tq;
    Homography::from_matrix(h).ok()
}

/// Symmetric reprojection error: mean of the forward and backward transfer
/// distances.
fn symmetric_error(h: &Homography, h_inv: &Homography, q: (f64, f64), t: (f64, f64)) -> f64 {
    let fwd = match h.apply(q.0, q.1) {
        Some((x, y)) => ((x - t.0).powi(2) + (y - t.1).powi(2)).sqrt(),
        None => return f64::INFINITY,
    };
    let bwd = match h_inv.apply(t.0, t.1) {
        Some((x, y)) => ((x - q.0).powi(2) + (y - q.1).powi(2)).sqrt(),
        None => return f64::INFINITY,
    };
    (fwd + bwd) / 2.0
}

fn score_model(
    h: &Homography,
    query: &[(f64, f64)],
    train: &[(f64, f64)],
    threshold: f64,
) -> Option<(Vec<bool>, usize, f64)> {
    let h_inv = h.inverse().ok()?;
    let mut mask = vec![false; query.len()];
    let mut count = 0usize;
    let mut err_sum = 0.0;
    for i in 0..query.len() {
        let e = symmetric_error(h, &h_inv, query[i], train[i]);
        if e < threshold {
            mask[i] = true;
            count += 1;
            err_sum += e;
        }
    }
    let mean = if count > 0 { err_sum / count as f64 } else { f64::INFINITY };
    Some((mask, count, mean))
}

/// RANSAC homography estimation over matched point lists. `pts_query[i]` and
/// `pts_train[i]` are the locations of descriptor `i` in each image; the
/// returned model maps query coordinates onto train coordinates.
pub fn estimate_homography(
    matches: &[Match],
    pts_query: &[(f64, f64)],
    pts_train: &[(f64, f64)],
    cfg: &RansacConfig,
) -> Result<RegistrationResult, RegisterError> {
    let n = matches.len();
    if n < RANSAC_SAMPLE_SIZE {
        return Err(RegisterError::InsufficientMatches(n));
    }
    let query: Vec<(f64, f64)> = matches.iter().map(|m| point_of(pts_query, m.query_idx)).collect();
    let train: Vec<(f64, f64)> = matches.iter().map(|m| point_of(pts_train, m.train_idx)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut target = ransac_iterations(cfg);
    let mut best: Option<(Homography, Vec<bool>, usize)> = None;
    let mut it = 0usize;

    while it < target {
        it += 1;
        // Draw 4 distinct match indices.
        let mut idx = [0usize; RANSAC_SAMPLE_SIZE];
        let mut filled = 0;
        while filled < RANSAC_SAMPLE_SIZE {
            let c = rng.random_range(0..n);
            if !idx[..filled].contains(&c) {
                idx[filled] = c;
                filled += 1;
            }
        }
        let sq = [query[idx[0]], query[idx[1]], query[idx[2]], query[idx[3]]];
        let st = [train[idx[0]], train[idx[1]], train[idx[2]], train[idx[3]]];
        if sample_degenerate(&sq) || sample_degenerate(&st) {
            continue;
        }
        let Some(h) = fit_homography_dlt(&sq, &st) else {
            continue;
        };
        let Some((mask, count, _)) = score_model(&h, &query, &train, cfg.inlier_threshold) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, _, c)| count > *c) {
            best = Some((h, mask, count));
            // Re-size the iteration budget from the observed inlier ratio;
            // never below what the static bound demands for it.
            let observed_outlier = 1.0 - count as f64 / n as f64;
            let adaptive = iterations_for(cfg.success_prob, observed_outlier, cfg.max_iterations);
            target = target.min(adaptive.max(it));
        }
    }

    let Some((minimal_h, minimal_mask, best_count)) = best else {
        return Err(RegisterError::NoConsensus { best: 0, total: n });
    };
    if best_count < RANSAC_SAMPLE_SIZE || (best_count as f64) < 0.1 * n as f64 {
        return Err(RegisterError::NoConsensus {
            best: best_count,
            total: n,
        });
    }

    // Least-squares refit on the consensus set, kept only if it still
    // explains at least as valid a set.
    let inlier_q: Vec<(f64, f64)> = (0..n).filter(|&i| minimal_mask[i]).map(|i| query[i]).collect();
    let inlier_t: Vec<(f64, f64)> = (0..n).filter(|&i| minimal_mask[i]).map(|i| train[i]).collect();
    let refit = fit_homography_dlt(&inlier_q, &inlier_t)
        .and_then(|h| score_model(&h, &query, &train, cfg.inlier_threshold).map(|s| (h, s)));

    let (homography, (inlier_mask, count, mean_err)) = match refit {
        Some((h, s)) if s.1 >= RANSAC_SAMPLE_SIZE => (h, s),
        _ => {
            let s = score_model(&minimal_h, &query, &train, cfg.inlier_threshold)
                .expect("minimal model scored before");
            (minimal_h, s)
        }
    };
    debug_assert!(count >= RANSAC_SAMPLE_SIZE);

    Ok(RegistrationResult {
        homography,
        inlier_mask,
        iterations_used: it,
        mean_reproj_error: mean_err,
    })
}
