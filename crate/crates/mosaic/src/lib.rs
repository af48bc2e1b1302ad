//! Mosaic construction from ordered sequences of overlapping video frames.
//!
//! The pipeline stages are:
//!
//! 1. **Frame selection** – discard near-duplicate frames by measuring the
//!    mutual offset between frames with SAD block matching.
//! 2. **Color alignment** – map each selected frame's per-channel intensity
//!    distribution onto the previous frame's mean and standard deviation.
//! 3. **Registration** – DoG keypoints described by CS-LBP grid histograms,
//!    matched with the nearest-neighbor distance ratio test, homography
//!    estimated with RANSAC.
//! 4. **Compositing** – pairwise transforms chained into a global canvas,
//!    frames warped and merged with multi-band (Laplacian pyramid) blending.
//!
//! The [`pipeline`] module orchestrates the stages end to end; [`synth`]
//! generates test sequences with known ground truth and [`eval`] scores
//! detector repeatability and matching recall/precision against it.

pub mod blend;
pub mod color;
pub mod config;
pub mod cslbp;
pub mod detect;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod register;
pub mod select;
pub mod synth;

pub use raster::{to_grayscale, warp_perspective, Frame, GrayImage, Homography, Mask};
