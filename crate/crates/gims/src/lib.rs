//! Graph-based image matching.
//!
//! The pipeline turns a pair of images into a set of keypoint
//! correspondences and a homography estimate:
//!
//! 1. **Detection** ([`imagekp`]) – difference-of-Gaussians keypoints with
//!    orientation, plus oriented patch extraction from the scale pyramid.
//! 2. **Description** ([`descriptor`]) – gradient-histogram or raw-patch
//!    descriptors, or externally supplied ones.
//! 3. **Graph construction** ([`agc`]) – adaptive coarse-to-fine graph over
//!    keypoints (radius candidates, percentile similarity filter, isolated
//!    vertex repair, small-component removal, component stitching), plus
//!    classic baseline builders for comparison.
//! 4. **Encoding** ([`encoder`]) – GraphSAGE message passing, positional
//!    MLP, and alternating self/cross attention over both graphs.
//! 5. **Assignment** ([`matcher`]) – dustbin-augmented score matrix,
//!    log-domain Sinkhorn, mutual-max match extraction.
//! 6. **Geometry** ([`geometry`]) – DLT + RANSAC homography and the
//!    corner-error AUC metric.
//! 7. **Training** ([`trainer`]) – synthetic homography pairs, assignment
//!    NLL, hand-written backprop through the whole stack, Adam.
//!
//! File formats shared with the CLI live in [`formats`].

pub mod agc;
pub mod compare;
pub mod core;
pub mod descriptor;
pub mod encoder;
pub mod formats;
pub mod geometry;
pub mod imagekp;
pub mod matcher;
pub mod perf;
pub mod spatial;
pub mod trainer;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
