//! Feature point detection and description.
//!
//! FAST-9 corners, BRIEF binary descriptors and their oriented ORB variant are
//! computed here directly; other detector-descriptors (SIFT, SURF, A-KAZE) enter
//! through [`keypoint_file`].

mod brief;
mod fast;
pub mod keypoint_file;
pub(crate) mod orb;

pub use brief::{brief_describe, describe_all, BinaryDescriptor, SamplingPattern};
pub use brief::{DEFAULT_PAIRS, DEFAULT_PATCH_SIZE, DEFAULT_PATTERN_SEED};
pub use fast::{fast_detect, fast_score, segment_test, FastConfig, CIRCLE, DEFAULT_FAST_THRESHOLD};
pub use keypoint_file::{ingest_keypoint_file, write_keypoint_file, KeypointFile};
pub use orb::{
    harris_response, intensity_centroid_orientation, orb_detect_describe, OrbConfig,
    SteeredPattern, HARRIS_K, ORIENTATION_BINS,
};

/// A detected feature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    /// Corner response; for FAST this is the highest passing threshold.
    pub score: f64,
    /// Radians in `[0, 2π)`, zero for detectors without orientation.
    pub orientation: f64,
}

impl Keypoint {
    pub fn new(x: u32, y: u32, score: f64) -> Self {
        Self {
            x,
            y,
            score,
            orientation: 0.0,
        }
    }

    /// True if the point is at least `margin` pixels away from every image border.
    pub fn has_margin(&self, width: u32, height: u32, margin: u32) -> bool {
        self.x >= margin
            && self.y >= margin
            && self.x + margin < width
            && self.y + margin < height
    }
}
