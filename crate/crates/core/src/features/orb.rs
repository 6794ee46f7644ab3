use std::f64::consts::TAU;

use super::brief::describe_with_pairs;
use super::{fast_detect, BinaryDescriptor, FastConfig, Keypoint, SamplingPattern};
use crate::error::{Error, Result};
use crate::image::{gaussian_blur, GrayImage};

pub const HARRIS_K: f64 = 0.04;
pub const ORIENTATION_BINS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbConfig {
    pub n_top: usize,
    pub fast: FastConfig,
    pub harris_block: u32,
    pub centroid_radius: u32,
    pub blur_sigma: f64,
    pub blur_kernel: usize,
}

impl Default for OrbConfig {
    fn default() -> Self {
        Self {
            n_top: 500,
            fast: FastConfig::default(),
            harris_block: 7,
            centroid_radius: 15,
            blur_sigma: 2.0,
            blur_kernel: 9,
        }
    }
}

/// Harris measure `det(M) - k trace(M)^2` of the central-difference structure
/// tensor summed uniformly over a `block`×`block` window.
pub fn harris_response(img: &GrayImage, x: u32, y: u32, block: u32) -> Result<f64> {
    if block.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "Harris block must be odd, got {block}"
        )));
    }
    let margin = block / 2 + 1;
    if !Keypoint::new(x, y, 0.0).has_margin(img.width(), img.height(), margin) {
        return Err(Error::OutOfBounds {
            x: x as i64,
            y: y as i64,
            margin,
        });
    }
    Ok(harris_unchecked(img, x, y, block))
}

fn harris_unchecked(img: &GrayImage, x: u32, y: u32, block: u32) -> f64 {
    let half = (block / 2) as i64;
    let stride = img.width() as i64;
    let data = img.data();
    let at = |x: i64, y: i64| data[(y * stride + x) as usize] as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for wy in y as i64 - half..=y as i64 + half {
        for wx in x as i64 - half..=x as i64 + half {
            let gx = (at(wx + 1, wy) - at(wx - 1, wy)) / 2.0;
            let gy = (at(wx, wy + 1) - at(wx, wy - 1)) / 2.0;
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    let trace = sxx + syy;
    sxx * syy - sxy * sxy - HARRIS_K * trace * trace
}

/// Orientation `atan2(m01, m10)` in `[0, 2π)` of the intensity centroid over a disc.
///
/// Returns 0 when both first-order moments vanish.
pub fn intensity_centroid_orientation(img: &GrayImage, kp: &Keypoint, radius: u32) -> Result<f64> {
    if !kp.has_margin(img.width(), img.height(), radius) {
        return Err(Error::OutOfBounds {
            x: kp.x as i64,
            y: kp.y as i64,
            margin: radius,
        });
    }
    Ok(centroid_unchecked(img, kp, radius))
}

fn centroid_unchecked(img: &GrayImage, kp: &Keypoint, radius: u32) -> f64 {
    let r = radius as i64;
    let stride = img.width() as i64;
    let data = img.data();
    let center = kp.y as i64 * stride + kp.x as i64;
    let (mut m10, mut m01) = (0i64, 0i64);
    for dy in -r..=r {
        // widest |dx| with dx^2 + dy^2 <= r^2
        let mut span = 0;
        while (span + 1) * (span + 1) + dy * dy <= r * r {
            span += 1;
        }
        let row = center + dy * stride;
        for dx in -span..=span {
            let v = data[(row + dx) as usize] as i64;
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    if m10 == 0 && m01 == 0 {
        return 0.0;
    }
    let theta = (m01 as f64).atan2(m10 as f64);
    if theta < 0.0 {
        (theta + TAU).min(TAU.next_down())
    } else {
        theta
    }
}

/// Index of the nearest of the `ORIENTATION_BINS` discrete angles.
pub fn orientation_bin(theta: f64) -> usize {
    let step = TAU / ORIENTATION_BINS as f64;
    ((theta / step).round() as i64).rem_euclid(ORIENTATION_BINS as i64) as usize
}

/// A sampling pattern pre-rotated to every discrete orientation.
#[derive(Clone, Debug)]
pub struct SteeredPattern {
    rotations: Vec<Vec<[(i32, i32); 2]>>,
    margin: u32,
}

impl SteeredPattern {
    pub fn new(pattern: &SamplingPattern) -> Self {
        let step = TAU / ORIENTATION_BINS as f64;
        let rotations: Vec<Vec<_>> = (0..ORIENTATION_BINS)
            .map(|bin| {
                let (sin, cos) = (bin as f64 * step).sin_cos();
                let rotate = |(x, y): (i32, i32)| {
                    let (x, y) = (x as f64, y as f64);
                    (
                        (x * cos - y * sin).round() as i32,
                        (x * sin + y * cos).round() as i32,
                    )
                };
                pattern
                    .pairs()
                    .iter()
                    .map(|&[a, b]| [rotate(a), rotate(b)])
                    .collect()
            })
            .collect();
        let reach = rotations
            .iter()
            .flatten()
            .flatten()
            .map(|&(x, y)| x.unsigned_abs().max(y.unsigned_abs()))
            .max()
            .unwrap_or(0);
        Self {
            rotations,
            margin: reach + 1,
        }
    }

    pub fn margin(&self) -> u32 {
        self.margin
    }

    pub fn pairs(&self, bin: usize) -> &[[(i32, i32); 2]] {
        &self.rotations[bin]
    }
}

/// Oriented FAST and rotated BRIEF.
///
/// FAST-9 with non-maximum suppression, the `n_top` strongest by Harris response,
/// intensity-centroid orientation binned to 30 steps, then BRIEF steered by the
/// binned angle on the smoothed image. Candidates too close to the border for
/// the steered pattern are dropped before ranking; the count is returned.
pub fn orb_detect_describe(
    img: &GrayImage,
    config: &OrbConfig,
    pattern: &SamplingPattern,
) -> Result<(Vec<(Keypoint, BinaryDescriptor)>, usize)> {
    let steered = SteeredPattern::new(pattern);
    orb_with_steered(img, config, &steered)
}

pub(crate) fn orb_with_steered(
    img: &GrayImage,
    config: &OrbConfig,
    steered: &SteeredPattern,
) -> Result<(Vec<(Keypoint, BinaryDescriptor)>, usize)> {
    if config.harris_block.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "Harris block must be odd, got {}",
            config.harris_block
        )));
    }
    let fast = FastConfig {
        nms: true,
        ..config.fast
    };
    let corners = fast_detect(img, &fast)?;
    let margin = steered
        .margin()
        .max(config.centroid_radius)
        .max(config.harris_block / 2 + 1);
    let (w, h) = (img.width(), img.height());

    let mut ranked: Vec<(f64, Keypoint)> = corners
        .iter()
        .filter(|kp| kp.has_margin(w, h, margin))
        .map(|kp| (harris_unchecked(img, kp.x, kp.y, config.harris_block), *kp))
        .collect();
    let dropped = corners.len() - ranked.len();
    ranked.sort_by(|(ra, a), (rb, b)| rb.total_cmp(ra).then((a.y, a.x).cmp(&(b.y, b.x))));
    ranked.truncate(config.n_top);

    let smoothed = gaussian_blur(img, config.blur_sigma, config.blur_kernel)?;
    let step = TAU / ORIENTATION_BINS as f64;
    let out = ranked
        .into_iter()
        .map(|(_, kp)| {
            let theta = centroid_unchecked(img, &kp, config.centroid_radius);
            let bin = orientation_bin(theta);
            let kp = Keypoint {
                orientation: bin as f64 * step,
                ..kp
            };
            let desc = describe_with_pairs(&smoothed, &kp, steered.pairs(bin));
            (kp, desc)
        })
        .collect();
    Ok((out, dropped))
}
