use super::Keypoint;
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DEFAULT_FAST_THRESHOLD: u8 = 20;

/// Bresenham circle of radius 3, clockwise from twelve o'clock.
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const RADIUS: u32 = 3;
const MAX_THRESHOLD: u8 = 254;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FastConfig {
    pub threshold: u8,
    /// Minimum number of contiguous circle pixels, 9 for FAST-9.
    pub arc_length: u8,
    pub nms: bool,
}

impl Default for FastConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_FAST_THRESHOLD,
            arc_length: 9,
            nms: true,
        }
    }
}

impl FastConfig {
    pub fn new(threshold: u8, nms: bool) -> Self {
        Self {
            threshold,
            nms,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=MAX_THRESHOLD).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!(
                "FAST threshold must be in 1..=254, got {}",
                self.threshold
            )));
        }
        if !(1..=16).contains(&self.arc_length) {
            return Err(Error::InvalidArgument(format!(
                "arc length must be in 1..=16, got {}",
                self.arc_length
            )));
        }
        Ok(())
    }
}

struct Ring {
    offsets: [isize; 16],
    stride: usize,
}

impl Ring {
    fn new(width: u32) -> Self {
        let stride = width as usize;
        let mut offsets = [0isize; 16];
        for (o, &(dx, dy)) in offsets.iter_mut().zip(CIRCLE.iter()) {
            *o = dy as isize * stride as isize + dx as isize;
        }
        Self { offsets, stride }
    }

    #[inline]
    fn pixel(&self, data: &[u8], center: usize, k: usize) -> i16 {
        data[(center as isize + self.offsets[k]) as usize] as i16
    }

    /// Bit masks of circle pixels brighter than `p + t` and darker than `p - t`.
    #[inline]
    fn masks(&self, data: &[u8], center: usize, t: i16) -> (u16, u16) {
        let p = data[center] as i16;
        let (hi, lo) = (p + t, p - t);
        let mut bright = 0u16;
        let mut dark = 0u16;
        for k in 0..16 {
            let v = self.pixel(data, center, k);
            bright |= ((v > hi) as u16) << k;
            dark |= ((v < lo) as u16) << k;
        }
        (bright, dark)
    }
}

#[inline]
fn has_arc(mask: u16, arc: u8) -> bool {
    if arc == 16 {
        return mask == u16::MAX;
    }
    let doubled = mask as u32 | (mask as u32) << 16;
    let mut run = doubled;
    for shift in 1..arc as u32 {
        run &= doubled >> shift;
        if run == 0 {
            return false;
        }
    }
    run != 0
}

#[inline]
fn passes(ring: &Ring, data: &[u8], center: usize, t: i16, arc: u8) -> bool {
    let (bright, dark) = ring.masks(data, center, t);
    has_arc(bright, arc) || has_arc(dark, arc)
}

/// Segment test at `(x, y)`: `arc_length` contiguous circle pixels all brighter
/// than `I(p) + t` or all darker than `I(p) - t`. The point must be 3 px inside.
pub fn segment_test(img: &GrayImage, x: u32, y: u32, threshold: u8, arc_length: u8) -> bool {
    assert!(
        Keypoint::new(x, y, 0.0).has_margin(img.width(), img.height(), RADIUS),
        "segment test needs a 3 pixel margin"
    );
    let ring = Ring::new(img.width());
    let center = y as usize * ring.stride + x as usize;
    passes(&ring, img.data(), center, threshold as i16, arc_length)
}

fn score_at(ring: &Ring, data: &[u8], center: usize, threshold: u8, arc: u8) -> u8 {
    // passes(t) is monotone non-increasing in t
    let (mut lo, mut hi) = (threshold, MAX_THRESHOLD);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if passes(ring, data, center, mid as i16, arc) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Largest threshold `t* >= threshold` at which the FAST-9 segment test still passes.
///
/// The caller guarantees the point passes at `threshold`.
pub fn fast_score(img: &GrayImage, x: u32, y: u32, threshold: u8) -> u8 {
    let ring = Ring::new(img.width());
    let center = y as usize * ring.stride + x as usize;
    debug_assert!(passes(&ring, img.data(), center, threshold as i16, 9));
    score_at(&ring, img.data(), center, threshold, 9)
}

/// FAST corner detection with optional 3×3 non-maximum suppression.
///
/// Keypoints are returned in row-major order.
pub fn fast_detect(img: &GrayImage, config: &FastConfig) -> Result<Vec<Keypoint>> {
    config.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < 2 * RADIUS + 1 || h < 2 * RADIUS + 1 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 2 * RADIUS + 1,
        });
    }

    let data = img.data();
    let ring = Ring::new(w);
    let t = config.threshold as i16;
    let arc = config.arc_length;
    // Any arc of n contiguous pixels covers at least n/4 of the compass points.
    let min_compass = (arc / 4) as u32;

    let mut scores = vec![0u8; data.len()];
    let mut found = Vec::new();
    for y in RADIUS..h - RADIUS {
        let row = y as usize * ring.stride;
        for x in RADIUS..w - RADIUS {
            let center = row + x as usize;
            let p = data[center] as i16;
            let (hi, lo) = (p + t, p - t);
            let mut n_bright = 0;
            let mut n_dark = 0;
            for k in [0, 8, 4, 12] {
                let v = ring.pixel(data, center, k);
                n_bright += (v > hi) as u32;
                n_dark += (v < lo) as u32;
            }
            if n_bright < min_compass && n_dark < min_compass {
                continue;
            }
            if !passes(&ring, data, center, t, arc) {
                continue;
            }
            let score = score_at(&ring, data, center, config.threshold, arc);
            scores[center] = score;
            found.push(Keypoint::new(x, y, score as f64));
        }
    }

    if !config.nms {
        return Ok(found);
    }

    let stride = ring.stride;
    Ok(found
        .into_iter()
        .filter(|kp| {
            let center = kp.y as usize * stride + kp.x as usize;
            let own = scores[center];
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (kp.x as i64 + dx, kp.y as i64 + dy);
                    let other = scores[(ny as usize) * stride + nx as usize];
                    // (dy, dx) < 0 lexicographically means the neighbour precedes us
                    if other > own || (other == own && other > 0 && (dy, dx) < (0, 0)) {
                        return false;
                    }
                }
            }
            true
        })
        .collect())
}
