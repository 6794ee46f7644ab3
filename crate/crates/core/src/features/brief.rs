use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Keypoint;
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DEFAULT_PATCH_SIZE: u32 = 31;
pub const DEFAULT_PAIRS: usize = 256;
pub const DEFAULT_PATTERN_SEED: u64 = 0x5DEEC6;

/// Packed result of the pairwise intensity tests, bit `j` at byte `j / 8`, position `j % 8`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor {
    bytes: Vec<u8>,
}

impl BinaryDescriptor {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn n_bits(&self) -> usize {
        self.bytes.len() * 8
    }

    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        self.bytes[j / 8] >> (j % 8) & 1 == 1
    }

    pub fn hamming_distance(&self, other: &Self) -> u32 {
        assert_eq!(self.bytes.len(), other.bytes.len());
        self.bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Point pairs for the BRIEF intensity tests, offsets relative to the keypoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingPattern {
    pairs: Vec<[(i32, i32); 2]>,
    patch_size: u32,
    seed: u64,
}

impl Default for SamplingPattern {
    fn default() -> Self {
        Self::generate(DEFAULT_PAIRS, DEFAULT_PATCH_SIZE, DEFAULT_PATTERN_SEED)
            .expect("default pattern parameters are valid")
    }
}

impl SamplingPattern {
    /// Draws `n_pairs` pairs from an isotropic Gaussian with standard deviation
    /// `patch_size / 5`, rounded and clamped to the patch.
    pub fn generate(n_pairs: usize, patch_size: u32, seed: u64) -> Result<Self> {
        if n_pairs == 0 || !n_pairs.is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "number of pairs must be a positive multiple of 8, got {n_pairs}"
            )));
        }
        if patch_size < 3 || patch_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "patch size must be odd and at least 3, got {patch_size}"
            )));
        }
        let half = ((patch_size - 1) / 2) as i32;
        let normal = Normal::new(0.0, patch_size as f64 / 5.0).expect("positive std dev");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || normal.sample(&mut rng).round().clamp(-half as f64, half as f64) as i32;
        let pairs = (0..n_pairs)
            .map(|_| {
                let a = (draw(), draw());
                let b = (draw(), draw());
                [a, b]
            })
            .collect();
        Ok(Self {
            pairs,
            patch_size,
            seed,
        })
    }

    /// Pattern with explicit pairs, used for hand-built tests and custom layouts.
    pub fn from_pairs(pairs: Vec<[(i32, i32); 2]>, patch_size: u32, seed: u64) -> Result<Self> {
        if pairs.is_empty() || !pairs.len().is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "number of pairs must be a positive multiple of 8, got {}",
                pairs.len()
            )));
        }
        let half = ((patch_size.max(1) - 1) / 2) as i32;
        if pairs
            .iter()
            .flatten()
            .any(|&(x, y)| x.abs() > half || y.abs() > half)
        {
            return Err(Error::InvalidArgument(format!(
                "pattern offsets exceed the {patch_size}px patch"
            )));
        }
        Ok(Self {
            pairs,
            patch_size,
            seed,
        })
    }

    pub fn pairs(&self) -> &[[(i32, i32); 2]] {
        &self.pairs
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Descriptor length in bytes.
    pub fn descriptor_bytes(&self) -> usize {
        self.pairs.len() / 8
    }

    /// Minimum distance from the border for a describable keypoint.
    pub fn margin(&self) -> u32 {
        (self.patch_size - 1) / 2 + 1
    }
}

pub(crate) fn describe_with_pairs(
    smoothed: &GrayImage,
    kp: &Keypoint,
    pairs: &[[(i32, i32); 2]],
) -> BinaryDescriptor {
    let stride = smoothed.width() as isize;
    let data = smoothed.data();
    let center = kp.y as isize * stride + kp.x as isize;
    let at = |(dx, dy): (i32, i32)| data[(center + dy as isize * stride + dx as isize) as usize];
    let mut bytes = vec![0u8; pairs.len() / 8];
    for (j, &[a, b]) in pairs.iter().enumerate() {
        bytes[j / 8] |= ((at(a) < at(b)) as u8) << (j % 8);
    }
    BinaryDescriptor { bytes }
}

/// BRIEF descriptor of `kp` on an already smoothed image.
///
/// Bit `j` is set iff the first point of pair `j` is strictly darker than the second.
pub fn brief_describe(
    smoothed: &GrayImage,
    kp: &Keypoint,
    pattern: &SamplingPattern,
) -> Result<BinaryDescriptor> {
    let margin = pattern.margin();
    if !kp.has_margin(smoothed.width(), smoothed.height(), margin) {
        return Err(Error::OutOfBounds {
            x: kp.x as i64,
            y: kp.y as i64,
            margin,
        });
    }
    Ok(describe_with_pairs(smoothed, kp, &pattern.pairs))
}

/// Describes every keypoint that clears the pattern margin; returns the count of dropped points.
pub fn describe_all(
    smoothed: &GrayImage,
    keypoints: &[Keypoint],
    pattern: &SamplingPattern,
) -> (Vec<(Keypoint, BinaryDescriptor)>, usize) {
    let margin = pattern.margin();
    let (w, h) = (smoothed.width(), smoothed.height());
    let described: Vec<_> = keypoints
        .iter()
        .filter(|kp| kp.has_margin(w, h, margin))
        .map(|kp| (*kp, describe_with_pairs(smoothed, kp, &pattern.pairs)))
        .collect();
    let dropped = keypoints.len() - described.len();
    (described, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_patch_gives_zero_bits() {
        let img = GrayImage::filled(40, 40, 90);
        let d = brief_describe(&img, &Keypoint::new(20, 20, 1.0), &SamplingPattern::default())
            .unwrap();
        assert!(d.bytes().iter().all(|&b| b == 0));
    }

    #[test]
    fn default_pattern_yields_32_bytes() {
        let pattern = SamplingPattern::default();
        assert_eq!(pattern.n_pairs(), 256);
        assert_eq!(pattern.descriptor_bytes(), 32);
        let img = GrayImage::from_fn(40, 40, |x, y| (x * 3 + y * 5) as u8);
        let d = brief_describe(&img, &Keypoint::new(20, 20, 1.0), &pattern).unwrap();
        assert_eq!(d.bytes().len(), 32);
        assert_eq!(d.n_bits(), 256);
    }

    #[test]
    fn ramp_bits_follow_x_offset_order() {
        // I(x, y) = 4x, so the test reduces to comparing x offsets.
        let img = GrayImage::from_fn(48, 48, |x, _| (4 * x) as u8);
        let base = [
            [(-3, 0), (2, 1)],
            [(5, -2), (-5, 4)],
            [(1, 7), (1, -7)],
            [(-7, 3), (-6, -3)],
        ];
        let pairs: Vec<_> = base.iter().cycle().take(8).copied().collect();
        let pattern = SamplingPattern::from_pairs(pairs, 31, 0).unwrap();
        let d = brief_describe(&img, &Keypoint::new(24, 24, 0.0), &pattern).unwrap();
        let expected = [true, false, false, true];
        for j in 0..8 {
            assert_eq!(d.bit(j), expected[j % 4], "pair {j}");
        }
    }

    #[test]
    fn keypoint_inside_margin_is_rejected() {
        let img = GrayImage::filled(40, 40, 0);
        let pattern = SamplingPattern::default();
        assert_eq!(pattern.margin(), 16);
        assert!(brief_describe(&img, &Keypoint::new(15, 20, 0.0), &pattern).is_err());
        assert!(brief_describe(&img, &Keypoint::new(16, 16, 0.0), &pattern).is_ok());
        assert!(brief_describe(&img, &Keypoint::new(23, 20, 0.0), &pattern).is_ok());
        assert!(brief_describe(&img, &Keypoint::new(24, 20, 0.0), &pattern).is_err());
    }

    #[test]
    fn describe_all_counts_dropped_points() {
        let img = GrayImage::filled(40, 40, 0);
        let kps = [
            Keypoint::new(3, 3, 1.0),
            Keypoint::new(20, 20, 1.0),
            Keypoint::new(36, 20, 1.0),
        ];
        let (described, dropped) = describe_all(&img, &kps, &SamplingPattern::default());
        assert_eq!(described.len(), 1);
        assert_eq!(dropped, 2);
    }

    #[test]
    fn pattern_is_reproducible_and_bounded() {
        let a = SamplingPattern::generate(256, 31, 42).unwrap();
        let b = SamplingPattern::generate(256, 31, 42).unwrap();
        let c = SamplingPattern::generate(256, 31, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.pairs(), c.pairs());
        assert!(a
            .pairs()
            .iter()
            .flatten()
            .all(|&(x, y)| x.abs() <= 15 && y.abs() <= 15));
        assert_eq!(SamplingPattern::default().seed(), 0x5DEEC6);
    }

    #[test]
    fn invalid_pattern_sizes_are_rejected() {
        assert!(SamplingPattern::generate(100, 31, 0).is_err());
        assert!(SamplingPattern::generate(256, 30, 0).is_err());
        assert!(SamplingPattern::from_pairs(vec![[(16, 0), (0, 0)]; 8], 31, 0).is_err());
    }

    #[test]
    fn hamming_distance_counts_differing_bits() {
        let a = BinaryDescriptor::from_bytes(vec![0b1010, 0xFF]);
        let b = BinaryDescriptor::from_bytes(vec![0b0110, 0x0F]);
        assert_eq!(a.hamming_distance(&b), 6);
    }
}
