//! 8-bit grayscale rasters, binary PGM I/O and Gaussian smoothing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} bytes, {width}x{height} needs {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single intensity.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    /// Pixel at signed coordinates, replicating the nearest edge pixel outside the image.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }

    /// Rotates the image by 90 degrees clockwise: pixel `(x, y)` moves to `(h - 1 - y, x)`.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        GrayImage::from_fn(h, w, |nx, ny| self.get(ny, h - 1 - nx))
    }
}

/// Reads a binary (P5) PGM file with maxval 255.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedHeader("missing 'P' magic number".into()));
    }
    match bytes[1] {
        b'5' => {}
        c @ b'1'..=b'7' => {
            return Err(Error::UnsupportedFormat(format!(
                "P{} (only binary P5 graymaps are supported)",
                c as char
            )))
        }
        _ => return Err(Error::MalformedHeader("unknown magic number".into())),
    }

    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            let name = ["width", "height", "maxval"][i];
            return Err(Error::MalformedHeader(format!("missing {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("number out of range: {text}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::MalformedHeader(
                "expected a single whitespace byte after maxval".into(),
            ))
        }
    }

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    let expected = width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| Error::io(path, e))
}

/// Loads an image by extension: `.pgm` always, `.png` when built with the `png` feature.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        #[cfg(feature = "png")]
        Some("png") => {
            if !path.exists() {
                return Err(Error::MissingFile(path.to_path_buf()));
            }
            let img = image::open(path)
                .map_err(|e| Error::UnsupportedFormat(e.to_string()))?
                .to_luma8();
            let (w, h) = img.dimensions();
            GrayImage::new(w, h, img.into_raw())
        }
        _ => load_pgm(path),
    }
}

/// Normalized 1-D Gaussian weights of length `kernel_size`.
pub fn gaussian_kernel(sigma: f64, kernel_size: usize) -> Result<Vec<f64>> {
    if kernel_size == 0 || kernel_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "kernel size must be odd and positive, got {kernel_size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let half = (kernel_size / 2) as i64;
    let mut weights: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// Separable Gaussian blur with edge-clamp borders; results are rounded and clamped to `[0, 255]`.
pub fn gaussian_blur(img: &GrayImage, sigma: f64, kernel_size: usize) -> Result<GrayImage> {
    let kernel = gaussian_kernel(sigma, kernel_size)?;
    let half = (kernel_size / 2) as i64;
    let (w, h) = (img.width as i64, img.height as i64);

    let mut horizontal = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        let row = &img.data[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = (x + k as i64 - half).clamp(0, w - 1);
                acc += weight * row[sx as usize] as f64;
            }
            horizontal[(y * w + x) as usize] = acc;
        }
    }

    let mut data = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = (y + k as i64 - half).clamp(0, h - 1);
                acc += weight * horizontal[(sy * w + x) as usize];
            }
            data[(y * w + x) as usize] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    /// Dense 2-D convolution with the outer-product kernel.
    fn dense_blur(img: &GrayImage, sigma: f64, k: usize) -> GrayImage {
        let kernel = gaussian_kernel(sigma, k).unwrap();
        let half = (k / 2) as i64;
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for (j, wy) in kernel.iter().enumerate() {
                for (i, wx) in kernel.iter().enumerate() {
                    let v = img.get_clamped(x as i64 + i as i64 - half, y as i64 + j as i64 - half);
                    acc += wx * wy * v as f64;
                }
            }
            acc.round().clamp(0.0, 255.0) as u8
        })
    }

    #[test]
    fn decodes_two_by_two_payload() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 7]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0, 128, 255, 7]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n1 # w\n1\n255\n".to_vec();
        bytes.push(42);
        assert_eq!(decode_pgm(&bytes).unwrap().data(), &[42]);
    }

    #[test]
    fn ascii_pgm_is_unsupported() {
        let err = decode_pgm(b"P2\n1 1\n255\n42\n").unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)), "{err}");
        assert!(err.to_string().contains("unsupported format"));
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            decode_pgm(b"P5\n2\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(decode_pgm(b"XX"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x01\x02"),
            Err(Error::TruncatedPayload {
                expected: 4,
                found: 2
            })
        ));
        let missing = load_pgm("/definitely/not/here.pgm").unwrap_err();
        assert!(matches!(missing, Error::MissingFile(_)));
    }

    #[test]
    fn single_pixel_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        let img = GrayImage::new(1, 1, vec![42]).unwrap();
        save_pgm(&img, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 12);
        assert_eq!(load_pgm(&path).unwrap(), img);
    }

    #[test]
    fn save_into_missing_directory_fails() {
        let img = GrayImage::filled(2, 2, 1);
        let err = save_pgm(&img, "/nonexistent-dir/x/y.pgm").unwrap_err();
        assert!(matches!(err, Error::Io { .. } | Error::MissingFile(_)));
    }

    #[test]
    fn random_images_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..100 {
            let (w, h) = if i == 0 {
                (64, 64)
            } else {
                (rng.random_range(1..40), rng.random_range(1..40))
            };
            let img = random_image(&mut rng, w, h);
            let path = dir.path().join(format!("{i}.pgm"));
            save_pgm(&img, &path).unwrap();
            let back = load_pgm(&path).unwrap();
            assert_eq!(back.data(), img.data());
            assert_eq!((back.width(), back.height()), (w, h));
        }
    }

    #[test]
    fn even_kernel_is_rejected() {
        let img = GrayImage::filled(4, 4, 0);
        assert!(gaussian_blur(&img, 2.0, 8).is_err());
        assert!(gaussian_blur(&img, 0.0, 9).is_err());
    }

    #[test]
    fn blur_keeps_constant_image() {
        let img = GrayImage::filled(17, 11, 100);
        assert_eq!(gaussian_blur(&img, 2.0, 9).unwrap(), img);
    }

    #[test]
    fn impulse_response_matches_analytic_kernel() {
        let mut img = GrayImage::filled(9, 9, 0);
        img.set(4, 4, 255);
        let out = gaussian_blur(&img, 2.0, 9).unwrap();
        // Analytic weights, independent of gaussian_kernel.
        let raw: Vec<f64> = (-4i32..=4)
            .map(|i| (-(i * i) as f64 / 8.0).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let center = raw[4] / total;
        for x in 0..9u32 {
            let expected = (255.0 * center * raw[x as usize] / total).round() as u8;
            assert_eq!(out.get(x, 4), expected, "x = {x}");
        }
    }

    #[test]
    fn separable_blur_matches_dense_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let img = random_image(&mut rng, 32, 32);
            assert_eq!(gaussian_blur(&img, 2.0, 9).unwrap(), dense_blur(&img, 2.0, 9));
        }
    }

    #[test]
    fn rotate90_moves_pixels_clockwise() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (2, 3));
        assert_eq!(r.data(), &[4, 1, 5, 2, 6, 3]);
    }

    proptest! {
        #[test]
        fn blur_stays_within_input_range(
            w in 1u32..24,
            h in 1u32..24,
            seed in any::<u64>(),
            sigma in 0.3f64..4.0,
            half in 0usize..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, w, h);
            let out = gaussian_blur(&img, sigma, 2 * half + 1).unwrap();
            let lo = *img.data().iter().min().unwrap() as i32;
            let hi = *img.data().iter().max().unwrap() as i32;
            for &v in out.data() {
                prop_assert!((v as i32) >= lo - 1 && (v as i32) <= hi + 1);
            }
        }
    }
}
