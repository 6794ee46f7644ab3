//! Synthetic textured faces with 68-point landmarks.
//!
//! Real faces are rendered from a parametric template with per-video identity
//! (pose, scale, skin tone, texture) and per-frame sensor noise. Fakes are real
//! renders whose mouth and eye regions are Gaussian-blurred.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{DatasetManifest, Label, ManifestRow, Split};
use crate::image::{gaussian_blur, save_pgm, GrayImage};
use crate::regions::{save_landmarks, LandmarkSet, RegionId, RegionShape};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthStyle {
    pub size: u32,
    /// Half-width of the uniform per-pixel noise.
    pub noise: f64,
    /// Half-width of the per-video blocky skin texture.
    pub texture: f64,
    pub texture_cell: u32,
}

impl Default for SynthStyle {
    fn default() -> Self {
        Self {
            size: 128,
            noise: 28.0,
            texture: 18.0,
            texture_cell: 4,
        }
    }
}

type P = (f64, f64);

/// Landmarks in template space: face centre at the origin, 128-pixel scale.
fn template() -> Vec<P> {
    let mut pts = Vec::with_capacity(68);
    for i in 0..17 {
        let a = PI * i as f64 / 16.0;
        pts.push((-44.0 * a.cos(), -10.0 + 64.0 * a.sin()));
    }
    for x0 in [-34.0, 10.0] {
        for k in 0..5 {
            pts.push((x0 + 6.0 * k as f64, -26.0 - 4.0 * (PI * k as f64 / 4.0).sin()));
        }
    }
    for y in [-16.0, -10.0, -4.0, 2.0] {
        pts.push((0.0, y));
    }
    for (x, y) in [(-8.0, 8.0), (-4.0, 9.0), (0.0, 10.0), (4.0, 9.0), (8.0, 8.0)] {
        pts.push((x, y));
    }
    for cx in [-22.0, 22.0] {
        for deg in [180.0, 120.0, 60.0, 0.0, -60.0, -120.0] {
            let a = f64::to_radians(deg);
            pts.push((cx + 8.0 * a.cos(), -14.0 - 3.5 * a.sin()));
        }
    }
    for k in 0..12 {
        let a = f64::to_radians(180.0 - 30.0 * k as f64);
        pts.push((17.0 * a.cos(), 28.0 - 8.0 * a.sin()));
    }
    for k in 0..8 {
        let a = f64::to_radians(180.0 - 45.0 * k as f64);
        pts.push((11.0 * a.cos(), 28.0 - 3.0 * a.sin()));
    }
    pts
}

fn in_ellipse((u, v): P, (cx, cy): P, rx: f64, ry: f64) -> bool {
    let (a, b) = ((u - cx) / rx, (v - cy) / ry);
    a * a + b * b <= 1.0
}

fn segment_distance((px, py): P, (ax, ay): P, (bx, by): P) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let t = (((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((px - ax - t * dx).powi(2) + (py - ay - t * dy).powi(2)).sqrt()
}

/// Template-space base intensity before texture and noise.
fn shade(p: P, tone: f64, brows: &[P]) -> f64 {
    if !in_ellipse(p, (0.0, 8.0), 48.0, 60.0) {
        return 55.0;
    }
    for cx in [-22.0, 22.0] {
        if in_ellipse(p, (cx, -14.0), 2.5, 2.5) {
            return 25.0;
        }
        if in_ellipse(p, (cx, -14.0), 8.0, 3.5) {
            return 70.0;
        }
    }
    if in_ellipse(p, (0.0, 28.0), 11.0, 3.0) {
        return 45.0;
    }
    if in_ellipse(p, (0.0, 28.0), 17.0, 8.0) {
        return tone - 50.0;
    }
    if brows
        .chunks(5)
        .any(|b| b.windows(2).any(|w| segment_distance(p, w[0], w[1]) < 2.0))
    {
        return 65.0;
    }
    if in_ellipse(p, (-7.0, 8.0), 2.0, 2.0) || in_ellipse(p, (7.0, 8.0), 2.0, 2.0) {
        return 80.0;
    }
    // soft vertical shading
    tone - 0.25 * p.1
}

/// Renders frame `frame` of the real video identified by `video_seed`.
pub fn synth_face(video_seed: u64, frame: u64, style: &SynthStyle) -> (GrayImage, LandmarkSet) {
    let mut identity = ChaCha8Rng::seed_from_u64(video_seed);
    let scale = identity.random_range(0.92..1.04) * style.size as f64 / 128.0;
    let centre = (
        style.size as f64 / 2.0 + identity.random_range(-4.0..4.0),
        style.size as f64 / 2.0 + identity.random_range(-4.0..4.0),
    );
    let tone = identity.random_range(140.0..175.0);
    let cell = style.texture_cell.max(1) as usize;
    let cells = style.size as usize / cell + 2;
    let texture: Vec<f64> = (0..cells * cells)
        .map(|_| identity.random_range(-style.texture..=style.texture))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(video_seed);
    rng.set_stream(frame + 1);
    let centre = (
        centre.0 + rng.random_range(-1.0..1.0),
        centre.1 + rng.random_range(-1.0..1.0),
    );

    let tpl = template();
    let brows: Vec<P> = tpl[17..27].to_vec();
    let landmarks: Vec<P> = tpl
        .iter()
        .map(|&(u, v)| {
            (
                centre.0 + scale * u + rng.random_range(-0.4..0.4),
                centre.1 + scale * v + rng.random_range(-0.4..0.4),
            )
        })
        .collect();

    let size = style.size;
    let mut data = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let p = ((x as f64 - centre.0) / scale, (y as f64 - centre.1) / scale);
            let t = texture[(y as usize / cell) * cells + x as usize / cell];
            let n = rng.random_range(-style.noise..=style.noise);
            data.push((shade(p, tone, &brows) + t + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    let img = GrayImage::new(size, size, data).expect("dimensions match");
    let lms = LandmarkSet::new(landmarks).expect("68 template points");
    (img, lms)
}

/// Pixels inside the hulls of `regions`, grown by `dilation` pixels (Chebyshev).
pub fn region_mask(width: u32, height: u32, lms: &LandmarkSet, regions: &[RegionId], dilation: u32) -> Vec<bool> {
    let shapes: Vec<RegionShape> = regions
        .iter()
        .filter_map(|r| r.landmark_range())
        .map(|range| RegionShape::hull(&lms.points()[range]))
        .collect();
    let (w, h) = (width as i64, height as i64);
    let inside: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| shapes.iter().any(|s| s.contains((x as f64, y as f64))))
        .collect();
    let r = dilation as i64;
    let mut mask = vec![false; inside.len()];
    for y in 0..h {
        for x in 0..w {
            mask[(y * w + x) as usize] = (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (xx, yy) = (x + dx, y + dy);
                    xx >= 0 && yy >= 0 && xx < w && yy < h && inside[(yy * w + xx) as usize]
                })
            });
        }
    }
    mask
}

pub const FAKE_REGIONS: [RegionId; 3] = [RegionId::Mouth, RegionId::RightEye, RegionId::LeftEye];

/// Replaces the mouth and eye regions of a real face by their blurred version.
pub fn blur_regions(img: &GrayImage, lms: &LandmarkSet, sigma: f64, kernel: usize, dilation: u32) -> Result<GrayImage> {
    let blurred = gaussian_blur(img, sigma, kernel)?;
    let mask = region_mask(img.width(), img.height(), lms, &FAKE_REGIONS, dilation);
    let data = img
        .data()
        .iter()
        .zip(blurred.data())
        .zip(mask)
        .map(|((&o, &b), m)| if m { b } else { o })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_real: usize,
    pub n_fake: usize,
    pub frames_per_video: usize,
    pub seed: u64,
    pub blur_sigma: f64,
    pub blur_kernel: usize,
    pub dilation: u32,
    pub style: SynthStyle,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_real: 200,
            n_fake: 200,
            frames_per_video: 5,
            seed: 42,
            blur_sigma: 2.0,
            blur_kernel: 9,
            dilation: 3,
            style: SynthStyle::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthFace {
    pub sample_id: String,
    pub video_id: String,
    pub label: Label,
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
}

/// Generates `n_real` real and `n_fake` fake faces grouped into videos.
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<SynthFace>> {
    if config.frames_per_video == 0 {
        return Err(Error::InvalidArgument("frames_per_video must be positive".into()));
    }
    if config.style.size < 64 {
        return Err(Error::InvalidArgument(format!(
            "synthetic faces need at least 64 pixels, got {}",
            config.style.size
        )));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let mut faces = Vec::with_capacity(config.n_real + config.n_fake);
    for (label, n, prefix) in [(Label::Real, config.n_real, "real"), (Label::Fake, config.n_fake, "fake")] {
        let n_videos = n.div_ceil(config.frames_per_video);
        for v in 0..n_videos {
            let video_seed: u64 = seeds.random();
            let video_id = format!("{prefix}{v:04}");
            let frames = (n - v * config.frames_per_video).min(config.frames_per_video);
            for f in 0..frames {
                let (img, lms) = synth_face(video_seed, f as u64, &config.style);
                let image = match label {
                    Label::Real => img,
                    Label::Fake => blur_regions(&img, &lms, config.blur_sigma, config.blur_kernel, config.dilation)?,
                };
                faces.push(SynthFace {
                    sample_id: format!("{video_id}_{f:02}"),
                    video_id: video_id.clone(),
                    label,
                    image,
                    landmarks: lms,
                });
            }
        }
    }
    Ok(faces)
}

/// Writes images, landmark files and `manifest.csv` under `dir`; returns the manifest path.
pub fn write_corpus(faces: &[SynthFace], dir: &Path, split: Option<(f64, u64)>) -> Result<PathBuf> {
    let images = dir.join("images");
    let landmarks = dir.join("landmarks");
    for d in [&images, &landmarks] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rows = Vec::with_capacity(faces.len());
    for face in faces {
        let image_rel = PathBuf::from("images").join(format!("{}.pgm", face.sample_id));
        let lm_rel = PathBuf::from("landmarks").join(format!("{}.json", face.sample_id));
        save_pgm(&face.image, dir.join(&image_rel))?;
        save_landmarks(&face.landmarks, dir.join(&lm_rel))?;
        rows.push(ManifestRow {
            sample_id: face.sample_id.clone(),
            image_path: image_rel,
            landmarks_path: lm_rel,
            label: face.label,
            video_id: face.video_id.clone(),
            split: Split::Unassigned,
        });
    }
    let mut manifest = DatasetManifest::new(rows)?;
    if let Some((fraction, seed)) = split {
        manifest = crate::eval::split_manifest(&manifest, fraction, seed)?;
    }
    let path = dir.join("manifest.csv");
    crate::eval::save_manifest(&manifest, &path)?;
    Ok(path)
}
