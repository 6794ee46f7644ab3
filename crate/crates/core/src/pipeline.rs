//! Per-face extraction and corpus-level passes over a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{DatasetManifest, ManifestRow};
use crate::features::orb::orb_with_steered;
use crate::features::{
    describe_all, fast_detect, ingest_keypoint_file, FastConfig, OrbConfig, SamplingPattern,
    SteeredPattern,
};
use crate::ffrfd::{build_ffr_fd, region_counts, DescribedKeypoints, FeatureRow, Mode, RegionStats,
    RegionStatsAccumulator};
use crate::image::{gaussian_blur, load_image, GrayImage};
use crate::regions::{build_partition, load_landmarks, LandmarkSet, RegionId, RegionPartition};

pub const MIN_IMAGE_SIZE: u32 = 32;
pub const FAST_BRIEF: &str = "fast_brief";
pub const ORB: &str = "orb";
pub const EXTERNAL: &str = "external";

#[derive(Clone, Debug)]
pub enum DetectorConfig {
    FastBrief {
        fast: FastConfig,
        pattern: SamplingPattern,
        blur_sigma: f64,
        blur_kernel: usize,
    },
    Orb {
        orb: OrbConfig,
        pattern: SamplingPattern,
    },
    /// Keypoints and descriptors are read from keypoint files named by the manifest.
    External,
}

impl DetectorConfig {
    pub fn fast_brief(threshold: u8, pattern_seed: u64) -> Result<Self> {
        Ok(DetectorConfig::FastBrief {
            fast: FastConfig::new(threshold, true),
            pattern: SamplingPattern::generate(256, 31, pattern_seed)?,
            blur_sigma: 2.0,
            blur_kernel: 9,
        })
    }

    pub fn orb(threshold: u8, n_top: usize, pattern_seed: u64) -> Result<Self> {
        Ok(DetectorConfig::Orb {
            orb: OrbConfig {
                n_top,
                fast: FastConfig::new(threshold, true),
                ..OrbConfig::default()
            },
            pattern: SamplingPattern::generate(256, 31, pattern_seed)?,
        })
    }
}

/// Validated detector ready to run on many faces.
#[derive(Clone, Debug)]
pub struct Extractor {
    config: DetectorConfig,
    steered: Option<SteeredPattern>,
}

/// Keypoints of one face after detection and description.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub described: DescribedKeypoints,
    /// Detected points dropped for lying within the descriptor margin.
    pub dropped: usize,
}

#[derive(Clone, Debug)]
pub struct SampleFeatures {
    pub extraction: Extraction,
    pub partition: RegionPartition,
    /// Image size, unknown for external keypoint files.
    pub dimensions: Option<(u32, u32)>,
}

impl Extractor {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        let steered = match &config {
            DetectorConfig::FastBrief {
                fast,
                blur_sigma,
                blur_kernel,
                ..
            } => {
                check_threshold(fast.threshold)?;
                crate::image::gaussian_kernel(*blur_sigma, *blur_kernel)?;
                None
            }
            DetectorConfig::Orb { orb, pattern } => {
                check_threshold(orb.fast.threshold)?;
                if orb.n_top == 0 {
                    return Err(Error::InvalidArgument("n_top must be positive".into()));
                }
                crate::image::gaussian_kernel(orb.blur_sigma, orb.blur_kernel)?;
                Some(SteeredPattern::new(pattern))
            }
            DetectorConfig::External => None,
        };
        Ok(Self { config, steered })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Detector label stored in artifacts; `None` for external files, which name themselves.
    pub fn name(&self) -> Option<&'static str> {
        match self.config {
            DetectorConfig::FastBrief { .. } => Some(FAST_BRIEF),
            DetectorConfig::Orb { .. } => Some(ORB),
            DetectorConfig::External => None,
        }
    }

    pub fn threshold(&self) -> Option<u8> {
        match &self.config {
            DetectorConfig::FastBrief { fast, .. } => Some(fast.threshold),
            DetectorConfig::Orb { orb, .. } => Some(orb.fast.threshold),
            DetectorConfig::External => None,
        }
    }

    pub fn pattern_seed(&self) -> Option<u64> {
        match &self.config {
            DetectorConfig::FastBrief { pattern, .. } | DetectorConfig::Orb { pattern, .. } => {
                Some(pattern.seed())
            }
            DetectorConfig::External => None,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self.config, DetectorConfig::External)
    }

    /// Detects and describes keypoints on a face crop.
    pub fn describe_image(&self, img: &GrayImage) -> Result<Extraction> {
        if img.width() < MIN_IMAGE_SIZE || img.height() < MIN_IMAGE_SIZE {
            return Err(Error::ImageTooSmall {
                width: img.width(),
                height: img.height(),
                min: MIN_IMAGE_SIZE,
            });
        }
        match &self.config {
            DetectorConfig::FastBrief {
                fast,
                pattern,
                blur_sigma,
                blur_kernel,
            } => {
                let corners = fast_detect(img, fast)?;
                let smoothed = gaussian_blur(img, *blur_sigma, *blur_kernel)?;
                let (entries, dropped) = describe_all(&smoothed, &corners, pattern);
                let described =
                    DescribedKeypoints::from_binary(FAST_BRIEF, pattern.descriptor_bytes(), entries)?;
                Ok(Extraction { described, dropped })
            }
            DetectorConfig::Orb { orb, pattern } => {
                let steered = self.steered.as_ref().expect("steered pattern");
                let (entries, dropped) = orb_with_steered(img, orb, steered)?;
                let described =
                    DescribedKeypoints::from_binary(ORB, pattern.descriptor_bytes(), entries)?;
                Ok(Extraction { described, dropped })
            }
            DetectorConfig::External => Err(Error::InvalidArgument(
                "external detector reads keypoint files, not images".into(),
            )),
        }
    }

    /// Loads one manifest row and extracts its keypoints and region partition.
    ///
    /// For the external detector the row's image path names a keypoint file.
    pub fn process_sample(&self, row: &ManifestRow) -> Result<SampleFeatures> {
        let landmarks = load_landmarks(&row.landmarks_path)?;
        self.process_loaded(&row.image_path, &landmarks)
    }

    fn process_loaded(&self, input: &Path, landmarks: &LandmarkSet) -> Result<SampleFeatures> {
        let partition = build_partition(landmarks);
        if self.is_external() {
            let file = ingest_keypoint_file(input)?;
            let described = DescribedKeypoints::from_keypoint_file(file)?;
            return Ok(SampleFeatures {
                extraction: Extraction {
                    described,
                    dropped: 0,
                },
                partition,
                dimensions: None,
            });
        }
        let img = load_image(input)?;
        let extraction = self.describe_image(&img)?;
        Ok(SampleFeatures {
            extraction,
            partition,
            dimensions: Some((img.width(), img.height())),
        })
    }

    /// Full in-memory construction of one face's FFR_FD.
    pub fn ffr_fd(&self, img: &GrayImage, landmarks: &LandmarkSet, mode: Mode) -> Result<crate::ffrfd::FfrFd> {
        let extraction = self.describe_image(img)?;
        let partition = build_partition(landmarks);
        Ok(build_ffr_fd(&extraction.described, &partition, mode))
    }
}

fn check_threshold(t: u8) -> Result<()> {
    if t == 0 || t == 255 {
        return Err(Error::InvalidArgument(format!(
            "FAST threshold must be in 1..=254, got {t}"
        )));
    }
    Ok(())
}

/// Runs `f` over every manifest row on a pool of `jobs` workers; results keep manifest order.
pub fn map_manifest<T, F>(manifest: &DatasetManifest, jobs: usize, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&ManifestRow) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| manifest.rows.par_iter().map(&f).collect()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct CorpusStats {
    pub stats: RegionStats,
    pub dropped_keypoints: usize,
    pub skipped: Vec<Skipped>,
    /// Number of faces per image size.
    pub dimensions: BTreeMap<(u32, u32), usize>,
}

impl CorpusStats {
    /// Region table followed by `#`-prefixed run information.
    pub fn to_csv(&self) -> String {
        let mut out = self.stats.to_csv();
        out.push_str(&format!("# detector={}\n", self.stats.detector));
        if let Some(t) = self.stats.threshold {
            out.push_str(&format!("# threshold={t}\n"));
        }
        out.push_str(&format!(
            "# n_real={} n_fake={}\n",
            self.stats.n_real, self.stats.n_fake
        ));
        out.push_str(&format!("# dropped_keypoints={}\n", self.dropped_keypoints));
        out.push_str(&format!("# skipped_files={}\n", self.skipped.len()));
        for ((w, h), n) in &self.dimensions {
            out.push_str(&format!("# dimensions={w}x{h} faces={n}\n"));
        }
        out
    }
}

/// Mean keypoint counts per region and class. Unreadable rows are skipped and reported.
pub fn corpus_stats(manifest: &DatasetManifest, extractor: &Extractor, jobs: usize) -> Result<CorpusStats> {
    if manifest.is_empty() {
        return Err(Error::Data("manifest has no rows".into()));
    }
    let results = map_manifest(manifest, jobs, |row| {
        let sample = extractor.process_sample(row)?;
        let counts = region_counts(sample.extraction.described.keypoints(), &sample.partition);
        Ok((
            counts,
            sample.extraction.dropped,
            sample.dimensions,
            sample.extraction.described.detector().to_string(),
        ))
    })?;

    let mut acc = RegionStatsAccumulator::default();
    let mut dropped = 0;
    let mut skipped = Vec::new();
    let mut dimensions = BTreeMap::new();
    let mut detector: Option<String> = extractor.name().map(str::to_string);
    for (row, result) in manifest.rows.iter().zip(results) {
        match result {
            Ok((counts, d, dims, name)) => {
                match &detector {
                    Some(existing) if *existing != name => {
                        return Err(Error::Incompatible(format!(
                            "sample {} was produced by {name}, expected {existing}",
                            row.sample_id
                        )))
                    }
                    Some(_) => {}
                    None => detector = Some(name),
                }
                acc.add(row.label, &counts);
                dropped += d;
                if let Some(dims) = dims {
                    *dimensions.entry(dims).or_insert(0) += 1;
                }
            }
            Err(e) => skipped.push(Skipped {
                sample_id: row.sample_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if skipped.len() == manifest.len() {
        return Err(Error::Data(format!(
            "no readable samples; first error: {}",
            skipped[0].reason
        )));
    }
    Ok(CorpusStats {
        stats: acc.finish(detector.unwrap_or_else(|| EXTERNAL.into()), extractor.threshold()),
        dropped_keypoints: dropped,
        skipped,
        dimensions,
    })
}

#[derive(Clone, Debug)]
pub struct FeatureExtraction {
    pub rows: Vec<FeatureRow>,
    pub skipped: Vec<Skipped>,
    pub dropped_keypoints: usize,
}

impl FeatureExtraction {
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.rows.len() + self.skipped.len();
        if total == 0 {
            0.0
        } else {
            self.skipped.len() as f64 / total as f64
        }
    }
}

/// Builds one feature-table row per readable manifest row, in manifest order.
pub fn extract_features(
    manifest: &DatasetManifest,
    extractor: &Extractor,
    mode: Mode,
    jobs: usize,
) -> Result<FeatureExtraction> {
    if manifest.is_empty() {
        return Err(Error::Data("manifest has no rows".into()));
    }
    let results = map_manifest(manifest, jobs, |row| {
        let sample = extractor.process_sample(row)?;
        let features = build_ffr_fd(&sample.extraction.described, &sample.partition, mode);
        Ok((features, sample.extraction.dropped))
    })?;

    let mut rows: Vec<FeatureRow> = Vec::new();
    let mut skipped = Vec::new();
    let mut dropped = 0;
    for (row, result) in manifest.rows.iter().zip(results) {
        match result {
            Ok((features, d)) => {
                if let Some(first) = rows.first() {
                    if first.features.detector != features.detector || first.features.d != features.d {
                        return Err(Error::Incompatible(format!(
                            "sample {} has {} descriptors of dimension {}, earlier samples have {} of dimension {}",
                            row.sample_id, features.detector, features.d,
                            first.features.detector, first.features.d
                        )));
                    }
                }
                dropped += d;
                rows.push(FeatureRow {
                    sample_id: row.sample_id.clone(),
                    label: row.label,
                    video_id: row.video_id.clone(),
                    split: row.split,
                    features,
                });
            }
            Err(e) => skipped.push(Skipped {
                sample_id: row.sample_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(FeatureExtraction {
        rows,
        skipped,
        dropped_keypoints: dropped,
    })
}

/// Provenance stored next to a feature table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub detector: String,
    pub mode: Mode,
    pub d: usize,
    pub pattern_seed: Option<u64>,
    pub fast_threshold: Option<u8>,
    pub n_top: Option<usize>,
    pub n_rows: usize,
    pub skipped: usize,
    pub dropped_keypoints: usize,
}

pub fn meta_path(features: &Path) -> PathBuf {
    let mut name = features.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn save_feature_meta(meta: &FeatureMeta, features: &Path) -> Result<()> {
    let path = meta_path(features);
    let text = serde_json::to_string_pretty(meta)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads the sidecar of a feature table if one exists.
pub fn load_feature_meta(features: &Path) -> Result<Option<FeatureMeta>> {
    let path = meta_path(features);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

/// Canonical region names, in FFR_FD segment order.
pub fn region_names() -> [&'static str; RegionId::COUNT] {
    RegionId::ALL.map(RegionId::name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Label, Split};
    use crate::features::{fast_detect, Keypoint, KeypointFile};
    use crate::image::save_pgm;
    use crate::regions::save_landmarks;
    use crate::synth::{synth_face, SynthStyle};

    fn write_face(dir: &Path, id: &str, seed: u64, label: Label) -> ManifestRow {
        let (img, lms) = synth_face(seed, 0, &SynthStyle::default());
        let image_path = dir.join(format!("{id}.pgm"));
        let landmarks_path = dir.join(format!("{id}.json"));
        save_pgm(&img, &image_path).unwrap();
        save_landmarks(&lms, &landmarks_path).unwrap();
        ManifestRow {
            sample_id: id.into(),
            image_path,
            landmarks_path,
            label,
            video_id: format!("v{seed}"),
            split: Split::Unassigned,
        }
    }

    #[test]
    fn small_images_are_rejected() {
        let ex = Extractor::new(DetectorConfig::fast_brief(20, 1).unwrap()).unwrap();
        assert!(matches!(
            ex.describe_image(&GrayImage::filled(31, 64, 0)),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn invalid_detector_settings_fail_early() {
        assert!(Extractor::new(DetectorConfig::fast_brief(0, 1).unwrap()).is_err());
        assert!(Extractor::new(DetectorConfig::orb(20, 0, 1).unwrap()).is_err());
    }

    #[test]
    fn fast_brief_keeps_points_clear_of_the_margin() {
        let ex = Extractor::new(DetectorConfig::fast_brief(20, 1).unwrap()).unwrap();
        let (img, _) = synth_face(3, 0, &SynthStyle::default());
        let ext = ex.describe_image(&img).unwrap();
        let all = fast_detect(&img, &FastConfig::default()).unwrap();
        assert_eq!(ext.described.len() + ext.dropped, all.len());
        assert_eq!(ext.described.d(), 32);
        assert!(ext.described.keypoints().iter().all(|k| k.has_margin(img.width(), img.height(), 16)));
    }

    #[test]
    fn stats_match_a_streaming_mean() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for i in 0..50 {
            let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
            rows.push(write_face(dir.path(), &format!("s{i}"), i, label));
        }
        let manifest = DatasetManifest::new(rows).unwrap();
        let ex = Extractor::new(DetectorConfig::fast_brief(20, 1).unwrap()).unwrap();
        let out = corpus_stats(&manifest, &ex, 3).unwrap();

        let mut mean = [[0.0f64; 8]; 2];
        let mut n = [0usize; 2];
        for row in &manifest.rows {
            let s = ex.process_sample(row).unwrap();
            let c = region_counts(s.extraction.described.keypoints(), &s.partition);
            let k = row.label.is_fake() as usize;
            n[k] += 1;
            for r in 0..8 {
                mean[k][r] += (c[r] as f64 - mean[k][r]) / n[k] as f64;
            }
        }
        for r in 0..8 {
            assert!((out.stats.real_means[r] - mean[0][r]).abs() < 1e-9);
            assert!((out.stats.fake_means[r] - mean[1][r]).abs() < 1e-9);
        }
        assert_eq!((out.stats.n_real, out.stats.n_fake), (25, 25));
        assert_eq!(out.dimensions.get(&(128, 128)), Some(&50));
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn unreadable_rows_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = vec![write_face(dir.path(), "a", 1, Label::Real)];
        let mut missing = write_face(dir.path(), "b", 2, Label::Fake);
        missing.image_path = dir.path().join("nope.pgm");
        rows.push(missing);
        let manifest = DatasetManifest::new(rows).unwrap();
        let ex = Extractor::new(DetectorConfig::fast_brief(20, 1).unwrap()).unwrap();
        let out = corpus_stats(&manifest, &ex, 1).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].sample_id, "b");
        assert_eq!(out.stats.n_real, 1);
        assert!(out.to_csv().contains("# skipped_files=1"));
        assert!(corpus_stats(&DatasetManifest::default(), &ex, 1).is_err());
    }

    #[test]
    fn external_stats_tally_ingested_points() {
        let dir = tempfile::tempdir().unwrap();
        let (_, lms) = synth_face(5, 0, &SynthStyle::default());
        let landmarks_path = dir.path().join("lm.json");
        save_landmarks(&lms, &landmarks_path).unwrap();
        let mouth = lms.points()[62];
        let mut file = KeypointFile::new("sift", 128);
        file.push(Keypoint::new(mouth.0.round() as u32, mouth.1.round() as u32, 1.0), vec![1.0; 128]).unwrap();
        file.push(Keypoint::new(0, 0, 1.0), vec![2.0; 128]).unwrap();
        let kp_path = dir.path().join("kp.txt");
        crate::features::write_keypoint_file(&file, &kp_path).unwrap();
        let manifest = DatasetManifest::new(vec![ManifestRow {
            sample_id: "x".into(),
            image_path: kp_path,
            landmarks_path,
            label: Label::Real,
            video_id: "v".into(),
            split: Split::Unassigned,
        }])
        .unwrap();
        let ex = Extractor::new(DetectorConfig::External).unwrap();
        let out = corpus_stats(&manifest, &ex, 1).unwrap();
        assert_eq!(out.stats.detector, "sift");
        assert_eq!(out.stats.real_means[RegionId::EntireFace.index()], 2.0);
        assert_eq!(out.stats.real_means[RegionId::Mouth.index()], 1.0);
        assert_eq!(out.stats.real_means[RegionId::InnerMouth.index()], 1.0);
        assert_eq!(out.stats.real_means[RegionId::Nose.index()], 0.0);

        let feats = extract_features(&manifest, &ex, Mode::NoAve, 1).unwrap();
        assert_eq!(feats.rows[0].features.len(), 1024);
    }

    #[test]
    fn extraction_order_follows_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<_> = (0..12)
            .map(|i| write_face(dir.path(), &format!("f{i:02}"), i, Label::Real))
            .collect();
        let manifest = DatasetManifest::new(rows).unwrap();
        let ex = Extractor::new(DetectorConfig::orb(20, 500, 1).unwrap()).unwrap();
        let a = extract_features(&manifest, &ex, Mode::NoAve, 4).unwrap();
        let b = extract_features(&manifest, &ex, Mode::NoAve, 1).unwrap();
        let ids: Vec<_> = a.rows.iter().map(|r| r.sample_id.clone()).collect();
        let want: Vec<_> = (0..12).map(|i| format!("f{i:02}")).collect();
        assert_eq!(ids, want);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows[0].features.len(), 256);
    }

    #[test]
    fn meta_sidecar_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let features = dir.path().join("f.csv");
        assert_eq!(load_feature_meta(&features).unwrap(), None);
        let meta = FeatureMeta {
            detector: "orb".into(),
            mode: Mode::Ave,
            d: 32,
            pattern_seed: Some(7),
            fast_threshold: Some(20),
            n_top: Some(500),
            n_rows: 3,
            skipped: 0,
            dropped_keypoints: 11,
        };
        save_feature_meta(&meta, &features).unwrap();
        assert_eq!(meta_path(&features), dir.path().join("f.csv.meta.json"));
        assert_eq!(load_feature_meta(&features).unwrap(), Some(meta));
    }
}
