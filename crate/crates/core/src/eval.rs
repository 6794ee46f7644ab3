//! Dataset manifests, video-grouped splitting and ROC-AUC evaluation.
//!
//! The positive class is always `fake`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffrfd::FeatureRow;
use crate::forest::RandomForestModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(Error::Data(format!(
                "label must be `real` or `fake`, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::Data(format!(
                "split must be train, test or unassigned, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub image_path: PathBuf,
    pub landmarks_path: PathBuf,
    pub label: Label,
    pub video_id: String,
    pub split: Split,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    sample_id: String,
    image_path: String,
    landmarks_path: String,
    label: String,
    video_id: String,
    split: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_HEADER: &str = "sample_id,image_path,landmarks_path,label,video_id,split";

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.sample_id.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate sample_id {:?}",
                    row.sample_id
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses manifest CSV; relative paths are resolved against `base_dir`.
    pub fn from_csv(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != MANIFEST_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("manifest header must be `{MANIFEST_HEADER}`"),
            });
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            match base_dir {
                Some(base) if p.is_relative() => base.join(p),
                _ => p,
            }
        };
        let mut rows = Vec::new();
        for (i, raw) in reader.deserialize::<RawRow>().enumerate() {
            let line = i + 2;
            let raw = raw?;
            let err = |e: Error| Error::Parse {
                line,
                message: e.to_string(),
            };
            rows.push(ManifestRow {
                sample_id: raw.sample_id,
                image_path: resolve(&raw.image_path),
                landmarks_path: resolve(&raw.landmarks_path),
                label: raw.label.parse().map_err(err)?,
                video_id: raw.video_id,
                split: raw.split.parse().map_err(err)?,
            });
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer.serialize(RawRow {
                sample_id: row.sample_id.clone(),
                image_path: row.image_path.to_string_lossy().into_owned(),
                landmarks_path: row.landmarks_path.to_string_lossy().into_owned(),
                label: row.label.to_string(),
                video_id: row.video_id.clone(),
                split: row.split.to_string(),
            })?;
        }
        if self.rows.is_empty() {
            return Ok(format!("{MANIFEST_HEADER}\n"));
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_csv(&text, path.parent())
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_csv()?).map_err(|e| Error::io(path, e))
}

/// Assigns unassigned rows to train/test by shuffling whole videos.
///
/// Videos that already carry a split keep it and their unassigned frames join it.
/// Of the remaining videos, `round(train_fraction * n)` go to train.
pub fn split_manifest(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in [0, 1], got {train_fraction}"
        )));
    }
    let mut assigned: BTreeMap<&str, Split> = BTreeMap::new();
    let mut free: BTreeMap<&str, ()> = BTreeMap::new();
    for row in &manifest.rows {
        if row.video_id.is_empty() {
            return Err(Error::Data(format!(
                "sample {:?} has no video_id",
                row.sample_id
            )));
        }
        if row.split == Split::Unassigned {
            continue;
        }
        match assigned.insert(&row.video_id, row.split) {
            Some(prev) if prev != row.split => {
                return Err(Error::Data(format!(
                    "video {:?} is preassigned to both train and test",
                    row.video_id
                )))
            }
            _ => {}
        }
    }
    for row in &manifest.rows {
        if !assigned.contains_key(row.video_id.as_str()) {
            free.insert(&row.video_id, ());
        }
    }

    let mut videos: Vec<&str> = free.into_keys().collect();
    videos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * videos.len() as f64).round() as usize;
    for (i, v) in videos.into_iter().enumerate() {
        assigned.insert(v, if i < n_train { Split::Train } else { Split::Test });
    }

    let rows = manifest
        .rows
        .iter()
        .map(|row| ManifestRow {
            split: assigned[row.video_id.as_str()],
            ..row.clone()
        })
        .collect();
    Ok(DatasetManifest { rows })
}

fn class_sizes(labels: &[Label]) -> (usize, usize) {
    let n_fake = labels.iter().filter(|l| l.is_fake()).count();
    (labels.len() - n_fake, n_fake)
}

/// Twice the Mann–Whitney U statistic of the fake class, using midranks for ties.
///
/// Doubling keeps the statistic an exact integer.
pub fn mann_whitney_u2(scores: &[f64], labels: &[Label]) -> Result<u64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let (n_real, n_fake) = class_sizes(labels);
    if n_real == 0 || n_fake == 0 {
        return Err(Error::Data(
            "ROC-AUC needs both real and fake samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of doubled midranks of the fake samples. A tie group occupying ranks
    // i+1..=j has doubled midrank i + j + 1.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let fakes = order[i..j].iter().filter(|&&k| labels[k].is_fake()).count() as u64;
        rank_sum2 += fakes * (i + j + 1) as u64;
        i = j;
    }
    let n_fake = n_fake as u64;
    Ok(rank_sum2 - n_fake * (n_fake + 1))
}

/// Area under the ROC curve with `fake` as the positive class.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let u2 = mann_whitney_u2(scores, labels)?;
    let (n_real, n_fake) = class_sizes(labels);
    Ok(ratio_on_grid(u2, 2 * n_real as u64 * n_fake as u64))
}

/// `num / den` rounded half-to-even onto multiples of 2^-53.
///
/// Every grid point in [0, 1] is a double and so is its complement, which makes
/// `ratio_on_grid(den - num, den) == 1.0 - ratio_on_grid(num, den)` exact.
fn ratio_on_grid(num: u64, den: u64) -> f64 {
    const BITS: u32 = 53;
    let scaled = (num as u128) << BITS;
    let (den, mut q) = (den as u128, scaled / den as u128);
    let r = scaled % den;
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    q as f64 / (1u64 << BITS) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub n_real: usize,
    pub n_fake: usize,
    /// Accuracy when scores above 0.5 are called fake.
    pub accuracy: f64,
    pub mean_score_real: f64,
    pub mean_score_fake: f64,
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], labels: &[Label]) -> Result<Self> {
        let auc = roc_auc(scores, labels)?;
        let (n_real, n_fake) = class_sizes(labels);
        let correct = scores
            .iter()
            .zip(labels)
            .filter(|(s, l)| (**s > 0.5) == l.is_fake())
            .count();
        let mean_of = |want: Label| {
            let (sum, n) = scores
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == want)
                .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
            sum / n as f64
        };
        Ok(Self {
            auc,
            n_real,
            n_fake,
            accuracy: correct as f64 / scores.len() as f64,
            mean_score_real: mean_of(Label::Real),
            mean_score_fake: mean_of(Label::Fake),
        })
    }

    /// Flat `key,value` rows.
    pub fn to_csv(&self) -> String {
        format!(
            "key,value\nauc,{}\nn_real,{}\nn_fake,{}\naccuracy,{}\nmean_score_real,{}\nmean_score_fake,{}\npositive_class,fake\n",
            self.auc, self.n_real, self.n_fake, self.accuracy, self.mean_score_real, self.mean_score_fake
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "ROC-AUC {:.4} (positive class: fake)\n{} real / {} fake frames\naccuracy@0.5 {:.4}\nmean score real {:.4}, fake {:.4}",
            self.auc, self.n_real, self.n_fake, self.accuracy, self.mean_score_real, self.mean_score_fake
        )
    }
}

/// Scores every row with the forest and summarizes. Scores are returned in input order.
pub fn evaluate(model: &RandomForestModel, rows: &[FeatureRow]) -> Result<(EvalReport, Vec<f64>)> {
    for row in rows {
        model.check_compatible(&row.features)?;
    }
    let scores = rows
        .par_iter()
        .map(|row| model.predict_proba(&row.features.values))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let report = EvalReport::from_scores(&scores, &labels)?;
    Ok((report, scores))
}
