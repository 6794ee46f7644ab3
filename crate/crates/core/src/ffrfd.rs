//! Per-region descriptor accumulation and the fused facial-region descriptor.
//!
//! For each region `r` the descriptors of all keypoints inside it are summed
//! elementwise into `FD_r`; with [`Mode::Ave`] the sum is divided by the member
//! count. A region without keypoints contributes a zero segment. The eight
//! segments are concatenated in [`RegionId::ALL`] order.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Label, Split};
use crate::features::{BinaryDescriptor, Keypoint, KeypointFile};
use crate::regions::{assign_regions, RegionId, RegionPartition};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ave,
    #[default]
    NoAve,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ave => "ave",
            Mode::NoAve => "no_ave",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ave" => Ok(Mode::Ave),
            "no_ave" => Ok(Mode::NoAve),
            other => Err(Error::InvalidArgument(format!(
                "mode must be `ave` or `no_ave`, got {other:?}"
            ))),
        }
    }
}

/// Row-major descriptor storage; binary descriptors keep their packed byte view.
#[derive(Clone, Debug, PartialEq)]
pub enum DescriptorMatrix {
    Bytes(Vec<u8>),
    Reals(Vec<f64>),
}

/// Keypoints of one face together with their descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct DescribedKeypoints {
    detector: String,
    d: usize,
    keypoints: Vec<Keypoint>,
    descriptors: DescriptorMatrix,
}

impl DescribedKeypoints {
    pub fn from_binary(
        detector: impl Into<String>,
        d: usize,
        entries: Vec<(Keypoint, BinaryDescriptor)>,
    ) -> Result<Self> {
        let mut keypoints = Vec::with_capacity(entries.len());
        let mut bytes = Vec::with_capacity(entries.len() * d);
        for (kp, desc) in entries {
            if desc.bytes().len() != d {
                return Err(Error::Ragged {
                    expected: d,
                    found: desc.bytes().len(),
                });
            }
            keypoints.push(kp);
            bytes.extend_from_slice(desc.bytes());
        }
        Ok(Self {
            detector: detector.into(),
            d,
            keypoints,
            descriptors: DescriptorMatrix::Bytes(bytes),
        })
    }

    pub fn from_reals(
        detector: impl Into<String>,
        d: usize,
        entries: Vec<(Keypoint, Vec<f64>)>,
    ) -> Result<Self> {
        let mut keypoints = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len() * d);
        for (kp, desc) in entries {
            if desc.len() != d {
                return Err(Error::Ragged {
                    expected: d,
                    found: desc.len(),
                });
            }
            keypoints.push(kp);
            values.extend(desc);
        }
        Ok(Self {
            detector: detector.into(),
            d,
            keypoints,
            descriptors: DescriptorMatrix::Reals(values),
        })
    }

    pub fn from_keypoint_file(file: KeypointFile) -> Result<Self> {
        Self::from_reals(file.detector_name, file.d, file.entries)
    }

    pub fn detector(&self) -> &str {
        &self.detector
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn descriptors(&self) -> &DescriptorMatrix {
        &self.descriptors
    }

    /// Subset of the entries, in the given index order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.d;
        let keypoints = indices.iter().map(|&i| self.keypoints[i]).collect();
        let descriptors = match &self.descriptors {
            DescriptorMatrix::Bytes(b) => DescriptorMatrix::Bytes(
                indices.iter().flat_map(|&i| &b[i * d..(i + 1) * d]).copied().collect(),
            ),
            DescriptorMatrix::Reals(v) => DescriptorMatrix::Reals(
                indices.iter().flat_map(|&i| &v[i * d..(i + 1) * d]).copied().collect(),
            ),
        };
        Self {
            detector: self.detector.clone(),
            d,
            keypoints,
            descriptors,
        }
    }
}

/// Fused facial-region descriptor of length `8 * d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FfrFd {
    pub values: Vec<f64>,
    pub mode: Mode,
    pub detector: String,
    pub d: usize,
}

impl FfrFd {
    pub fn new(values: Vec<f64>, mode: Mode, detector: impl Into<String>, d: usize) -> Result<Self> {
        if values.len() != RegionId::COUNT * d {
            return Err(Error::Data(format!(
                "descriptor vector has {} values, expected 8 x {d}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            mode,
            detector: detector.into(),
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, region: RegionId) -> &[f64] {
        let start = region.index() * self.d;
        &self.values[start..start + self.d]
    }
}

/// Region and within-region offset of a fused dimension.
pub fn dimension_region(dim: usize, d: usize) -> (RegionId, usize) {
    (RegionId::ALL[dim / d], dim % d)
}

/// Elementwise sum of real descriptors; an empty region yields zeros.
///
/// Inputs are summed in a canonical order so the result does not depend on the
/// order they are given in.
pub fn accumulate_fd_r(descriptors: &[&[f64]], d: usize) -> Result<Vec<f64>> {
    if let Some(bad) = descriptors.iter().find(|v| v.len() != d) {
        return Err(Error::Ragged {
            expected: d,
            found: bad.len(),
        });
    }
    let mut sorted: Vec<&[f64]> = descriptors.to_vec();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut sum = vec![0.0; d];
    for desc in sorted {
        for (s, v) in sum.iter_mut().zip(desc) {
            *s += v;
        }
    }
    Ok(sum)
}

/// Exact elementwise sum of byte descriptors.
pub fn accumulate_fd_r_bytes(descriptors: &[&[u8]], d: usize) -> Result<Vec<u64>> {
    let mut sum = vec![0u64; d];
    for desc in descriptors {
        if desc.len() != d {
            return Err(Error::Ragged {
                expected: d,
                found: desc.len(),
            });
        }
        for (s, &v) in sum.iter_mut().zip(desc.iter()) {
            *s += v as u64;
        }
    }
    Ok(sum)
}

/// Builds the fused descriptor of one face.
pub fn build_ffr_fd(kps: &DescribedKeypoints, part: &RegionPartition, mode: Mode) -> FfrFd {
    let d = kps.d;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); RegionId::COUNT];
    for (i, kp) in kps.keypoints.iter().enumerate() {
        for r in assign_regions(kp, part).iter() {
            members[r.index()].push(i);
        }
    }

    let mut values = Vec::with_capacity(RegionId::COUNT * d);
    for idx in &members {
        let n = idx.len();
        let segment: Vec<f64> = match &kps.descriptors {
            DescriptorMatrix::Bytes(b) => {
                let rows: Vec<&[u8]> = idx.iter().map(|&i| &b[i * d..(i + 1) * d]).collect();
                accumulate_fd_r_bytes(&rows, d)
                    .expect("rows have length d")
                    .into_iter()
                    .map(|s| s as f64)
                    .collect()
            }
            DescriptorMatrix::Reals(v) => {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| &v[i * d..(i + 1) * d]).collect();
                accumulate_fd_r(&rows, d).expect("rows have length d")
            }
        };
        match mode {
            Mode::Ave if n > 0 => values.extend(segment.into_iter().map(|s| s / n as f64)),
            _ => values.extend(segment),
        }
    }
    FfrFd {
        values,
        mode,
        detector: kps.detector.clone(),
        d,
    }
}

/// Number of keypoints in each region, indexed by [`RegionId::index`].
pub fn region_counts(kps: &[Keypoint], part: &RegionPartition) -> [usize; RegionId::COUNT] {
    let mut counts = [0usize; RegionId::COUNT];
    for kp in kps {
        for r in assign_regions(kp, part).iter() {
            counts[r.index()] += 1;
        }
    }
    counts
}

/// Mean keypoint count per region and class over a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionStats {
    pub real_means: [f64; RegionId::COUNT],
    pub fake_means: [f64; RegionId::COUNT],
    pub n_real: usize,
    pub n_fake: usize,
    pub detector: String,
    pub threshold: Option<u8>,
}

/// Running per-class count totals; reduce in a fixed order for reproducible means.
#[derive(Clone, Debug, Default)]
pub struct RegionStatsAccumulator {
    real: [u64; RegionId::COUNT],
    fake: [u64; RegionId::COUNT],
    n_real: usize,
    n_fake: usize,
}

impl RegionStatsAccumulator {
    pub fn add(&mut self, label: Label, counts: &[usize; RegionId::COUNT]) {
        let (totals, n) = match label {
            Label::Real => (&mut self.real, &mut self.n_real),
            Label::Fake => (&mut self.fake, &mut self.n_fake),
        };
        for (t, &c) in totals.iter_mut().zip(counts) {
            *t += c as u64;
        }
        *n += 1;
    }

    pub fn finish(self, detector: impl Into<String>, threshold: Option<u8>) -> RegionStats {
        let mean = |totals: [u64; RegionId::COUNT], n: usize| {
            totals.map(|t| if n == 0 { 0.0 } else { t as f64 / n as f64 })
        };
        RegionStats {
            real_means: mean(self.real, self.n_real),
            fake_means: mean(self.fake, self.n_fake),
            n_real: self.n_real,
            n_fake: self.n_fake,
            detector: detector.into(),
            threshold,
        }
    }
}

impl RegionStats {
    /// Table layout: one row per region, one column per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,real,fake\n");
        for r in RegionId::ALL {
            out.push_str(&format!(
                "{},{},{}\n",
                r.name(),
                self.real_means[r.index()],
                self.fake_means[r.index()]
            ));
        }
        out
    }
}

/// Per-dimension differences of class statistics, real minus fake.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionDiff {
    pub mean_diff: Vec<f64>,
    pub var_diff: Vec<f64>,
    pub d: usize,
}

impl DimensionDiff {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,region,offset,mean_diff,var_diff\n");
        for (i, (m, v)) in self.mean_diff.iter().zip(&self.var_diff).enumerate() {
            let (region, offset) = dimension_region(i, self.d);
            out.push_str(&format!("{i},{},{offset},{m},{v}\n", region.name()));
        }
        out
    }
}

/// Mean and population variance per dimension (Welford).
fn moments(features: &[&FfrFd]) -> (Vec<f64>, Vec<f64>) {
    let dim = features[0].values.len();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for (k, f) in features.iter().enumerate() {
        let n = (k + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(&f.values) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }
    let n = features.len() as f64;
    (mean, m2.into_iter().map(|s| s / n).collect())
}

fn check_compatible(a: &FfrFd, b: &FfrFd) -> Result<()> {
    if a.mode != b.mode {
        return Err(Error::Incompatible(format!(
            "mode mismatch: {} vs {}",
            a.mode, b.mode
        )));
    }
    if a.d != b.d || a.values.len() != b.values.len() {
        return Err(Error::Incompatible(format!(
            "descriptor dimension mismatch: {} vs {}",
            a.d, b.d
        )));
    }
    if a.detector != b.detector {
        return Err(Error::Incompatible(format!(
            "detector mismatch: {} vs {}",
            a.detector, b.detector
        )));
    }
    Ok(())
}

pub fn dimension_diff(real: &[&FfrFd], fake: &[&FfrFd]) -> Result<DimensionDiff> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Data(
            "both classes need at least one feature vector".into(),
        ));
    }
    let first = real[0];
    for f in real.iter().chain(fake) {
        check_compatible(first, f)?;
    }
    let (mean_r, var_r) = moments(real);
    let (mean_f, var_f) = moments(fake);
    Ok(DimensionDiff {
        mean_diff: mean_r.iter().zip(&mean_f).map(|(a, b)| a - b).collect(),
        var_diff: var_r.iter().zip(&var_f).map(|(a, b)| a - b).collect(),
        d: first.d,
    })
}

/// One row of the feature table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub sample_id: String,
    pub label: Label,
    pub video_id: String,
    pub split: Split,
    pub features: FfrFd,
}

pub const FEATURE_META_COLUMNS: [&str; 7] =
    ["sample_id", "label", "video_id", "split", "detector", "mode", "d"];

pub fn write_feature_table(rows: &[FeatureRow], out: impl Write) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_writer(out);
    let dim = rows.first().map_or(0, |r| r.features.values.len());
    let mut header: Vec<String> = FEATURE_META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|i| format!("f{i}")));
    writer.write_record(&header)?;
    for row in rows {
        if row.features.values.len() != dim {
            return Err(Error::Ragged {
                expected: dim,
                found: row.features.values.len(),
            });
        }
        let mut record = vec![
            row.sample_id.clone(),
            row.label.to_string(),
            row.video_id.clone(),
            row.split.to_string(),
            row.features.detector.clone(),
            row.features.mode.to_string(),
            row.features.d.to_string(),
        ];
        record.extend(row.features.values.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io("<feature table>", e))?;
    Ok(())
}

pub fn save_feature_table(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_feature_table(rows, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(text: &str) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < FEATURE_META_COLUMNS.len()
        || header.iter().take(7).ne(FEATURE_META_COLUMNS.iter().copied())
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("feature table header must start with {}", FEATURE_META_COLUMNS.join(",")),
        });
    }
    let dim = header.len() - FEATURE_META_COLUMNS.len();
    for (i, name) in header.iter().skip(7).enumerate() {
        if name != format!("f{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column f{i}, found {name:?}"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let err = |message: String| Error::Parse { line, message };
        let d: usize = record[6]
            .parse()
            .map_err(|_| err(format!("invalid d {:?}", &record[6])))?;
        if d * RegionId::COUNT != dim {
            return Err(err(format!("d = {d} does not match {dim} feature columns")));
        }
        let values = record
            .iter()
            .skip(7)
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("invalid value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            sample_id: record[0].to_string(),
            label: record[1].parse().map_err(|e: Error| err(e.to_string()))?,
            video_id: record[2].to_string(),
            split: record[3].parse().map_err(|e: Error| err(e.to_string()))?,
            features: FfrFd {
                values,
                mode: record[5].parse().map_err(|e: Error| err(e.to_string()))?,
                detector: record[4].to_string(),
                d,
            },
        });
    }
    Ok(rows)
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(&text)
}
