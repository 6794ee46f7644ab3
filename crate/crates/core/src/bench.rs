//! Wall-clock timing of FFR_FD construction and forest training.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::eval::Label;
use crate::ffrfd::Mode;
use crate::forest::{train_forest, ForestParams};
use crate::image::GrayImage;
use crate::pipeline::Extractor;
use crate::regions::LandmarkSet;

pub const WARMUP_FACES: usize = 5;
pub const MIN_BENCH_FACES: usize = 10;
pub const TIMING_HEADER: &str = "task,n,mean_ms,median_ms,stddev_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub task: String,
    pub n: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub stddev_ms: f64,
}

impl TimingRow {
    /// Population statistics of `samples_ms`.
    pub fn from_samples(task: impl Into<String>, samples_ms: &[f64]) -> Self {
        let n = samples_ms.len();
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, median, stddev) = if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let mean = sorted.iter().sum::<f64>() / n as f64;
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
            };
            let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, median, var.sqrt())
        };
        Self {
            task: task.into(),
            n,
            mean_ms: mean,
            median_ms: median,
            stddev_ms: stddev,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4}",
            self.task, self.n, self.mean_ms, self.median_ms, self.stddev_ms
        )
    }
}

pub fn timings_to_csv(rows: &[TimingRow]) -> String {
    let mut out = format!("{TIMING_HEADER}\n");
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Per-face construction times in milliseconds, after `WARMUP_FACES` untimed faces.
pub fn time_extractor(
    extractor: &Extractor,
    faces: &[(GrayImage, LandmarkSet)],
    mode: Mode,
) -> Result<Vec<f64>> {
    if faces.len() < MIN_BENCH_FACES {
        return Err(Error::Data(format!(
            "benchmark needs at least {MIN_BENCH_FACES} faces, got {}",
            faces.len()
        )));
    }
    for (img, lms) in &faces[..WARMUP_FACES] {
        extractor.ffr_fd(img, lms, mode)?;
    }
    let mut samples = Vec::with_capacity(faces.len() - WARMUP_FACES);
    for (img, lms) in &faces[WARMUP_FACES..] {
        let start = Instant::now();
        let fd = extractor.ffr_fd(img, lms, mode)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(fd);
    }
    Ok(samples)
}

pub fn bench_extractor(
    task: &str,
    extractor: &Extractor,
    faces: &[(GrayImage, LandmarkSet)],
    mode: Mode,
) -> Result<TimingRow> {
    Ok(TimingRow::from_samples(task, &time_extractor(extractor, faces, mode)?))
}

/// Time to train one forest on the given samples; `n` is the number of samples.
pub fn bench_forest(samples: &[&[f64]], labels: &[Label], params: &ForestParams) -> Result<TimingRow> {
    let start = Instant::now();
    let model = train_forest(samples, labels, params)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    std::hint::black_box(model);
    let mut row = TimingRow::from_samples("forest_training", &[ms]);
    row.n = samples.len();
    Ok(row)
}
