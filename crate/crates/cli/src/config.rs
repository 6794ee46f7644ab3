//! Optional TOML settings merged under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use ffrfd::features::{DEFAULT_FAST_THRESHOLD, DEFAULT_PATTERN_SEED};
use ffrfd::ffrfd::Mode;
use ffrfd::forest::ForestParams;
use ffrfd::pipeline::{DetectorConfig, Extractor};
use serde::Deserialize;

use crate::args::{DetectorArgs, DetectorKind, ForestArgs};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_N_TREES: usize = 500;
pub const DEFAULT_N_TOP: usize = 500;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub detector: Option<DetectorKind>,
    pub fast_threshold: Option<u8>,
    pub n_top: Option<usize>,
    pub pattern_seed: Option<u64>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub n_trees: Option<usize>,
    pub max_features: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub max_depth: Option<usize>,
    pub jobs: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Relative paths in the file are taken relative to the file itself.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        for p in [&mut self.manifest, &mut self.features, &mut self.model, &mut self.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }
}

pub fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

/// Detector settings after merging flags, config file and defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSettings {
    pub kind: DetectorKind,
    pub fast_threshold: u8,
    pub n_top: usize,
    pub pattern_seed: u64,
}

impl DetectorSettings {
    pub fn resolve(args: &DetectorArgs, file: &FileConfig) -> Result<Self, CliError> {
        let kind = args.detector.or(file.detector).unwrap_or(DetectorKind::FastBrief);
        let fast_threshold = args
            .fast_threshold
            .or(file.fast_threshold)
            .unwrap_or(DEFAULT_FAST_THRESHOLD);
        let n_top = args.n_top.or(file.n_top).unwrap_or(DEFAULT_N_TOP);
        if kind != DetectorKind::External && !(1..=254).contains(&fast_threshold) {
            return Err(CliError::Usage(format!(
                "--fast-threshold must be in 1..=254, got {fast_threshold}"
            )));
        }
        if kind == DetectorKind::Orb && n_top == 0 {
            return Err(CliError::Usage("--n-top must be positive".into()));
        }
        if kind != DetectorKind::Orb && args.n_top.is_some() {
            return Err(CliError::Usage("--n-top only applies to --detector orb".into()));
        }
        Ok(Self {
            kind,
            fast_threshold,
            n_top,
            pattern_seed: args.pattern_seed.or(file.pattern_seed).unwrap_or(DEFAULT_PATTERN_SEED),
        })
    }

    pub fn extractor(&self) -> Result<Extractor, CliError> {
        let config = match self.kind {
            DetectorKind::FastBrief => DetectorConfig::fast_brief(self.fast_threshold, self.pattern_seed)?,
            DetectorKind::Orb => DetectorConfig::orb(self.fast_threshold, self.n_top, self.pattern_seed)?,
            DetectorKind::External => DetectorConfig::External,
        };
        Ok(Extractor::new(config)?)
    }
}

pub fn resolve_mode(flag: Option<&str>, file: &FileConfig) -> Result<Mode, CliError> {
    match flag.or(file.mode.as_deref()) {
        None => Ok(Mode::default()),
        Some(s) => s
            .parse()
            .map_err(|_| CliError::Usage(format!("--mode must be ave or no_ave, got {s:?}"))),
    }
}

pub fn resolve_forest(args: &ForestArgs, file: &FileConfig) -> Result<ForestParams, CliError> {
    let params = ForestParams {
        n_trees: args.n_trees.or(file.n_trees).unwrap_or(DEFAULT_N_TREES),
        max_features: args.max_features.or(file.max_features),
        min_samples_leaf: args.min_samples_leaf.or(file.min_samples_leaf).unwrap_or(1),
        max_depth: args.max_depth.or(file.max_depth),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
    };
    if params.n_trees == 0 {
        return Err(CliError::Usage("--n-trees must be positive".into()));
    }
    if params.min_samples_leaf == 0 {
        return Err(CliError::Usage("--min-samples-leaf must be positive".into()));
    }
    if params.max_features == Some(0) {
        return Err(CliError::Usage("--max-features must be positive".into()));
    }
    Ok(params)
}
