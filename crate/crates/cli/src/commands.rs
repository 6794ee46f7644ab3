use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ffrfd::bench::{bench_extractor, bench_forest, timings_to_csv};
use ffrfd::eval::{evaluate, load_manifest, Label, Split};
use ffrfd::ffrfd::{dimension_diff, dimension_region, load_feature_table, save_feature_table, FeatureRow};
use ffrfd::forest::{load_model, save_model, train_on_rows};
use ffrfd::image::load_image;
use ffrfd::pipeline::{corpus_stats, extract_features, load_feature_meta, save_feature_meta, FeatureMeta};
use ffrfd::regions::load_landmarks;
use ffrfd::synth::{generate_corpus, write_corpus, SynthConfig, SynthStyle};
use log::{info, warn};

use crate::args::{Command, DetectorKind, SplitFilter};
use crate::config::{required, resolve_forest, resolve_mode, DetectorSettings, FileConfig, DEFAULT_SEED};
use crate::CliError;

pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn select_rows(rows: &[FeatureRow], filter: Option<SplitFilter>, default: Split) -> Result<Vec<&FeatureRow>, CliError> {
    let wanted = match filter {
        Some(SplitFilter::All) => None,
        Some(SplitFilter::Train) => Some(Split::Train),
        Some(SplitFilter::Test) => Some(Split::Test),
        None if rows.iter().all(|r| r.split == Split::Unassigned) => None,
        None => Some(default),
    };
    let selected: Vec<&FeatureRow> = rows
        .iter()
        .filter(|r| wanted.is_none_or(|s| r.split == s))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Data(format!(
            "feature table has no {} rows",
            wanted.map_or("".to_string(), |s| s.to_string())
        )));
    }
    Ok(selected)
}

fn check_meta(meta: &Option<FeatureMeta>, rows: &[FeatureRow]) -> Result<(), CliError> {
    if let (Some(meta), Some(row)) = (meta, rows.first()) {
        let f = &row.features;
        if meta.detector != f.detector || meta.mode != f.mode || meta.d != f.d {
            return Err(CliError::Compat(format!(
                "feature table ({}/{}/d={}) disagrees with its metadata ({}/{}/d={})",
                f.detector, f.mode, f.d, meta.detector, meta.mode, meta.d
            )));
        }
    }
    Ok(())
}

pub fn run(command: Command, file: &FileConfig, jobs: usize) -> Result<(), CliError> {
    match command {
        Command::Stats { manifest, output, detector } => {
            let manifest_path = required(manifest, &file.manifest, "manifest")?;
            let settings = DetectorSettings::resolve(&detector, file)?;
            let extractor = settings.extractor()?;
            let manifest = load_manifest(&manifest_path)?;
            let stats = corpus_stats(&manifest, &extractor, jobs)?;
            for s in &stats.skipped {
                warn!("skipped {}: {}", s.sample_id, s.reason);
            }
            info!(
                "{} faces, {} skipped, {} keypoints dropped at the border",
                stats.stats.n_real + stats.stats.n_fake,
                stats.skipped.len(),
                stats.dropped_keypoints
            );
            write_output(output.or(file.output.clone()).as_deref(), &stats.to_csv())
        }

        Command::Extract { manifest, output, detector, mode } => {
            let manifest_path = required(manifest, &file.manifest, "manifest")?;
            let output = required(output, &file.features, "output")?;
            let settings = DetectorSettings::resolve(&detector, file)?;
            let mode = resolve_mode(mode.as_deref(), file)?;
            let extractor = settings.extractor()?;
            let manifest = load_manifest(&manifest_path)?;
            let result = extract_features(&manifest, &extractor, mode, jobs)?;
            for s in &result.skipped {
                warn!("skipped {}: {}", s.sample_id, s.reason);
            }
            let first = result
                .rows
                .first()
                .ok_or_else(|| CliError::Data("no sample could be processed".into()))?;
            save_feature_table(&result.rows, &output)?;
            let meta = FeatureMeta {
                detector: first.features.detector.clone(),
                mode,
                d: first.features.d,
                pattern_seed: extractor.pattern_seed(),
                fast_threshold: extractor.threshold(),
                n_top: (settings.kind == DetectorKind::Orb).then_some(settings.n_top),
                n_rows: result.rows.len(),
                skipped: result.skipped.len(),
                dropped_keypoints: result.dropped_keypoints,
            };
            save_feature_meta(&meta, &output)?;
            info!("wrote {} rows to {}", result.rows.len(), output.display());
            if result.skipped_fraction() > MAX_SKIPPED_FRACTION {
                return Err(CliError::Data(format!(
                    "{} of {} samples were skipped",
                    result.skipped.len(),
                    manifest.len()
                )));
            }
            Ok(())
        }

        Command::Train { features, model, forest, split } => {
            let features = required(features, &file.features, "features")?;
            let model_path = required(model, &file.model, "model")?;
            let params = resolve_forest(&forest, file)?;
            let rows = load_feature_table(&features)?;
            let meta = load_feature_meta(&features)?;
            check_meta(&meta, &rows)?;
            let selected = select_rows(&rows, split, Split::Train)?;
            info!("training {} trees on {} rows", params.n_trees, selected.len());
            let model = train_on_rows(&selected, &params, meta.and_then(|m| m.pattern_seed))?;
            save_model(&model, &model_path)?;
            Ok(())
        }

        Command::Eval { features, model, output, scores, split } => {
            let features = required(features, &file.features, "features")?;
            let model_path = required(model, &file.model, "model")?;
            let model = load_model(&model_path)?;
            let rows = load_feature_table(&features)?;
            let meta = load_feature_meta(&features)?;
            check_meta(&meta, &rows)?;
            model.check_pattern_seed(meta.and_then(|m| m.pattern_seed))?;
            let selected: Vec<FeatureRow> = select_rows(&rows, split, Split::Test)?.into_iter().cloned().collect();
            let (report, probs) = evaluate(&model, &selected)?;
            eprintln!("{}", report.summary());
            if let Some(path) = scores {
                let mut text = String::from("sample_id,label,video_id,score\n");
                for (row, p) in selected.iter().zip(&probs) {
                    let _ = writeln!(text, "{},{},{},{}", row.sample_id, row.label, row.video_id, p);
                }
                write_output(Some(&path), &text)?;
            }
            write_output(output.or(file.output.clone()).as_deref(), &report.to_csv())
        }

        Command::Importance { model, output } => {
            let model_path = required(model, &file.model, "model")?;
            let model = load_model(&model_path)?;
            let d = model.d.unwrap_or(model.n_features / 8);
            if d == 0 || model.n_features != 8 * d {
                return Err(CliError::Compat(format!(
                    "model has {} features, not 8 regions of d={d}",
                    model.n_features
                )));
            }
            let mut text = String::from("dimension,region,offset,importance\n");
            for (i, v) in model.feature_importances().iter().enumerate() {
                let (region, offset) = dimension_region(i, d);
                let _ = writeln!(text, "{i},{region},{offset},{v}");
            }
            write_output(output.or(file.output.clone()).as_deref(), &text)
        }

        Command::Diff { features, output, split } => {
            let features = required(features, &file.features, "features")?;
            let rows = load_feature_table(&features)?;
            check_meta(&load_feature_meta(&features)?, &rows)?;
            let selected = select_rows(&rows, Some(split), Split::Train)?;
            let real: Vec<_> = selected.iter().filter(|r| r.label == Label::Real).map(|r| &r.features).collect();
            let fake: Vec<_> = selected.iter().filter(|r| r.label == Label::Fake).map(|r| &r.features).collect();
            let diff = dimension_diff(&real, &fake)?;
            write_output(output.or(file.output.clone()).as_deref(), &diff.to_csv())
        }

        Command::Bench { manifest, output, limit, detector, forest } => {
            let manifest_path = required(manifest, &file.manifest, "manifest")?;
            let params = resolve_forest(&forest, file)?;
            let mode = resolve_mode(None, file)?;
            let kinds = match detector.detector {
                None => vec![DetectorKind::FastBrief, DetectorKind::Orb],
                Some(DetectorKind::External) => {
                    return Err(CliError::Usage("bench times image detectors only".into()))
                }
                Some(k) => vec![k],
            };
            let manifest = load_manifest(&manifest_path)?;
            let mut faces = Vec::new();
            let mut labels = Vec::new();
            // spread the sample over the manifest so both classes are present
            let n = manifest.len().min(limit);
            let picked = (0..n).map(|i| &manifest.rows[i * manifest.len() / n]);
            for row in picked {
                faces.push((load_image(&row.image_path)?, load_landmarks(&row.landmarks_path)?));
                labels.push(row.label);
            }
            let mut timings = Vec::new();
            let mut training_set = None;
            for kind in kinds {
                let mut args = detector.clone();
                args.detector = Some(kind);
                if kind != DetectorKind::Orb {
                    args.n_top = None;
                }
                let settings = DetectorSettings::resolve(&args, file)?;
                let extractor = settings.extractor()?;
                let name = extractor.name().expect("image detector");
                timings.push(bench_extractor(name, &extractor, &faces, mode)?);
                if training_set.is_none() {
                    let fds = faces
                        .iter()
                        .map(|(img, lms)| extractor.ffr_fd(img, lms, mode))
                        .collect::<Result<Vec<_>, _>>()?;
                    training_set = Some(fds);
                }
            }
            let fds = training_set.expect("at least one detector");
            let samples: Vec<&[f64]> = fds.iter().map(|f| f.values.as_slice()).collect();
            if labels.iter().any(|l| l.is_fake()) && labels.iter().any(|l| !l.is_fake()) {
                timings.push(bench_forest(&samples, &labels, &params)?);
            } else {
                warn!("corpus has a single class; forest training not timed");
            }
            write_output(output.or(file.output.clone()).as_deref(), &timings_to_csv(&timings))
        }

        Command::Synth { output, n_real, n_fake, frames_per_video, size, seed, train_fraction } => {
            let dir: PathBuf = required(output, &file.output, "output")?;
            if !(0.0..=1.0).contains(&train_fraction) {
                return Err(CliError::Usage("--train-fraction must be in [0, 1]".into()));
            }
            let seed = seed.or(file.seed).unwrap_or(DEFAULT_SEED);
            let config = SynthConfig {
                n_real,
                n_fake,
                frames_per_video,
                seed,
                style: SynthStyle {
                    size,
                    ..SynthStyle::default()
                },
                ..SynthConfig::default()
            };
            let faces = generate_corpus(&config)?;
            let path = write_corpus(&faces, &dir, Some((train_fraction, seed)))?;
            info!("wrote {} faces; manifest {}", faces.len(), path.display());
            Ok(())
        }
    }
}
