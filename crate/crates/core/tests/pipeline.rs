use std::fs;

use ffrfd::eval::{evaluate, load_manifest, Label, Split};
use ffrfd::ffrfd::{build_ffr_fd, load_feature_table, region_counts, save_feature_table, Mode};
use ffrfd::forest::{train_on_rows, ForestParams};
use ffrfd::pipeline::{extract_features, DetectorConfig, Extractor};
use ffrfd::regions::RegionId;
use ffrfd::synth::{generate_corpus, write_corpus, SynthConfig};

fn corpus(dir: &std::path::Path, n: usize) -> ffrfd::eval::DatasetManifest {
    let config = SynthConfig {
        n_real: n,
        n_fake: n,
        frames_per_video: 2,
        seed: 3,
        ..Default::default()
    };
    let faces = generate_corpus(&config).unwrap();
    let path = write_corpus(&faces, dir, Some((0.8, 3))).unwrap();
    load_manifest(path).unwrap()
}

#[test]
fn feature_table_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 6);
    let ex = Extractor::new(DetectorConfig::fast_brief(20, 9).unwrap()).unwrap();
    let rows = extract_features(&manifest, &ex, Mode::Ave, 2).unwrap().rows;
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    save_feature_table(&rows, &a).unwrap();
    let loaded = load_feature_table(&a).unwrap();
    assert_eq!(loaded, rows);
    save_feature_table(&loaded, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn ave_and_no_ave_differ_by_region_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 3);
    let ex = Extractor::new(DetectorConfig::orb(20, 300, 9).unwrap()).unwrap();
    for row in &manifest.rows {
        let sample = ex.process_sample(row).unwrap();
        let kps = &sample.extraction.described;
        let ave = build_ffr_fd(kps, &sample.partition, Mode::Ave);
        let no_ave = build_ffr_fd(kps, &sample.partition, Mode::NoAve);
        let counts = region_counts(kps.keypoints(), &sample.partition);
        assert_eq!(counts[RegionId::EntireFace.index()], kps.len());
        for r in RegionId::ALL {
            let n = counts[r.index()] as f64;
            for (a, s) in ave.segment(r).iter().zip(no_ave.segment(r)) {
                if n == 0.0 {
                    assert_eq!((*a, *s), (0.0, 0.0));
                } else {
                    assert_eq!(*a, s / n);
                }
            }
        }
    }
}

#[test]
fn held_out_faces_are_separated() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 40);
    let ex = Extractor::new(DetectorConfig::fast_brief(20, 9).unwrap()).unwrap();
    let rows = extract_features(&manifest, &ex, Mode::NoAve, 4).unwrap().rows;
    let train: Vec<_> = rows.iter().filter(|r| r.split == Split::Train).collect();
    let test: Vec<_> = rows.iter().filter(|r| r.split == Split::Test).cloned().collect();
    assert!(test.iter().any(|r| r.label == Label::Fake) && test.iter().any(|r| r.label == Label::Real));
    let params = ForestParams { n_trees: 50, ..Default::default() };
    let model = train_on_rows(&train, &params, ex.pattern_seed()).unwrap();
    let (report, scores) = evaluate(&model, &test).unwrap();
    assert_eq!(scores.len(), test.len());
    assert!(report.auc >= 0.95, "AUC {}", report.auc);
}

#[test]
fn models_refuse_features_of_another_detector() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 4);
    let fb = Extractor::new(DetectorConfig::fast_brief(20, 9).unwrap()).unwrap();
    let orb = Extractor::new(DetectorConfig::orb(20, 500, 9).unwrap()).unwrap();
    let fb_rows = extract_features(&manifest, &fb, Mode::NoAve, 1).unwrap().rows;
    let orb_rows = extract_features(&manifest, &orb, Mode::NoAve, 1).unwrap().rows;
    let refs: Vec<_> = fb_rows.iter().collect();
    let model = train_on_rows(&refs, &ForestParams { n_trees: 5, ..Default::default() }, Some(9)).unwrap();
    let err = evaluate(&model, &orb_rows).unwrap_err();
    assert!(err.is_compatibility(), "{err}");
    assert!(model.check_pattern_seed(Some(10)).unwrap_err().is_compatibility());
    let ave_rows = extract_features(&manifest, &fb, Mode::Ave, 1).unwrap().rows;
    assert!(evaluate(&model, &ave_rows).unwrap_err().is_compatibility());
}
