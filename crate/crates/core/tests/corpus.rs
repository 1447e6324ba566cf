mod common;

use common::{small_spec, synthetic_splits};
use speechgrade::corpus::{
    load_manifest, plan_synthetic_corpus, stratified_split, Checkpoint, CorpusError, GradeScale, SyntheticSpec,
    CHECKPOINT_MAGIC,
};
use speechgrade::model::ModelKind;
use speechgrade::text::tokenize;
use speechgrade::training::{train, TrainConfig};
use std::collections::HashSet;

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn transcript_length_tracks_grade_at_the_configured_correlation() {
    for seed in 0..5 {
        let spec = SyntheticSpec {
            seed,
            per_class: 100,
            ..SyntheticSpec::default()
        };
        let plan = plan_synthetic_corpus(&spec).unwrap();
        let lengths: Vec<f64> = plan.iter().map(|r| tokenize(&r.transcript).len() as f64).collect();
        let grades: Vec<f64> = plan.iter().map(|r| r.grade as f64).collect();
        let r = pearson(&lengths, &grades);
        assert!((r - spec.length_correlation).abs() <= 0.15, "seed {seed}: correlation {r}");
        let mean_len = |g: usize| {
            let ls: Vec<f64> = plan.iter().filter(|r| r.grade == g).map(|r| tokenize(&r.transcript).len() as f64).collect();
            ls.iter().sum::<f64>() / ls.len() as f64
        };
        assert!(mean_len(0) < mean_len(1) && mean_len(1) < mean_len(2), "seed {seed}");
    }
}

#[test]
fn generated_corpus_is_balanced_and_reproducible() {
    let spec = SyntheticSpec {
        classes: 2,
        per_class: 50,
        min_secs: 0.5,
        max_secs: 1.0,
        ..SyntheticSpec::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let path_a = speechgrade::corpus::generate_synthetic_corpus(&spec, a.path()).unwrap();
    let path_b = speechgrade::corpus::generate_synthetic_corpus(&spec, b.path()).unwrap();
    let manifest = load_manifest(&path_a).unwrap();
    assert_eq!(manifest.records.len(), 100);
    assert_eq!(manifest.records.iter().filter(|r| r.grade == manifest.records[0].grade).count(), 50);
    assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());
    let first = &manifest.records[0];
    let rel = first.audio.strip_prefix(a.path()).unwrap();
    assert_eq!(std::fs::read(&first.audio).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
}

#[test]
fn splits_partition_and_stratify() {
    let spec = small_spec(3, 30);
    let dir = tempfile::tempdir().unwrap();
    let path = speechgrade::corpus::generate_synthetic_corpus(&spec, dir.path()).unwrap();
    let records = load_manifest(&path).unwrap().records;
    let splits = stratified_split(&records, 9).unwrap();
    let ids = |rs: &[speechgrade::corpus::ResponseRecord]| rs.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
    let all: Vec<String> = [ids(&splits.train), ids(&splits.val), ids(&splits.test)].concat();
    assert_eq!(all.len(), records.len());
    assert_eq!(all.iter().collect::<HashSet<_>>().len(), records.len());
    for grade in ["A2", "Low B1", "High B1"] {
        let count = |rs: &[speechgrade::corpus::ResponseRecord]| rs.iter().filter(|r| r.grade == grade).count();
        assert_eq!((count(&splits.train), count(&splits.val), count(&splits.test)), (21, 3, 6));
    }
    assert_eq!(stratified_split(&records, 9).unwrap(), splits);
    let other = stratified_split(&records, 10).unwrap();
    assert_ne!(ids(&other.train), ids(&splits.train));
    assert_eq!(other.train.len(), splits.train.len());
}

#[test]
fn manifest_errors_carry_line_and_label() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.wav"), b"").unwrap();
    let path = dir.path().join("manifest.jsonl");
    let decl = r#"{"prompt":"P","grades":["A2","Low B1","High B1"]}"#;
    let rec = |id: &str, grade: &str, audio: &str| {
        format!(r#"{{"id":"{id}","prompt":"P","audio":"{audio}","transcript":"hello there","grade":"{grade}"}}"#)
    };
    std::fs::write(&path, "").unwrap();
    assert!(load_manifest(&path).unwrap().records.is_empty());

    std::fs::write(&path, format!("{decl}\n{}\n{}\n", rec("r1", "A2", "a.wav"), rec("r2", "C1", "a.wav"))).unwrap();
    match load_manifest(&path).unwrap_err() {
        CorpusError::UnknownGrade { line, label, .. } => assert_eq!((line, label.as_str()), (3, "C1")),
        other => panic!("{other}"),
    }
    std::fs::write(&path, format!("{decl}\n{}\n", rec("r1", "A2", "missing.wav"))).unwrap();
    assert!(matches!(load_manifest(&path).unwrap_err(), CorpusError::MissingAudio { line: 2, .. }));
    std::fs::write(&path, format!("{decl}\n{}\n{}\n", rec("r1", "A2", "a.wav"), rec("r1", "A2", "a.wav"))).unwrap();
    assert!(matches!(load_manifest(&path).unwrap_err(), CorpusError::DuplicateId { line: 3, .. }));
    std::fs::write(&path, format!("{decl}\nnot json\n")).unwrap();
    assert!(matches!(load_manifest(&path).unwrap_err(), CorpusError::Parse { line: 2, .. }));

    let lines: Vec<String> = (0..5).map(|i| rec(&format!("r{i}"), "Low B1", "a.wav")).collect();
    std::fs::write(&path, format!("{decl}\n{}\n", lines.join("\n"))).unwrap();
    let ids: Vec<String> = load_manifest(&path).unwrap().records.into_iter().map(|r| r.id).collect();
    assert_eq!(ids, ["r0", "r1", "r2", "r3", "r4"]);
}

#[test]
fn grade_scale_normalizes_affinely() {
    let scale = GradeScale::synthetic(3).unwrap();
    assert_eq!(scale.labels(), ["A2", "Low B1", "High B1"]);
    assert_eq!(scale.normalize("A2"), Some(0.0));
    assert_eq!(scale.normalize("Low B1"), Some(0.5));
    assert_eq!(scale.normalize("High B1"), Some(1.0));
    assert!(GradeScale::new(vec!["A2".into()]).is_err());
    assert!(GradeScale::new(vec!["A2".into(), "A2".into()]).is_err());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let splits = synthetic_splits(&small_spec(1, 10));
    let config = TrainConfig {
        max_epochs: 1,
        patience: 1,
        ..TrainConfig::desk()
    };
    let (ck, _) = train(ModelKind::Fusion, &splits.train, &splits.val, &config).unwrap();
    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().to_bytes(), bytes);

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad_magic), Err(CorpusError::Format(_))));
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert!(matches!(Checkpoint::from_bytes(&bad_version), Err(CorpusError::Format(_))));
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
}
