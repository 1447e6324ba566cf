use super::{rng, small_spec, synthetic_splits, Check};
use speechgrade::audio::Frontend;
use speechgrade::corpus::{Checkpoint, SyntheticSpec};
use speechgrade::model::{ModelKind, ScoringModel};
use speechgrade::tensor::{AdamConfig, AdamState};
use speechgrade::text::{EmbeddingTable, Vocabulary};
use speechgrade::training::{batch_gradients, evaluate, train, Features, Featurizer, TrainConfig};

/// Loss on a fixed batch of four synthetic responses before and after 20
/// default Adam steps at full width, dropout off.
pub fn adam_descent(kind: ModelKind, seed: u64) -> (f64, f64) {
    let splits = synthetic_splits(&small_spec(seed, 10));
    let data = &splits.train;
    let mut r = rng(seed);
    let config = TrainConfig::default();
    let transcripts: Vec<&str> = data.responses.iter().map(|x| x.transcript.as_str()).collect();
    let vocab = Vocabulary::build(&transcripts).unwrap();
    let table = kind
        .uses_text()
        .then(|| EmbeddingTable::random(&vocab, config.model.lexical.embedding_dim, &mut r));
    let mut model = ScoringModel::new(kind, config.model, table, &mut r).unwrap();
    let frontend = Frontend::new(config.frontend).unwrap();
    let max_columns = data.responses.iter().map(|x| frontend.column_count(&x.clip)).max().unwrap();
    let featurizer = Featurizer::new(kind, config.frontend, kind.uses_text().then_some(vocab), max_columns, 64).unwrap();
    let picked: Vec<usize> = (0..data.len()).step_by(data.len() / 4).take(4).collect();
    let features: Vec<Features> = picked.iter().map(|&i| featurizer.featurize(&data.responses[i]).unwrap()).collect();
    let targets: Vec<f64> = picked.iter().map(|&i| data.scale.normalize_index(data.responses[i].grade)).collect();
    let batch: Vec<&Features> = features.iter().collect();
    let mut no_dropout = |_: usize| rng(0);
    let mut params = model.parameter_values();
    let mut adam = AdamState::new(AdamConfig::default(), &params);
    let (initial, _) = batch_gradients(&model, &batch, &targets, false, &mut no_dropout).unwrap();
    for _ in 0..20 {
        let (_, grads) = batch_gradients(&model, &batch, &targets, false, &mut no_dropout).unwrap();
        adam.apply(&mut params, &grads).unwrap();
        model.set_parameter_values(params.clone()).unwrap();
    }
    let (last, _) = batch_gradients(&model, &batch, &targets, false, &mut no_dropout).unwrap();
    (initial, last)
}

/// Trains on two responses per grade at two grades and scores the same
/// four responses. Returns the selected epoch and the training-set QWK.
pub fn overfit(kind: ModelKind, seed: u64) -> Result<(usize, Option<f64>), String> {
    let spec = SyntheticSpec {
        classes: 2,
        ..small_spec(seed, 2)
    };
    let splits = synthetic_splits(&spec);
    let mut four = splits.train.clone();
    four.responses.extend(splits.val.responses.iter().cloned());
    four.responses.extend(splits.test.responses.iter().cloned());
    if four.len() != 4 {
        return Err(format!("expected 4 responses, got {}", four.len()));
    }
    let config = TrainConfig {
        seed,
        batch_size: 4,
        max_epochs: 200,
        patience: 200,
        dropout: 0.0,
        ..TrainConfig::desk()
    };
    let (ck, report) = train(kind, &four, &four, &config).map_err(|e| e.to_string())?;
    let eval = evaluate(&ck, &four, None).map_err(|e| e.to_string())?;
    Ok((report.selected_epoch, eval.qwk))
}

/// Identical seeds give identical reports; save, load and save again give
/// identical bytes; evaluation agrees across the round trip.
pub fn determinism_and_persistence(kind: ModelKind, seed: u64) -> Check {
    let splits = synthetic_splits(&small_spec(seed, 6));
    let config = TrainConfig {
        seed,
        max_epochs: 3,
        patience: 3,
        batch_size: 4,
        ..TrainConfig::desk()
    };
    let (ck_a, report_a) = train(kind, &splits.train, &splits.val, &config).map_err(|e| e.to_string())?;
    let (ck_b, report_b) = train(kind, &splits.train, &splits.val, &config).map_err(|e| e.to_string())?;
    if report_a != report_b {
        return Err(format!("reports differ:\n{report_a:?}\n{report_b:?}"));
    }
    let bits = |r: &speechgrade::training::TrainReport| -> Vec<u64> {
        r.epochs.iter().flat_map(|e| [e.train_loss.to_bits(), e.val_loss.to_bits()]).collect()
    };
    if bits(&report_a) != bits(&report_b) {
        return Err("losses differ in their low bits".into());
    }
    if ck_a.to_bytes() != ck_b.to_bytes() {
        return Err("checkpoints from identical runs differ".into());
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second) = (dir.path().join("a.sgc"), dir.path().join("b.sgc"));
    ck_a.save(&first).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&first).map_err(|e| e.to_string())?;
    loaded.save(&second).map_err(|e| e.to_string())?;
    let (bytes_a, bytes_b) = (std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    if bytes_a != bytes_b {
        return Err("save -> load -> save changed the bytes".into());
    }
    let before = evaluate(&ck_a, &splits.test, None).map_err(|e| e.to_string())?;
    let after = evaluate(&loaded, &splits.test, None).map_err(|e| e.to_string())?;
    for (x, y) in before.predictions.iter().zip(&after.predictions) {
        let diff = (x.prediction.normalized - y.prediction.normalized).abs();
        if diff > 1e-6 {
            return Err(format!("{}: score moved by {diff:e} across the round trip", x.id));
        }
    }
    if before.qwk != after.qwk {
        return Err(format!("QWK {:?} vs {:?} after reload", before.qwk, after.qwk));
    }
    Ok(())
}
