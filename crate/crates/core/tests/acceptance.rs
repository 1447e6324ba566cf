//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the console.

mod common;

use common::checks::{attention_invariants, frontend_fidelity};
use common::experiments::{determinism_and_persistence, overfit};
use common::grad::{model_grad_error, op_checks};
use common::{brute_force_qwk, experiment_config, lattice_best_qwk, noisy_scores, rng, synthetic_splits, Check};
use rand::Rng;
use speechgrade::analysis::ablate_white_noise;
use speechgrade::corpus::{Checkpoint, SyntheticSpec};
use speechgrade::metrics::{optimize_thresholds, qwk, round_default, MetricsError, ThresholdSearch};
use speechgrade::model::ModelKind;
use speechgrade::training::{evaluate, train, Evaluation};
use std::time::{Duration, Instant};

const CORPUS_SEED: u64 = 7;

fn gradients() -> Check {
    let started = Instant::now();
    let mut worst = (0.0f64, String::new());
    for (name, check) in op_checks() {
        for seed in 0..20 {
            let err = check(seed);
            if err > worst.0 {
                worst = (err, format!("{name} seed {seed}"));
            }
        }
    }
    for kind in ModelKind::ALL {
        for seed in 0..20 {
            let err = model_grad_error(kind, seed);
            if err > worst.0 {
                worst = (err, format!("{kind} model seed {seed}"));
            }
        }
    }
    let elapsed = started.elapsed();
    println!("    worst relative error {:.2e} ({}), {:.1}s", worst.0, worst.1, elapsed.as_secs_f64());
    if worst.0 >= 1e-4 {
        return Err(format!("relative error {:.2e} at {}", worst.0, worst.1));
    }
    if elapsed >= Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(())
}

fn qwk_oracle() -> Check {
    let mut r = rng(97);
    for case in 0..1000 {
        let n = r.gen_range(2..=5);
        let len = r.gen_range(1..50);
        let human: Vec<usize> = (0..len).map(|_| r.gen_range(0..n)).collect();
        let predicted: Vec<usize> = (0..len).map(|_| r.gen_range(0..n)).collect();
        match (qwk(&human, &predicted, n), brute_force_qwk(&human, &predicted)) {
            (Ok(k), Some(o)) if (k - o).abs() <= 1e-12 => {}
            (Err(MetricsError::UndefinedKappa), None) => {}
            (got, want) => return Err(format!("case {case}: {got:?} vs oracle {want:?}")),
        }
        if let Ok(k) = qwk(&human, &human, n) {
            if k != 1.0 {
                return Err(format!("case {case}: kappa(x, x) = {k}"));
            }
        }
    }
    let worked = qwk(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).map_err(|e| e.to_string())?;
    if worked != 0.5 {
        return Err(format!("worked example gives {worked}"));
    }
    Ok(())
}

struct Experiment {
    runs: Vec<(ModelKind, Checkpoint, Evaluation)>,
    splits: common::SyntheticSplits,
}

fn run_experiment(spec: &SyntheticSpec, kinds: &[ModelKind]) -> Result<Experiment, String> {
    let splits = synthetic_splits(spec);
    let config = experiment_config(spec.seed);
    let mut runs = Vec::new();
    for &kind in kinds {
        let (ck, report) = train(kind, &splits.train, &splits.val, &config).map_err(|e| e.to_string())?;
        let eval = evaluate(&ck, &splits.test, None).map_err(|e| e.to_string())?;
        println!(
            "    {kind}: test QWK {} (selected epoch {} of {})",
            eval.qwk.map_or("undefined".into(), |q| format!("{q:.3}")),
            report.selected_epoch,
            report.epochs.len()
        );
        runs.push((kind, ck, eval));
    }
    Ok(Experiment { runs, splits })
}

fn end_to_end(exp: &Experiment, elapsed: Duration) -> Check {
    let q = |kind| exp.runs.iter().find(|r| r.0 == kind).and_then(|r| r.2.qwk).unwrap_or(f64::NEG_INFINITY);
    let (a, t, m) = (q(ModelKind::Audio), q(ModelKind::Text), q(ModelKind::Fusion));
    println!("    {:.1}s for three models", elapsed.as_secs_f64());
    if m < 0.8 {
        return Err(format!("MMAF QWK {m:.3} below 0.8"));
    }
    if m < a.max(t) {
        return Err(format!("MMAF {m:.3} below max(A {a:.3}, T {t:.3})"));
    }
    if elapsed >= Duration::from_secs(15 * 60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(())
}

fn calibration(exp: &Experiment) -> Check {
    let levels = exp.splits.val.scale.len();
    let mut instances: Vec<(String, Vec<f64>, Vec<usize>)> = Vec::new();
    for (kind, ck, _) in &exp.runs {
        let val = evaluate(ck, &exp.splits.val, None).map_err(|e| e.to_string())?;
        instances.push((format!("{kind} validation"), val.raw_scores(), val.human_grades()));
    }
    for seed in 0..200 {
        let (raw, human) = noisy_scores(seed, 24, levels, 0.8);
        instances.push((format!("random instance {seed}"), raw, human));
    }
    for (name, raw, human) in &instances {
        let rounded: Vec<usize> = raw.iter().map(|&x| round_default(x, levels)).collect();
        let before = match qwk(human, &rounded, levels) {
            Ok(k) => k,
            Err(MetricsError::UndefinedKappa) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let (_, after) = optimize_thresholds(raw, human, levels, ThresholdSearch::default()).map_err(|e| e.to_string())?;
        if after < before {
            return Err(format!("{name}: optimized {after} < rounding {before}"));
        }
    }
    let lattice = ThresholdSearch { step: 0.05, max_sweeps: 20 };
    for seed in 0..20 {
        let (raw, human) = noisy_scores(1000 + seed, 30, 3, 0.7);
        let (_, found) = optimize_thresholds(&raw, &human, 3, lattice).map_err(|e| e.to_string())?;
        let oracle = lattice_best_qwk(&raw, &human, 3, 0.05);
        if (found - oracle).abs() > 1e-12 {
            return Err(format!("lattice seed {seed}: ascent {found} vs exhaustive {oracle}"));
        }
    }
    Ok(())
}

fn white_noise(exp: &Experiment) -> Check {
    let fusion = &exp.runs.iter().find(|r| r.0 == ModelKind::Fusion).ok_or("no MMAF run")?.1;
    let informed = ablate_white_noise(fusion, &exp.splits.test, &exp.splits.val, 99).map_err(|e| e.to_string())?;

    let control_spec = SyntheticSpec {
        seed: CORPUS_SEED,
        audio_informative: false,
        ..SyntheticSpec::default()
    };
    let control = run_experiment(&control_spec, &[ModelKind::Fusion])?;
    let control_ck = &control.runs[0].1;
    let controlled = ablate_white_noise(control_ck, &control.splits.test, &control.splits.val, 99).map_err(|e| e.to_string())?;

    let show = |q: Option<f64>| q.map_or("undefined".to_string(), |v| format!("{v:+.3}"));
    let (d_inf, d_ctl) = (informed.drop(), controlled.drop());
    println!(
        "    audio-informative drop: {} without TO, {} with TO",
        show(d_inf.without_to),
        show(d_inf.with_to)
    );
    println!(
        "    text-only control drop: {} without TO, {} with TO",
        show(d_ctl.without_to),
        show(d_ctl.with_to)
    );
    for (label, drop) in [("without TO", d_inf.without_to), ("with TO", d_inf.with_to)] {
        match drop {
            Some(d) if d > 0.0 => {}
            other => return Err(format!("audio-informative drop {label} is {other:?}")),
        }
    }
    for (label, drop) in [("without TO", d_ctl.without_to), ("with TO", d_ctl.with_to)] {
        match drop {
            Some(d) if d.abs() <= 0.05 => {}
            other => return Err(format!("control drop {label} is {other:?}")),
        }
    }
    Ok(())
}

fn determinism() -> Check {
    for kind in ModelKind::ALL {
        determinism_and_persistence(kind, 31).map_err(|e| format!("{kind}: {e}"))?;
    }
    Ok(())
}

fn overfit_harness() -> Check {
    for kind in ModelKind::ALL {
        let (epoch, q) = overfit(kind, 1)?;
        println!("    {kind}: QWK {q:?} from epoch {epoch}");
        if q != Some(1.0) || epoch > 200 {
            return Err(format!("{kind} reached {q:?} (epoch {epoch})"));
        }
    }
    Ok(())
}

fn main() {
    let mut failures = 0;
    let mut report = |number: usize, name: &str, outcome: Check| {
        match outcome {
            Ok(()) => println!("PASS criterion {number}: {name}"),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {number}: {name}: {why}");
            }
        }
    };
    report(1, "gradient correctness", gradients());
    report(2, "QWK oracle", qwk_oracle());
    report(3, "attention invariants", attention_invariants(1000, 17));
    report(4, "frontend fidelity", frontend_fidelity());

    let spec = SyntheticSpec {
        seed: CORPUS_SEED,
        ..SyntheticSpec::default()
    };
    let started = Instant::now();
    match run_experiment(&spec, &ModelKind::ALL) {
        Ok(exp) => {
            report(5, "end-to-end learning", end_to_end(&exp, started.elapsed()));
            report(6, "threshold calibration", calibration(&exp));
            report(7, "white-noise ablation", white_noise(&exp));
        }
        Err(e) => {
            report(5, "end-to-end learning", Err(e.clone()));
            report(6, "threshold calibration", Err(e.clone()));
            report(7, "white-noise ablation", Err(e));
        }
    }
    report(8, "determinism and persistence", determinism());
    report(9, "overfit harness", overfit_harness());

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
