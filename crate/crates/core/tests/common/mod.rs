#![allow(dead_code)]

pub mod checks;
pub mod experiments;
pub mod grad;

pub use checks::Check;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use speechgrade::audio::{split_frames, SpectrogramFrames};
use speechgrade::corpus::{generate_synthetic_corpus, load_manifest, stratified_split, SyntheticSpec};
use speechgrade::model::{AcousticEncoderConfig, LexicalEncoderConfig, ModelConfig};
use speechgrade::tensor::{Graph, Tensor, Var};
use speechgrade::text::{encode, TokenSequence, Vocabulary};
use speechgrade::training::{Dataset, TrainConfig};
use tempfile::TempDir;

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Reduces `out` to a scalar through a fixed random projection so every
/// output element contributes a distinct weight to the loss.
pub fn project(g: &mut Graph, out: Var) -> Var {
    let shape = g.value(out).shape().to_vec();
    let mut r = rng(0x5eed ^ shape.iter().fold(7, |h, &d| h * 31 + d as u64));
    let weights = g.constant(random_tensor(&shape, &mut r));
    g.dot(out, weights).expect("projection shape")
}

/// Largest relative error between autodiff and central differences over
/// every element of every input.
pub fn max_grad_error(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss).expect("backward");
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };
    let mut worst = 0.0f64;
    for (which, x) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[which]).expect("input gradient");
        for e in 0..x.numel() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[e], numeric));
        }
    }
    worst
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        acoustic: AcousticEncoderConfig {
            input_channels: 8,
            frame_width: 8,
            conv_sets: 1,
            convs_per_set: 2,
            base_filters: 4,
            kernel_width: 3,
            pool_window: 2,
            lstm_hidden: 3,
        },
        lexical: LexicalEncoderConfig {
            embedding_dim: 5,
            lstm_hidden: 3,
        },
        dropout: 0.3,
    }
}

pub fn tiny_vocab() -> Vocabulary {
    Vocabulary::build(&["alpha beta gamma delta epsilon"]).expect("vocabulary")
}

pub fn random_frames(count: usize, rng: &mut ChaCha8Rng) -> SpectrogramFrames {
    let m = random_tensor(&[8, 8 * count], rng);
    split_frames(&m, 8, 8 * count).expect("frames")
}

pub fn random_tokens(len: usize, max_len: usize, rng: &mut ChaCha8Rng) -> TokenSequence {
    let words = ["alpha", "beta", "gamma", "delta", "epsilon", "unseen"];
    let tokens: Vec<String> = (0..len).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect();
    encode(&tokens, &tiny_vocab(), max_len)
}

/// Independent QWK: with quadratic weights the observed and expected
/// disagreements reduce to mean squared rating differences over matched
/// and over all cross pairs.
pub fn brute_force_qwk(human: &[usize], predicted: &[usize]) -> Option<f64> {
    let m = human.len() as f64;
    let observed: f64 = human.iter().zip(predicted).map(|(&h, &p)| ((h as f64) - (p as f64)).powi(2)).sum::<f64>() / m;
    let mut expected = 0.0;
    for &h in human {
        for &p in predicted {
            expected += ((h as f64) - (p as f64)).powi(2);
        }
    }
    expected /= m * m;
    (expected != 0.0).then(|| 1.0 - observed / expected)
}

/// Best QWK over every strictly increasing cut pair on the lattice
/// `k * step`, `0 < k * step < levels - 1`.
pub fn lattice_best_qwk(raw: &[f64], human: &[usize], levels: usize, step: f64) -> f64 {
    assert_eq!(levels, 3, "the exhaustive oracle covers two cuts");
    let top = ((levels - 1) as f64 / step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for k1 in 1..top {
        for k2 in k1 + 1..top {
            let (c1, c2) = (k1 as f64 * step, k2 as f64 * step);
            let graded: Vec<usize> = raw.iter().map(|&r| usize::from(c1 < r) + usize::from(c2 < r)).collect();
            if let Some(k) = brute_force_qwk(human, &graded) {
                best = best.max(k);
            }
        }
    }
    best
}

/// Raw scores correlated with the human grade, for threshold searches.
pub fn noisy_scores(seed: u64, len: usize, levels: usize, spread: f64) -> (Vec<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let human: Vec<usize> = (0..len).map(|_| r.gen_range(0..levels)).collect();
    let raw = human
        .iter()
        .map(|&h| (h as f64 + noise.sample(&mut r)).clamp(0.0, (levels - 1) as f64))
        .collect();
    (raw, human)
}

pub struct SyntheticSplits {
    pub dir: TempDir,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn synthetic_splits(spec: &SyntheticSpec) -> SyntheticSplits {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = generate_synthetic_corpus(spec, dir.path()).expect("synthetic corpus");
    let manifest = load_manifest(&path).expect("manifest");
    let splits = stratified_split(&manifest.records, spec.seed).expect("split");
    let load = |records| Dataset::load(&manifest, &spec.prompt, records).expect("dataset");
    SyntheticSplits {
        train: load(&splits.train),
        val: load(&splits.val),
        test: load(&splits.test),
        dir,
    }
}

/// Optimizer settings used by the end-to-end experiments.
pub fn experiment_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        split_seed: seed,
        batch_size: 4,
        patience: 8,
        max_epochs: 60,
        dropout: 0.5,
        ..TrainConfig::desk()
    }
}

/// Short clips and a small vocabulary for fast training-loop tests.
pub fn small_spec(seed: u64, per_class: usize) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        per_class,
        min_secs: 1.0,
        max_secs: 2.0,
        ..SyntheticSpec::default()
    }
}
