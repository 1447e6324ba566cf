use super::{random_tensor, rng};
use rand::Rng;
use speechgrade::audio::{hz_to_mel, mel_to_hz, split_frames, stft, AudioClip, Frontend, FrontendConfig};
use speechgrade::model::{attention_pool, fuse_and_score, modality_split, HeadVars, Modality};
use speechgrade::tensor::{Graph, Tensor};
use std::f64::consts::PI;

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Fusion attention over random `(T_a, T_t)` shapes: probability weights,
/// correct tagging, percentages summing to 100 and a context vector inside
/// the coordinate-wise range of the states.
pub fn attention_invariants(shapes: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..shapes {
        let (t_a, t_t, width) = (r.gen_range(1..=30), r.gen_range(1..=30), r.gen_range(1..=8));
        let spread = r.gen_range(0.1..20.0);
        let audio = Tensor::from_fn(&[t_a, width], |_| r.gen_range(-spread..spread));
        let text = Tensor::from_fn(&[t_t, width], |_| r.gen_range(-spread..spread));
        let mut g = Graph::new();
        let (a, t) = (g.constant(audio), g.constant(text));
        let head = HeadVars {
            attention: g.constant(random_tensor(&[width], &mut r)),
            dense_w: g.constant(random_tensor(&[width], &mut r)),
            dense_b: g.constant(random_tensor(&[1], &mut r)),
        };
        let mut no_rng = rng(0);
        let (score, trace) = fuse_and_score(&mut g, a, t, &head, 0.0, false, &mut no_rng).map_err(|e| e.to_string())?;
        let s = g.value(score).item();
        ensure((0.0..=1.0).contains(&s), || format!("case {case}: score {s}"))?;
        ensure(trace.len() == t_a + t_t, || format!("case {case}: trace length {}", trace.len()))?;
        ensure(
            trace.count(Modality::Audio) == t_a && trace.count(Modality::Text) == t_t,
            || format!("case {case}: tag counts"),
        )?;
        ensure(trace.weights.iter().all(|&w| w >= 0.0), || format!("case {case}: negative weight"))?;
        let total: f64 = trace.weights.iter().sum();
        ensure((total - 1.0).abs() <= 1e-9, || format!("case {case}: weights sum to {total}"))?;
        let (text_pct, audio_pct) = modality_split(&trace);
        ensure((text_pct + audio_pct - 100.0).abs() <= 1e-6, || {
            format!("case {case}: split {text_pct} + {audio_pct}")
        })?;

        let joint = g.concat(&[a, t]).map_err(|e| e.to_string())?;
        let (context, weights) = attention_pool(&mut g, joint, head.attention).map_err(|e| e.to_string())?;
        ensure(g.value(weights).data() == trace.weights.as_slice(), || {
            format!("case {case}: trace differs from pooled weights")
        })?;
        let states = g.value(joint);
        for (j, &c) in g.value(context).data().iter().enumerate() {
            let column = (0..t_a + t_t).map(|i| states.get(&[i, j]));
            let lo = column.clone().fold(f64::INFINITY, f64::min);
            let hi = column.fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
            ensure(c >= lo - slack && c <= hi + slack, || {
                format!("case {case}: context[{j}] = {c} outside [{lo}, {hi}]")
            })?;
        }
    }
    Ok(())
}

fn sine(freq: f64, secs: f64, rate: u32) -> AudioClip {
    let n = (secs * f64::from(rate)) as usize;
    let samples = (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()).collect();
    AudioClip::new(samples, rate).expect("finite samples")
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Pure sines at bin-centre frequencies peak at their bin in every
/// interior STFT column.
pub fn stft_bin_peaks() -> Check {
    for k in [5usize, 28, 64, 200, 511, 900] {
        let clip = sine(k as f64 * 16_000.0 / 2048.0, 1.0, 16_000);
        let mag = stft(&clip, 2048, 512).map_err(|e| e.to_string())?;
        let cols = mag.shape()[1];
        for t in 4..cols - 4 {
            let peak = argmax((0..mag.shape()[0]).map(|b| mag.get(&[b, t])));
            ensure(peak == k, || format!("bin {k}: column {t} peaks at {peak}"))?;
        }
    }
    Ok(())
}

/// Spectral energy of each column against the energy of the same
/// windowed, zero-padded segment computed in the time domain.
pub fn stft_parseval() -> Check {
    let mut r = rng(44);
    let samples: Vec<f64> = (0..9000).map(|_| r.gen_range(-1.0..1.0)).collect();
    let clip = AudioClip::new(samples.clone(), 16_000).expect("finite samples");
    let (n, hop) = (2048usize, 512usize);
    let mag = stft(&clip, n, hop).map_err(|e| e.to_string())?;
    let cols = mag.shape()[1];
    ensure(cols == 1 + samples.len() / hop, || format!("{cols} columns"))?;
    let (mut spectral, mut temporal) = (0.0, 0.0);
    for t in 0..cols {
        let start = (t * hop) as isize - (n / 2) as isize;
        for i in 0..n {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < samples.len() {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                temporal += (samples[idx as usize] * w).powi(2);
            }
        }
        for k in 0..=n / 2 {
            let weight = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            spectral += weight * mag.get(&[k, t]).powi(2);
        }
    }
    spectral /= n as f64;
    let rel = (spectral - temporal).abs() / temporal;
    ensure(rel < 1e-6, || format!("spectral {spectral} vs time-domain {temporal}: rel {rel:e}"))
}

/// A 440 Hz tone lands in the mel band whose triangle, computed here from
/// the HTK mel formula, responds most strongly to 440 Hz; that band is
/// one of the two whose centres bracket 440 Hz.
pub fn mel_band_for_440() -> Check {
    let config = FrontendConfig::default();
    let frontend = Frontend::new(config).map_err(|e| e.to_string())?;
    let logmel = frontend.log_mel(&sine(440.0, 1.0, 16_000)).map_err(|e| e.to_string())?;
    let (lo, hi) = (hz_to_mel(config.f_min), hz_to_mel(config.f_max));
    let m = config.n_mels;
    let edges: Vec<f64> = (0..m + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (m + 1) as f64)).collect();
    let below = (0..m).rev().find(|&b| edges[b + 1] <= 440.0).ok_or("no band below 440 Hz")?;
    let response = |b: usize| {
        let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
        ((440.0 - l) / (c - l)).min((r - 440.0) / (r - c)).max(0.0) * 2.0 / (r - l)
    };
    let predicted = if response(below) >= response(below + 1) { below } else { below + 1 };
    let cols = logmel.shape()[1];
    for t in 4..cols - 4 {
        let band = argmax((0..m).map(|b| logmel.get(&[b, t])));
        ensure(band == predicted, || {
            format!("column {t}: band {band}, predicted {predicted} (centres {:.1} and {:.1} Hz)", edges[below + 1], edges[below + 2])
        })?;
    }
    Ok(())
}

/// Frames concatenated along time reproduce the padded matrix exactly.
pub fn frame_reassembly() -> Check {
    let mut r = rng(12);
    for frames in 1..=4 {
        let padded = random_tensor(&[128, 128 * frames], &mut r);
        let split = split_frames(&padded, 128, 128 * frames - 5).map_err(|e| e.to_string())?;
        ensure(split.frames.len() == frames, || format!("{} frames", split.frames.len()))?;
        for b in 0..128 {
            let joined: Vec<f64> = split.frames.iter().flat_map(|f| f.row(b).iter().copied()).collect();
            ensure(joined.iter().zip(padded.row(b)).all(|(x, y)| x.to_bits() == y.to_bits()), || {
                format!("row {b} of {frames} frames differs")
            })?;
        }
    }
    Ok(())
}

pub fn frontend_fidelity() -> Check {
    stft_bin_peaks()?;
    stft_parseval()?;
    mel_band_for_440()?;
    frame_reassembly()
}
