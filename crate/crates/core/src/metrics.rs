//! Agreement and error metrics, and QWK-maximizing threshold calibration.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0} needs at least one rating")]
    Empty(&'static str),
    #[error("grade {grade} outside 0..{n}")]
    GradeOutOfRange { grade: usize, n: usize },
    #[error("need at least 2 grade levels, got {0}")]
    TooFewLevels(usize),
    #[error("kappa undefined: expected weighted disagreement is zero")]
    UndefinedKappa,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

/// `O[i][j]` counts responses graded `i` by the human and `j` by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_ratings(human: &[usize], predicted: &[usize], n: usize) -> Result<Self, MetricsError> {
        if human.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                left: human.len(),
                right: predicted.len(),
            });
        }
        if human.is_empty() {
            return Err(MetricsError::Empty("qwk"));
        }
        if n < 2 {
            return Err(MetricsError::TooFewLevels(n));
        }
        let mut counts = vec![0; n * n];
        for (&h, &p) in human.iter().zip(predicted) {
            for g in [h, p] {
                if g >= n {
                    return Err(MetricsError::GradeOutOfRange { grade: g, n });
                }
            }
            counts[h * n + p] += 1;
        }
        Ok(Self { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, human: usize, predicted: usize) -> u64 {
        self.counts[human * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `W[i][j] = (i - j)^2 / (N - 1)^2`.
pub fn quadratic_weights(n: usize) -> Vec<Vec<f64>> {
    let denom = ((n - 1) * (n - 1)) as f64;
    (0..n)
        .map(|i| (0..n).map(|j| (i as f64 - j as f64).powi(2) / denom).collect())
        .collect()
}

/// Quadratic weighted kappa between two integer rating vectors on `0..n`.
pub fn qwk(human: &[usize], predicted: &[usize], n: usize) -> Result<f64, MetricsError> {
    let o = ConfusionMatrix::from_ratings(human, predicted, n)?;
    let w = quadratic_weights(n);
    let mut hist_h = vec![0.0; n];
    let mut hist_p = vec![0.0; n];
    for (i, h) in hist_h.iter_mut().enumerate() {
        for (j, p) in hist_p.iter_mut().enumerate() {
            let c = o.get(i, j) as f64;
            *h += c;
            *p += c;
        }
    }
    let total = o.total() as f64;
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            observed += w[i][j] * o.get(i, j) as f64;
            expected += w[i][j] * hist_h[i] * hist_p[j] / total;
        }
    }
    if expected == 0.0 {
        return Err(MetricsError::UndefinedKappa);
    }
    Ok(1.0 - observed / expected)
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty("mse"));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y_true.len() as f64)
}

/// Nearest grade, ties rounding up, clamped to `0..n`.
pub fn round_default(raw: f64, n: usize) -> usize {
    let top = n.saturating_sub(1) as f64;
    (raw + 0.5).floor().clamp(0.0, top) as usize
}

/// `N - 1` strictly increasing cut points inside `(0, N - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    cuts: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(cuts: Vec<f64>) -> Result<Self, MetricsError> {
        if cuts.is_empty() {
            return Err(MetricsError::InvalidThresholds("no cuts".into()));
        }
        let top = cuts.len() as f64;
        if cuts.iter().any(|c| !c.is_finite() || *c <= 0.0 || *c >= top) {
            return Err(MetricsError::InvalidThresholds(format!("cuts {cuts:?} leave (0, {top})")));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidThresholds(format!("cuts {cuts:?} not strictly increasing")));
        }
        Ok(Self { cuts })
    }

    /// Cuts at 0.5, 1.5, ..., N - 1.5.
    pub fn midpoints(n: usize) -> Result<Self, MetricsError> {
        if n < 2 {
            return Err(MetricsError::TooFewLevels(n));
        }
        Self::new((0..n - 1).map(|i| i as f64 + 0.5).collect())
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn levels(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Number of cuts strictly below `raw`.
    pub fn apply(&self, raw: f64) -> usize {
        self.cuts.iter().filter(|&&c| c < raw).count()
    }
}

pub fn apply_thresholds(raw: f64, cuts: &ThresholdSet) -> usize {
    cuts.apply(raw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSearch {
    pub step: f64,
    pub max_sweeps: usize,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_sweeps: 20,
        }
    }
}

fn qwk_at(raw: &[f64], human: &[usize], n: usize, idx: &[usize], step: f64) -> Result<f64, MetricsError> {
    let predicted: Vec<usize> = raw
        .iter()
        .map(|&r| idx.iter().filter(|&&i| (i as f64 * step) < r).count())
        .collect();
    qwk(human, &predicted, n)
}

/// Coordinate ascent over cut points on a fixed grid, starting from the
/// integer midpoints. Each sweep moves one cut at a time to its best grid
/// position between its neighbours; a move is taken only on strict
/// improvement. Returns the cuts and their QWK on the given data.
pub fn optimize_thresholds(
    raw: &[f64],
    human: &[usize],
    n: usize,
    search: ThresholdSearch,
) -> Result<(ThresholdSet, f64), MetricsError> {
    if raw.len() != human.len() {
        return Err(MetricsError::LengthMismatch {
            left: raw.len(),
            right: human.len(),
        });
    }
    if n < 2 {
        return Err(MetricsError::TooFewLevels(n));
    }
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < n {
        log::warn!("threshold search on {} distinct raw scores for {n} grades", distinct.len());
    }
    let step = search.step;
    let slots = ((n - 1) as f64 / step).round() as usize;
    let mut idx: Vec<usize> = (0..n - 1)
        .map(|i| ((i as f64 + 0.5) / step).round() as usize)
        .collect();
    let mut best = qwk_at(raw, human, n, &idx, step)?;
    for _ in 0..search.max_sweeps {
        let mut improved = false;
        for k in 0..idx.len() {
            let lo = if k == 0 { 1 } else { idx[k - 1] + 1 };
            let hi = if k + 1 == idx.len() { slots - 1 } else { idx[k + 1] - 1 };
            let mut trial = idx.clone();
            for cand in lo..=hi {
                trial[k] = cand;
                if let Ok(score) = qwk_at(raw, human, n, &trial, step) {
                    if score > best {
                        best = score;
                        idx[k] = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    let cuts = ThresholdSet::new(idx.iter().map(|&i| i as f64 * step).collect())?;
    Ok((cuts, best))
}
