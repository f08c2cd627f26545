use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::solvers::SolverRanking;

/// A rate that may be undefined (empty denominator). Serialized as a number
/// or `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(pub Option<f64>);

impl Rate {
    fn ratio(num: usize, den: usize) -> Self {
        Rate((den > 0).then(|| num as f64 / den as f64))
    }

    /// The value, or NaN when undefined.
    pub fn value(self) -> f64 {
        self.0.unwrap_or(f64::NAN)
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: Rate,
    pub tnr: Rate,
    pub f1: Rate,
    pub balanced_accuracy: Rate,
}

/// Confusion counts at `threshold` (a score equal to the threshold counts as
/// positive) and the derived rates.
///
/// Balanced accuracy weights TPR and TNR by the class counts:
/// `(TPR * P + TNR * N) / (P + N)`. A missing class leaves its own rate
/// undefined and contributes nothing to the weighted average.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassificationMetrics, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let (p, n) = (tp + fn_, tn + fp);
    let tpr = Rate::ratio(tp, p);
    let tnr = Rate::ratio(tn, n);
    let balanced = Rate((p + n > 0).then(|| {
        (tpr.0.unwrap_or(0.0) * p as f64 + tnr.0.unwrap_or(0.0) * n as f64) / (p + n) as f64
    }));
    Ok(ClassificationMetrics {
        tp,
        fp,
        tn,
        fn_,
        tpr,
        tnr,
        f1: Rate::ratio(2 * tp, 2 * tp + fp + fn_),
        balanced_accuracy: balanced,
    })
}

/// Balanced accuracy at threshold 0.5; undefined for empty or mismatched
/// input.
pub fn balanced_accuracy(scores: &[f64], labels: &[bool]) -> Rate {
    classification_metrics(scores, labels, 0.5)
        .map(|m| m.balanced_accuracy)
        .unwrap_or(Rate(None))
}

pub const HIT_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub hit_at: BTreeMap<usize, f64>,
    pub n_equations: usize,
}

impl RetrievalMetrics {
    pub fn hit(&self, k: usize) -> f64 {
        self.hit_at.get(&k).copied().unwrap_or(f64::NAN)
    }

    pub fn is_monotone(&self) -> bool {
        let v: Vec<f64> = self.hit_at.values().copied().collect();
        v.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Fraction of equations whose gold word is among the first `k` candidates.
/// Timed-out rankings are misses whatever they contain.
pub fn hit_at_k<S: AsRef<str>>(
    rankings: &[SolverRanking],
    golds: &[S],
    ks: &[usize],
) -> Result<RetrievalMetrics, EvalError> {
    if rankings.len() != golds.len() {
        return Err(EvalError::LengthMismatch(rankings.len(), golds.len()));
    }
    let ranks: Vec<Option<usize>> = rankings
        .iter()
        .zip(golds)
        .map(|(r, g)| if r.timed_out { None } else { r.rank_of(g.as_ref()) })
        .collect();
    let n = rankings.len();
    let hit_at = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    Ok(RetrievalMetrics { hit_at, n_equations: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub word_accuracy: f64,
    pub char_accuracy: f64,
    pub truncation_rate: f64,
    pub n: usize,
}

/// Positional character matches over `max(|pred|, |gold|)`; two empty words
/// match fully.
pub fn char_accuracy(pred: &str, gold: &str) -> f64 {
    let (p, g): (Vec<char>, Vec<char>) = (pred.chars().collect(), gold.chars().collect());
    let den = p.len().max(g.len());
    if den == 0 {
        return 1.0;
    }
    p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / den as f64
}

/// Word and character accuracy of generated words; `truncated` flags (if
/// given) feed the truncation rate.
pub fn generation_metrics<P: AsRef<str>, G: AsRef<str>>(
    predictions: &[P],
    golds: &[G],
    truncated: Option<&[bool]>,
) -> Result<GenerationMetrics, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), golds.len()));
    }
    if let Some(t) = truncated {
        if t.len() != golds.len() {
            return Err(EvalError::LengthMismatch(t.len(), golds.len()));
        }
    }
    let n = golds.len();
    if n == 0 {
        return Ok(GenerationMetrics { word_accuracy: 0.0, char_accuracy: 0.0, truncation_rate: 0.0, n });
    }
    let pairs = predictions.iter().zip(golds).map(|(p, g)| (p.as_ref(), g.as_ref()));
    let words = pairs.clone().filter(|(p, g)| p == g).count();
    let chars: f64 = pairs.map(|(p, g)| char_accuracy(p, g)).sum();
    let trunc = truncated.map_or(0, |t| t.iter().filter(|&&x| x).count());
    Ok(GenerationMetrics {
        word_accuracy: words as f64 / n as f64,
        char_accuracy: chars / n as f64,
        truncation_rate: trunc as f64 / n as f64,
        n,
    })
}
