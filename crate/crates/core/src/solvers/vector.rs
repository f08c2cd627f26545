//! Embedding arithmetic: parallelogram rule, cosine retrieval, 3CosAdd and
//! 3CosMul.

use super::{sort_candidates, SolverError};

/// Default `ε` of 3CosMul.
pub const COSMUL_EPSILON: f64 = 0.001;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity; `0` when either vector has zero norm, so that the
/// distance `1 - cos` is that of orthogonal vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let n = norm(u) * norm(v);
    if n == 0.0 {
        0.0
    } else {
        dot(u, v) / n
    }
}

fn check_dims(vs: &[&[f64]]) -> Result<usize, SolverError> {
    let n = vs[0].len();
    match vs.iter().find(|v| v.len() != n) {
        Some(v) => Err(SolverError::DimMismatch(n, v.len())),
        None => Ok(n),
    }
}

/// `e_B - e_A + e_C`. Components where `A` equals `B` or `C` are copied, so
/// the two reflexive identities hold exactly in floating point.
pub fn solve_parallelogram(a: &[f64], b: &[f64], c: &[f64]) -> Result<Vec<f64>, SolverError> {
    check_dims(&[a, b, c])?;
    Ok(a.iter()
        .zip(b)
        .zip(c)
        .map(|((&a, &b), &c)| {
            if a == b {
                c
            } else if a == c {
                b
            } else {
                b - a + c
            }
        })
        .collect())
}

/// Candidate words with their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingIndex {
    pub fn new(words: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, SolverError> {
        if words.is_empty() {
            return Err(SolverError::EmptyCandidates);
        }
        if words.len() != vectors.len() {
            return Err(SolverError::DimMismatch(words.len(), vectors.len()));
        }
        let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
        check_dims(&refs)?;
        Ok(Self { words, vectors })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.words.iter().position(|w| w == word).map(|i| self.vectors[i].as_slice())
    }

    /// Keeps the entries at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, SolverError> {
        Self::new(
            indices.iter().map(|&i| self.words[i].clone()).collect(),
            indices.iter().map(|&i| self.vectors[i].clone()).collect(),
        )
    }

    fn rank_by(&self, dim: usize, f: impl Fn(&[f64]) -> f64) -> Result<Vec<(String, f64)>, SolverError> {
        if dim != self.dim() {
            return Err(SolverError::DimMismatch(dim, self.dim()));
        }
        Ok(sort_candidates(
            self.words.iter().cloned().zip(self.vectors.iter().map(|v| f(v))).collect(),
        ))
    }
}

/// Top `k` candidates by ascending cosine distance to `target`; the score is
/// the cosine similarity.
pub fn retrieve_nearest(
    target: &[f64],
    index: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<(String, f64)>, SolverError> {
    let mut r = index.rank_by(target.len(), |v| cosine(target, v))?;
    r.truncate(k.max(1));
    Ok(r)
}

/// Ranks every candidate by `cos(e_D, e_B - e_A + e_C)`.
pub fn solve_3cosadd(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    index: &EmbeddingIndex,
) -> Result<Vec<(String, f64)>, SolverError> {
    let x = solve_parallelogram(a, b, c)?;
    index.rank_by(x.len(), |d| cosine(d, &x))
}

/// Cosine rescaled to `[0, 1]`, as 3CosMul requires non-negative factors.
fn shifted_cosine(u: &[f64], v: &[f64]) -> f64 {
    (cosine(u, v) + 1.0) / 2.0
}

/// Ranks every candidate by `cos(e_D, e_B) cos(e_D, e_C) / (cos(e_D, e_A) + ε)`
/// with each cosine mapped to `[0, 1]` by `(cos + 1) / 2`. On raw cosines a
/// candidate nearly orthogonal to `e_A` gets an unbounded score whatever
/// its relation to `e_B` and `e_C`.
pub fn solve_3cosmul(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    index: &EmbeddingIndex,
    epsilon: f64,
) -> Result<Vec<(String, f64)>, SolverError> {
    let n = check_dims(&[a, b, c])?;
    index.rank_by(n, |d| shifted_cosine(d, b) * shifted_cosine(d, c) / (shifted_cosine(d, a) + epsilon))
}
