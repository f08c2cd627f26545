//! Solvers built on trained models: retrieval over CNN embeddings and
//! generation through the autoencoder's decoder.

use super::vector::{retrieve_nearest, solve_3cosadd, solve_3cosmul, solve_parallelogram, COSMUL_EPSILON};
use super::{Deadline, EmbeddingIndex, Solver, SolverError, SolverOutput, TOP_K};
use crate::models::{Annc, Annr, AutoEncoder, CnnEmbedder};
use crate::nn::Scalar;

/// Candidates scored per ANNc batch; the deadline is polled between batches.
const ANNC_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnnMethod {
    /// ANNr prediction, then nearest candidate by cosine.
    Annr,
    ThreeCosMul,
    ThreeCosAdd,
    /// Candidates ranked by ANNc score, optionally after keeping the best
    /// `prefilter` candidates by 3CosMul.
    Annc { prefilter: Option<usize> },
}

impl CnnMethod {
    pub fn id(&self) -> &'static str {
        match self {
            CnnMethod::Annr => "cnn-annr",
            CnnMethod::ThreeCosMul => "cnn-3cosmul",
            CnnMethod::ThreeCosAdd => "cnn-3cosadd",
            CnnMethod::Annc { .. } => "cnn-annc",
        }
    }
}

/// Retrieval over a fixed candidate pool embedded once with the CNN.
#[derive(Debug, Clone)]
pub struct CnnSolver<T> {
    method: CnnMethod,
    cnn: CnnEmbedder<T>,
    annr: Option<Annr<T>>,
    annc: Option<Annc<T>>,
    index: EmbeddingIndex,
}

impl<T: Scalar> CnnSolver<T> {
    pub fn new(
        method: CnnMethod,
        cnn: CnnEmbedder<T>,
        annr: Option<Annr<T>>,
        annc: Option<Annc<T>>,
        pool: &[String],
    ) -> Result<Self, SolverError> {
        match method {
            CnnMethod::Annr if annr.is_none() => {
                return Err(SolverError::MissingModel(method.id().into(), "annr"))
            }
            CnnMethod::Annc { .. } if annc.is_none() => {
                return Err(SolverError::MissingModel(method.id().into(), "annc"))
            }
            _ => {}
        }
        let vectors = cnn.embed_words(pool)?;
        let index = EmbeddingIndex::new(pool.to_vec(), vectors)?;
        Ok(Self { method, cnn, annr, annc, index })
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    fn annc_scores(
        &self,
        annc: &Annc<T>,
        e: &[Vec<f64>],
        index: &EmbeddingIndex,
        deadline: &Deadline,
    ) -> Result<SolverOutput, SolverError> {
        let mut scored = Vec::with_capacity(index.len());
        for (words, vecs) in index.words().chunks(ANNC_BATCH).zip(index.vectors().chunks(ANNC_BATCH)) {
            if deadline.expired() {
                return Ok(SolverOutput { timed_out: true, ..SolverOutput::ranked(scored) });
            }
            let rep = |v: &Vec<f64>| vec![v.clone(); vecs.len()];
            let s = annc.score_rows(&rep(&e[0]), &rep(&e[1]), &rep(&e[2]), vecs)?;
            scored.extend(words.iter().cloned().zip(s));
        }
        Ok(SolverOutput::ranked(scored))
    }
}

impl<T: Scalar> Solver for CnnSolver<T> {
    fn id(&self) -> &str {
        self.method.id()
    }

    fn solve(&self, a: &str, b: &str, c: &str, deadline: &Deadline) -> Result<SolverOutput, SolverError> {
        let e = self.cnn.embed_words(&[a, b, c])?;
        let cands = match self.method {
            CnnMethod::Annr => {
                let annr = self.annr.as_ref().expect("checked at construction");
                let x = annr.predict_rows(&e[0..1], &e[1..2], &e[2..3])?.remove(0);
                retrieve_nearest(&x, &self.index, TOP_K)?
            }
            CnnMethod::ThreeCosMul => solve_3cosmul(&e[0], &e[1], &e[2], &self.index, COSMUL_EPSILON)?,
            CnnMethod::ThreeCosAdd => solve_3cosadd(&e[0], &e[1], &e[2], &self.index)?,
            CnnMethod::Annc { prefilter } => {
                let annc = self.annc.as_ref().expect("checked at construction");
                return match prefilter {
                    Some(k) if k < self.index.len() => {
                        let short = solve_3cosmul(&e[0], &e[1], &e[2], &self.index, COSMUL_EPSILON)?;
                        let keep: Vec<usize> = short
                            .iter()
                            .take(k.max(1))
                            .map(|(w, _)| self.index.words().iter().position(|x| x == w).unwrap())
                            .collect();
                        self.annc_scores(annc, &e, &self.index.subset(&keep)?, deadline)
                    }
                    _ => self.annc_scores(annc, &e, &self.index, deadline),
                };
            }
        };
        Ok(SolverOutput::ranked(cands))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeMethod {
    /// Decode `e_B - e_A + e_C`.
    Parallel,
    /// Decode the ANNr prediction.
    Annr,
}

/// Generates the solution with the autoencoder's decoder.
#[derive(Debug, Clone)]
pub struct AeSolver<T> {
    method: AeMethod,
    ae: AutoEncoder<T>,
    annr: Option<Annr<T>>,
}

impl<T: Scalar> AeSolver<T> {
    pub fn new(method: AeMethod, ae: AutoEncoder<T>, annr: Option<Annr<T>>) -> Result<Self, SolverError> {
        if method == AeMethod::Annr {
            match &annr {
                None => return Err(SolverError::MissingModel("ae-annr".into(), "annr")),
                Some(m) if m.config.n != ae.embedding_dim() => {
                    return Err(SolverError::DimMismatch(m.config.n, ae.embedding_dim()))
                }
                _ => {}
            }
        }
        Ok(Self { method, ae, annr })
    }

    /// Embedding of the solution of `a:b::c:x`.
    pub fn target_embedding(&self, a: &str, b: &str, c: &str) -> Result<Vec<f64>, SolverError> {
        let e = self.ae.encode_words(&[a, b, c])?;
        match self.method {
            AeMethod::Parallel => solve_parallelogram(&e[0], &e[1], &e[2]),
            AeMethod::Annr => {
                let annr = self.annr.as_ref().expect("checked at construction");
                Ok(annr.predict_rows(&e[0..1], &e[1..2], &e[2..3])?.remove(0))
            }
        }
    }
}

impl<T: Scalar> Solver for AeSolver<T> {
    fn id(&self) -> &str {
        match self.method {
            AeMethod::Parallel => "ae-parallel",
            AeMethod::Annr => "ae-annr",
        }
    }

    fn solve(&self, a: &str, b: &str, c: &str, _deadline: &Deadline) -> Result<SolverOutput, SolverError> {
        let x = self.target_embedding(a, b, c)?;
        let longest = [a, b, c].iter().map(|w| w.chars().count()).max().unwrap_or(0);
        let max_len = self.ae.config.max_decode_len.max(longest + 5);
        let d = self.ae.decode_greedy(&[x], max_len)?.remove(0);
        Ok(SolverOutput {
            candidates: vec![(d.word, 1.0)],
            truncated: d.truncated,
            ..SolverOutput::default()
        })
    }
}
