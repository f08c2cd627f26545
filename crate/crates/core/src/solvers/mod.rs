//! Analogy solvers: symbolic baselines, vector arithmetic and the neural
//! retrieval and generation pipelines.
//!
//! Every solver implements [`Solver`]; [`solve_with_timeout`] wraps a call into
//! a [`SolverRanking`] with timing and never propagates failures.

pub mod alea;
pub mod bag;
pub mod kolmo;
pub mod neural;
pub mod vector;

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::AnalogyQuadruple;
use crate::nn::NnError;

pub use alea::{solve_alea, AleaOutcome};
pub use bag::{bag_of, bag_target, Bag};
pub use kolmo::{solve_kolmo, EditOp, EditProgram, KolmoOutcome};
pub use neural::{AeMethod, AeSolver, CnnMethod, CnnSolver};
pub use vector::{
    cosine, retrieve_nearest, solve_3cosadd, solve_3cosmul, solve_parallelogram, EmbeddingIndex,
    COSMUL_EPSILON,
};

/// Candidates kept in a ranking.
pub const TOP_K: usize = 10;

/// Default per-equation time limit.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("unknown solver {0:?}")]
    UnknownSolver(String),
    #[error("solver {0} needs the {1} model")]
    MissingModel(String, &'static str),
}

/// Cooperative time limit checked by solvers between iterations.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub fn new(limit: Option<Duration>) -> Self {
        Self { start: Instant::now(), limit }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() >= l)
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }
}

/// What a solver produced for one equation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverOutput {
    pub candidates: Vec<(String, f64)>,
    pub timed_out: bool,
    pub no_solution: bool,
    /// Generation hit the length cap before the end marker.
    pub truncated: bool,
}

impl SolverOutput {
    pub fn ranked(candidates: Vec<(String, f64)>) -> Self {
        Self { candidates: sort_candidates(candidates), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRanking {
    /// The equation; `d` holds the gold answer when known.
    pub equation: AnalogyQuadruple,
    /// Best first: scores non-increasing, ties by word.
    pub candidates: Vec<(String, f64)>,
    pub solver_id: String,
    pub elapsed: Duration,
    pub timed_out: bool,
    pub no_solution: bool,
    pub truncated: bool,
    pub error: Option<String>,
}

impl SolverRanking {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|(w, _)| w.as_str())
    }

    /// 1-based rank of `word`, if present.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.words().position(|w| w == word).map(|p| p + 1)
    }
}

pub trait Solver: Send + Sync {
    fn id(&self) -> &str;

    fn solve(&self, a: &str, b: &str, c: &str, deadline: &Deadline)
        -> Result<SolverOutput, SolverError>;
}

/// Sorts by descending score, then ascending word. NaN scores sort last.
pub fn sort_candidates(mut c: Vec<(String, f64)>) -> Vec<(String, f64)> {
    c.sort_by(|x, y| compare_scores(x.1, y.1).then_with(|| x.0.cmp(&y.0)));
    c
}

fn compare_scores(x: f64, y: f64) -> Ordering {
    match (x.is_nan(), y.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => y.partial_cmp(&x).unwrap(),
    }
}

/// Runs `solver` on `equation` under `limit`, keeping the top [`TOP_K`].
/// Errors become an empty ranking with `no_solution` set and the message kept.
pub fn solve_with_timeout(
    solver: &dyn Solver,
    equation: &AnalogyQuadruple,
    limit: Option<Duration>,
) -> SolverRanking {
    let deadline = Deadline::new(limit);
    let mut ranking = SolverRanking {
        equation: equation.clone(),
        candidates: Vec::new(),
        solver_id: solver.id().to_string(),
        elapsed: Duration::ZERO,
        timed_out: false,
        no_solution: false,
        truncated: false,
        error: None,
    };
    if deadline.expired() {
        ranking.timed_out = true;
    } else {
        match solver.solve(&equation.a, &equation.b, &equation.c, &deadline) {
            Ok(out) => {
                let mut cands = sort_candidates(out.candidates);
                cands.truncate(TOP_K);
                ranking.no_solution = out.no_solution || (cands.is_empty() && !out.timed_out);
                ranking.candidates = cands;
                ranking.timed_out = out.timed_out || deadline.expired();
                ranking.truncated = out.truncated;
            }
            Err(e) => {
                log::warn!("{} failed on {equation}: {e}", solver.id());
                ranking.no_solution = true;
                ranking.error = Some(e.to_string());
            }
        }
    }
    ranking.elapsed = deadline.elapsed();
    ranking
}

/// Seed for a randomized solver on one equation, independent of the order in
/// which equations are processed.
pub fn equation_seed(seed: u64, a: &str, b: &str, c: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for w in [a, b, c] {
        h.update((w.len() as u64).to_le_bytes());
        h.update(w.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Monte-Carlo shuffle solver.
#[derive(Debug, Clone)]
pub struct AleaSolver {
    pub trials: usize,
    pub seed: u64,
}

impl Default for AleaSolver {
    fn default() -> Self {
        Self { trials: 1000, seed: 0 }
    }
}

impl Solver for AleaSolver {
    fn id(&self) -> &str {
        "alea"
    }

    fn solve(&self, a: &str, b: &str, c: &str, deadline: &Deadline) -> Result<SolverOutput, SolverError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(equation_seed(self.seed, a, b, c));
        let out = solve_alea(a, b, c, self.trials.max(1), &mut rng, deadline);
        let n = out.trials_run.max(1) as f64;
        Ok(SolverOutput {
            no_solution: out.candidates.is_empty() && !out.timed_out,
            timed_out: out.timed_out,
            candidates: out.candidates.into_iter().map(|(w, k)| (w, k as f64 / n)).collect(),
            truncated: false,
        })
    }
}

/// Minimal edit-program solver.
#[derive(Debug, Clone, Default)]
pub struct KolmoSolver {
    /// Search node limit; `None` leaves only the deadline.
    pub node_budget: Option<u64>,
}

impl Solver for KolmoSolver {
    fn id(&self) -> &str {
        "kolmo"
    }

    fn solve(&self, a: &str, b: &str, c: &str, deadline: &Deadline) -> Result<SolverOutput, SolverError> {
        let out = solve_kolmo(a, b, c, self.node_budget, deadline);
        Ok(SolverOutput {
            no_solution: out.solution.is_none() && !out.timed_out,
            timed_out: out.timed_out,
            candidates: out.solution.into_iter().map(|(w, _)| (w, 1.0)).collect(),
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<(String, f64)>);

    impl Solver for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn solve(&self, _: &str, _: &str, _: &str, _: &Deadline) -> Result<SolverOutput, SolverError> {
            Ok(SolverOutput { candidates: self.0.clone(), ..Default::default() })
        }
    }

    struct Failing;

    impl Solver for Failing {
        fn id(&self) -> &str {
            "failing"
        }
        fn solve(&self, _: &str, _: &str, _: &str, _: &Deadline) -> Result<SolverOutput, SolverError> {
            Err(SolverError::EmptyCandidates)
        }
    }

    fn eq() -> AnalogyQuadruple {
        AnalogyQuadruple::new("walk", "walked", "talk", "talked")
    }

    #[test]
    fn sorting_breaks_ties_by_word_and_keeps_top_k() {
        let cands: Vec<(String, f64)> = (0..15)
            .map(|i| (format!("w{:02}", 14 - i), if i < 5 { 1.0 } else { 0.5 }))
            .chain([("nan".to_string(), f64::NAN)])
            .collect();
        let r = solve_with_timeout(&Fixed(cands), &eq(), None);
        assert_eq!(r.candidates.len(), TOP_K);
        assert_eq!(r.candidates[0].0, "w10");
        assert!(r.candidates.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(!r.timed_out);
    }

    #[test]
    fn zero_limit_times_out_immediately() {
        let r = solve_with_timeout(&Fixed(vec![("x".into(), 1.0)]), &eq(), Some(Duration::ZERO));
        assert!(r.timed_out);
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn errors_do_not_abort() {
        let r = solve_with_timeout(&Failing, &eq(), None);
        assert!(r.no_solution);
        assert!(r.error.is_some());
        assert_eq!(r.rank_of("talked"), None);
    }

    #[test]
    fn equation_seed_is_order_free_and_distinguishes_terms() {
        assert_eq!(equation_seed(3, "a", "b", "c"), equation_seed(3, "a", "b", "c"));
        assert_ne!(equation_seed(3, "ab", "", "c"), equation_seed(3, "a", "b", "c"));
        assert_ne!(equation_seed(3, "a", "b", "c"), equation_seed(4, "a", "b", "c"));
    }

    #[test]
    fn symbolic_solvers_on_worked_example() {
        for s in [&AleaSolver::default() as &dyn Solver, &KolmoSolver::default()] {
            let r = solve_with_timeout(s, &AnalogyQuadruple::new("cat", "cats", "animal", "animals"), None);
            assert_eq!(r.rank_of("animals"), Some(1), "{}", s.id());
        }
    }
}
