use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::metrics::{generation_metrics, hit_at_k, GenerationMetrics, RetrievalMetrics, HIT_KS};
use super::EvalError;
use crate::data::AnalogyQuadruple;
use crate::solvers::{solve_with_timeout, Solver, SolverRanking, TOP_K};

/// The solvers built from one seed's models.
pub struct SeedSolvers {
    pub seed: u64,
    pub solvers: Vec<Box<dyn Solver>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub solver: String,
    pub seed: u64,
    pub retrieval: RetrievalMetrics,
    /// Rank-1 candidate scored as a generated word.
    pub generation: GenerationMetrics,
    pub timeouts: usize,
    pub no_solution: usize,
    pub errors: usize,
    pub total_elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub solver: String,
    pub seeds: Vec<u64>,
    pub hit_at: BTreeMap<usize, MeanStd>,
    pub char_accuracy: MeanStd,
    pub timeouts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub language: String,
    pub timeout_secs: Option<f64>,
    pub n_equations: usize,
    pub runs: Vec<RunMetrics>,
    pub aggregate: Vec<AggregateRow>,
    /// Rankings per `(solver, seed)`, in equation order.
    #[serde(skip)]
    pub traces: Vec<(String, u64, Vec<SolverRanking>)>,
}

pub const TRACE_HEADER: &str = "A\tB\tC\tgold\trank1\trank2\trank3\trank4\trank5\trank6\trank7\trank8\trank9\trank10\ttimed_out\telapsed_ms";

pub fn trace_file_name(solver: &str, seed: u64) -> String {
    format!("trace-{solver}-seed{seed}.tsv")
}

/// The trace with its last (`elapsed_ms`) column removed, for comparing runs.
pub fn strip_elapsed(tsv: &str) -> String {
    tsv.lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn solve_all(solver: &dyn Solver, equations: &[AnalogyQuadruple], timeout: Option<Duration>) -> Vec<SolverRanking> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(equations.len().max(1));
    let chunk = equations.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = equations
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|e| solve_with_timeout(solver, e, timeout)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

/// Runs every solver of every seed over `equations` (gold answers in `d`).
/// Failures and timeouts are recorded per equation; nothing aborts the run.
pub fn run_benchmark(
    runs: &[SeedSolvers],
    equations: &[AnalogyQuadruple],
    timeout: Option<Duration>,
    language: &str,
) -> BenchmarkReport {
    let golds: Vec<&str> = equations.iter().map(|e| e.d.as_str()).collect();
    let mut metrics = Vec::new();
    let mut traces = Vec::new();
    for run in runs {
        for solver in &run.solvers {
            let rankings = solve_all(solver.as_ref(), equations, timeout);
            let retrieval = hit_at_k(&rankings, &golds, &HIT_KS).expect("aligned by construction");
            let first: Vec<&str> = rankings
                .iter()
                .map(|r| if r.timed_out { "" } else { r.words().next().unwrap_or("") })
                .collect();
            let truncated: Vec<bool> = rankings.iter().map(|r| r.truncated).collect();
            let generation = generation_metrics(&first, &golds, Some(&truncated)).expect("aligned by construction");
            metrics.push(RunMetrics {
                solver: solver.id().to_string(),
                seed: run.seed,
                retrieval,
                generation,
                timeouts: rankings.iter().filter(|r| r.timed_out).count(),
                no_solution: rankings.iter().filter(|r| r.no_solution).count(),
                errors: rankings.iter().filter(|r| r.error.is_some()).count(),
                total_elapsed_ms: rankings.iter().map(|r| r.elapsed.as_secs_f64() * 1e3).sum(),
            });
            traces.push((solver.id().to_string(), run.seed, rankings));
        }
    }
    BenchmarkReport {
        language: language.to_string(),
        timeout_secs: timeout.map(|t| t.as_secs_f64()),
        n_equations: equations.len(),
        aggregate: aggregate(&metrics),
        runs: metrics,
        traces,
    }
}

fn aggregate(runs: &[RunMetrics]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.solver.as_str()) {
            order.push(&r.solver);
        }
    }
    order
        .into_iter()
        .map(|solver| {
            let rs: Vec<&RunMetrics> = runs.iter().filter(|r| r.solver == solver).collect();
            let hit_at = HIT_KS
                .iter()
                .map(|&k| (k, mean_std(&rs.iter().map(|r| r.retrieval.hit(k)).collect::<Vec<_>>())))
                .collect();
            AggregateRow {
                solver: solver.to_string(),
                seeds: rs.iter().map(|r| r.seed).collect(),
                hit_at,
                char_accuracy: mean_std(&rs.iter().map(|r| r.generation.char_accuracy).collect::<Vec<_>>()),
                timeouts: rs.iter().map(|r| r.timeouts).sum(),
            }
        })
        .collect()
}

impl BenchmarkReport {
    /// Per-equation trace of one run.
    pub fn trace_tsv(&self, solver: &str, seed: u64) -> Option<String> {
        let (_, _, rankings) = self.traces.iter().find(|(s, k, _)| s == solver && *k == seed)?;
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in rankings {
            let e = &r.equation;
            let mut cols: Vec<String> = vec![e.a.clone(), e.b.clone(), e.c.clone(), e.d.clone()];
            cols.extend((0..TOP_K).map(|i| r.candidates.get(i).map_or(String::new(), |c| c.0.clone())));
            cols.push(r.timed_out.to_string());
            cols.push(format!("{:.3}", r.elapsed.as_secs_f64() * 1e3));
            out.push_str(&cols.join("\t"));
            out.push('\n');
        }
        Some(out)
    }

    /// Human-readable summary: one row per solver, percentages as mean ± std.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<12} {:>5} {:>15} {:>15} {:>15} {:>15} {:>15} {:>8}",
            "language", "solver", "seeds", "hit@1", "hit@3", "hit@5", "hit@10", "char acc", "timeouts"
        );
        let pct = |m: &MeanStd| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std);
        for row in &self.aggregate {
            let _ = writeln!(
                s,
                "{:<10} {:<12} {:>5} {:>15} {:>15} {:>15} {:>15} {:>15} {:>8}",
                self.language,
                row.solver,
                row.seeds.len(),
                pct(&row.hit_at[&1]),
                pct(&row.hit_at[&3]),
                pct(&row.hit_at[&5]),
                pct(&row.hit_at[&10]),
                pct(&row.char_accuracy),
                row.timeouts
            );
        }
        s
    }

    /// Writes `metrics.json`, `table.txt` and one trace TSV per run into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("table.txt"), self.table())?;
        for (solver, seed, _) in &self.traces {
            let tsv = self.trace_tsv(solver, *seed).expect("trace exists");
            fs::write(dir.join(trace_file_name(solver, *seed)), tsv)?;
        }
        Ok(())
    }

    /// `true` when every run's hit rates are non-decreasing in `k`.
    pub fn hit_rates_monotone(&self) -> bool {
        self.runs.iter().all(|r| r.retrieval.is_monotone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{Deadline, KolmoSolver, SolverError, SolverOutput};

    struct Echo;

    impl Solver for Echo {
        fn id(&self) -> &str {
            "echo"
        }
        fn solve(&self, _: &str, b: &str, c: &str, _: &Deadline) -> Result<SolverOutput, SolverError> {
            Ok(SolverOutput::ranked(vec![(b.to_string(), 1.0), (c.to_string(), 0.5)]))
        }
    }

    struct Sleeper;

    impl Solver for Sleeper {
        fn id(&self) -> &str {
            "sleeper"
        }
        fn solve(&self, _: &str, _: &str, _: &str, d: &Deadline) -> Result<SolverOutput, SolverError> {
            while !d.expired() {
                std::thread::sleep(Duration::from_millis(1));
            }
            Ok(SolverOutput { timed_out: true, ..Default::default() })
        }
    }

    fn equations() -> Vec<AnalogyQuadruple> {
        vec![
            AnalogyQuadruple::new("a", "b", "a", "b"),
            AnalogyQuadruple::new("x", "y", "z", "z"),
            AnalogyQuadruple::new("x", "y", "z", "q"),
        ]
    }

    #[test]
    fn identical_seeds_have_zero_std() {
        let runs = vec![
            SeedSolvers { seed: 1, solvers: vec![Box::new(Echo)] },
            SeedSolvers { seed: 2, solvers: vec![Box::new(Echo)] },
        ];
        let r = run_benchmark(&runs, &equations(), None, "toy");
        let row = &r.aggregate[0];
        assert_eq!(row.seeds, vec![1, 2]);
        assert!(row.hit_at.values().all(|m| m.std == 0.0));
        assert!((row.hit_at[&1].mean - 1.0 / 3.0).abs() < 1e-12);
        assert!((row.hit_at[&3].mean - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.hit_rates_monotone());
    }

    #[test]
    fn always_timing_out_counts_as_misses() {
        let runs = vec![SeedSolvers { seed: 0, solvers: vec![Box::new(Sleeper)] }];
        let r = run_benchmark(&runs, &equations(), Some(Duration::from_millis(5)), "toy");
        assert_eq!(r.runs[0].timeouts, 3);
        assert!(r.runs[0].retrieval.hit_at.values().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_timeout_kolmo_completes() {
        let runs = vec![SeedSolvers { seed: 0, solvers: vec![Box::new(KolmoSolver::default())] }];
        let r = run_benchmark(&runs, &equations(), Some(Duration::ZERO), "toy");
        assert_eq!(r.runs[0].timeouts, 3);
    }

    #[test]
    fn bundle_files_and_trace_layout() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![SeedSolvers { seed: 7, solvers: vec![Box::new(Echo)] }];
        let r = run_benchmark(&runs, &equations(), None, "toy");
        r.write_bundle(dir.path()).unwrap();
        let tsv = fs::read_to_string(dir.path().join(trace_file_name("echo", 7))).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        let cols: Vec<&str> = lines[2].split('\t').collect();
        assert_eq!(cols.len(), 16);
        assert_eq!(&cols[..6], ["x", "y", "z", "z", "y", "z"]);
        assert_eq!(cols[14], "false");
        assert!(!strip_elapsed(&tsv).contains("elapsed_ms"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
        assert_eq!(json["runs"][0]["seed"], 7);
        assert!(fs::read_to_string(dir.path().join("table.txt")).unwrap().contains("echo"));
    }

    #[test]
    fn mean_std_values() {
        let m = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(mean_std(&[4.0]).std, 0.0);
    }
}
