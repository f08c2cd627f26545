//! The `morpho` command line: prepare data, train models, solve equations,
//! run benchmarks and print reports.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod config;
mod pipeline;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::data::{read_quadruples_tsv, toy, AnalogyQuadruple, ColumnOrder, DataError};
use crate::evaluation::EvalError;
use crate::models::ModelError;
use crate::nn::NnError;
use crate::solvers::{solve_with_timeout, SolverError, SolverRanking};
use crate::training::{TrainError, TrainReport};

pub use config::{
    check_model_name, check_solver_name, ModelSizes, RunConfig, TrainingSettings, MODELS,
    SOLVER_ROSTER,
};
pub use pipeline::{prepare, RunDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_FAILURE,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(std::io::Error, serde_json::Error, DataError, ModelError, NnError, TrainError, EvalError);

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::UnknownSolver(_) => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "morpho", version, about = "Morphological analogy corpora, models and solvers")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic toy language as a lemma/features/form file.
    Synth {
        #[arg(long, default_value_t = 200)]
        stems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the analogy corpus and splits into a new run directory.
    Prepare(PrepareArgs),
    /// Train one model for one seed.
    Train {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(MODELS))]
        model: String,
        /// Defaults to the first seed of the run config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve A:B::C:x and print the ranked candidates.
    Solve {
        #[arg(long, value_parser = parse_solver)]
        solver: String,
        a: String,
        b: String,
        c: String,
        /// Run directory holding the checkpoints of neural solvers.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seconds; the run config value (or 10) when absent.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run solvers over the test split (or an equation file) and write a
    /// report bundle inside the run directory.
    Benchmark {
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated solver names; the config roster when absent.
        #[arg(long, value_delimiter = ',', value_parser = parse_solver)]
        solvers: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        timeout: Option<f64>,
        /// Tab-separated A B C D [feature] equations instead of the test split.
        #[arg(long)]
        equations: Option<PathBuf>,
        /// Only the first N equations.
        #[arg(long)]
        limit: Option<usize>,
        /// Bundle directory name inside the run directory.
        #[arg(long, default_value = "benchmark")]
        name: String,
    },
    /// Print the training summaries and the benchmark table of a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "benchmark")]
        name: String,
        /// Print the benchmark metrics as JSON instead.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// JSON run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the scaled-down toy preset instead of full-size defaults.
    #[arg(long)]
    pub toy: bool,
    /// Inflection files; relative paths resolve against the data directory.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long, value_parser = parse_column_order)]
    pub column_order: Option<ColumnOrder>,
    /// Abort on the first malformed line.
    #[arg(long)]
    pub strict: bool,
    /// Seed of the corpus split (and of the toy generator).
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub stems: Option<usize>,
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub train_max: Option<usize>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long, env = "MORPHO_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<String, String> {
    check_solver_name(s).map(|_| s.to_owned()).map_err(|e| e.to_string())
}

fn parse_column_order(s: &str) -> Result<ColumnOrder, String> {
    s.parse()
}

impl PrepareArgs {
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, self.toy) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, true) => RunConfig::toy(),
            (None, false) => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        if let Some(v) = &self.language {
            cfg.language = v.clone();
        }
        if let Some(v) = self.column_order {
            cfg.column_order = v;
        }
        cfg.strict |= self.strict;
        if let Some(v) = self.data_seed {
            cfg.data_seed = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.stems {
            cfg.toy_stems = v;
        }
        if let Some(v) = self.dev {
            cfg.split.dev = v;
        }
        if let Some(v) = self.test {
            cfg.split.test = v;
        }
        if let Some(v) = self.train_max {
            cfg.split.train_max = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct SolveJson<'a> {
    solver: &'a str,
    equation: String,
    candidates: Vec<CandidateJson<'a>>,
    timed_out: bool,
    no_solution: bool,
    truncated: bool,
    elapsed_ms: f64,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct CandidateJson<'a> {
    word: &'a str,
    score: f64,
}

fn render_ranking(r: &SolverRanking, top: usize, json: bool) -> String {
    if json {
        let out = SolveJson {
            solver: &r.solver_id,
            equation: format!("{}:{}::{}:x", r.equation.a, r.equation.b, r.equation.c),
            candidates: r.candidates.iter().take(top).map(|(w, s)| CandidateJson { word: w, score: *s }).collect(),
            timed_out: r.timed_out,
            no_solution: r.no_solution,
            truncated: r.truncated,
            elapsed_ms: r.elapsed.as_secs_f64() * 1e3,
            error: r.error.as_deref(),
        };
        return serde_json::to_string_pretty(&out).expect("ranking serializes") + "\n";
    }
    let mut s = String::new();
    for (i, (w, score)) in r.candidates.iter().take(top).enumerate() {
        let _ = writeln!(s, "{}\t{w}\t{score:.6}", i + 1);
    }
    if r.timed_out {
        s.push_str("# timed out\n");
    }
    if r.no_solution {
        s.push_str("# no solution\n");
    }
    s
}

fn summarize_report(file: &str, r: &TrainReport) -> String {
    let metrics: Vec<String> = r.final_metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    format!(
        "{file}: {} epochs, stop {:?}, best epoch {}, {:.1}s, {}",
        r.epochs.len(),
        r.stop_reason,
        r.best_epoch,
        r.wall_time_secs,
        metrics.join(" ")
    )
}

fn load_equations(path: &std::path::Path) -> Result<Vec<AnalogyQuadruple>, CliError> {
    read_quadruples_tsv(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Executes one parsed command, writing its primary output to `out`.
pub fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Synth { stems, seed, out: path } => {
            if stems == 0 {
                return Err(CliError::Usage("--stems must be positive".into()));
            }
            let tsv = toy::to_tsv(&toy::generate(seed, stems));
            match path {
                Some(p) => std::fs::write(p, tsv)?,
                None => out.write_all(tsv.as_bytes())?,
            }
        }
        Command::Prepare(args) => {
            let cfg = args.run_config()?;
            let run = prepare(&cfg, &args.out, args.data_dir.as_deref())?;
            let m = run.manifest()?;
            writeln!(
                out,
                "{}\ncorpus {} train {} dev {} test {} words {}",
                run.root.display(),
                m.counts.corpus,
                m.counts.train,
                m.counts.dev,
                m.counts.test,
                m.counts.words
            )?;
        }
        Command::Train { run, model, seed } => {
            let run = RunDir::open(&run)?;
            let seed = seed.or_else(|| run.config.seeds.first().copied()).unwrap_or(0);
            let report = run.train(&model, seed)?;
            let path = run.model_path(&model, seed);
            writeln!(out, "{}", path.display())?;
            writeln!(out, "{}", summarize_report(&format!("{model}-seed{seed}"), &report))?;
        }
        Command::Solve { solver, a, b, c, run, seed, timeout, top, json } => {
            let (built, timeout) = match &run {
                Some(dir) => {
                    let run = RunDir::open(dir)?;
                    (run.solver(&solver, seed)?, timeout.unwrap_or(run.config.timeout_secs))
                }
                None => {
                    let standalone = RunConfig { seeds: vec![seed], ..RunConfig::default() };
                    let run = RunDir { root: PathBuf::from("."), config: standalone };
                    if !matches!(solver.as_str(), "alea" | "kolmo") {
                        return Err(CliError::Runtime(format!(
                            "solver {solver} needs trained checkpoints ({}); pass --run <dir>",
                            run.model_path(checkpoint_of(&solver), seed)
                                .file_name()
                                .expect("file name")
                                .to_string_lossy()
                        )));
                    }
                    (run.solver(&solver, seed)?, timeout.unwrap_or(run.config.timeout_secs))
                }
            };
            if !(timeout.is_finite() && timeout >= 0.0) {
                return Err(CliError::Usage(format!("invalid timeout {timeout}")));
            }
            let q = AnalogyQuadruple::new(a, b, c, "?");
            let ranking = solve_with_timeout(built.as_ref(), &q, Some(Duration::from_secs_f64(timeout)));
            if let Some(e) = &ranking.error {
                return Err(CliError::Runtime(e.clone()));
            }
            out.write_all(render_ranking(&ranking, top, json).as_bytes())?;
        }
        Command::Benchmark { run, solvers, seeds, timeout, equations, limit, name } => {
            let run = RunDir::open(&run)?;
            let solvers = solvers.unwrap_or_else(|| run.config.solvers.clone());
            let seeds = seeds.unwrap_or_else(|| run.config.seeds.clone());
            let timeout = timeout.unwrap_or(run.config.timeout_secs);
            let mut eqs = match &equations {
                Some(p) => load_equations(p)?,
                None => run.split()?.test,
            };
            if let Some(n) = limit {
                eqs.truncate(n);
            }
            let report = run.benchmark(&solvers, &seeds, timeout, Some(eqs), &name)?;
            write!(out, "{}", report.table())?;
            writeln!(out, "bundle: {}", run.root.join(&name).display())?;
        }
        Command::Report { run, name, json } => {
            let run = RunDir::open(&run)?;
            let bundle = run.root.join(&name);
            if json {
                let text = std::fs::read_to_string(bundle.join("metrics.json"))
                    .map_err(|e| CliError::Runtime(format!("no benchmark bundle at {}: {e}", bundle.display())))?;
                out.write_all(text.as_bytes())?;
                return Ok(());
            }
            let reports = run.root.join("reports");
            if reports.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(&reports)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                files.sort();
                for f in files {
                    let r: TrainReport = serde_json::from_str(&std::fs::read_to_string(&f)?)?;
                    let stem = f.file_stem().expect("file stem").to_string_lossy().into_owned();
                    writeln!(out, "{}", summarize_report(&stem, &r))?;
                }
            }
            match std::fs::read_to_string(bundle.join("table.txt")) {
                Ok(table) => out.write_all(table.as_bytes())?,
                Err(_) => writeln!(out, "no benchmark bundle at {}", bundle.display())?,
            }
        }
    }
    Ok(())
}

fn checkpoint_of(solver: &str) -> &'static str {
    match solver {
        "cnn-annr" => "cnn-annr",
        "ae-parallel" => "ae",
        "ae-annr" => "ae-annr",
        _ => "annc",
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli.command, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("morpho").chain(args.iter().copied()))
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(parse(&["prepare", "--column-order", "sideways"]).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(parse(&["solve", "--solver", "oracle", "a", "b", "c"]).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(parse(&["train", "--run", "x", "--model", "annr"]).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(run(["morpho", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn prepare_flags_override_preset() {
        let cli = parse(&["prepare", "--toy", "--seeds", "4,5", "--test", "50", "--column-order", "lemma-form-features"])
            .unwrap();
        let Command::Prepare(args) = cli.command else { panic!("prepare expected") };
        let cfg = args.run_config().unwrap();
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.split.test, 50);
        assert_eq!(cfg.column_order, ColumnOrder::LemmaFormFeatures);
        assert_eq!(cfg.models, RunConfig::toy().models);
    }

    #[test]
    fn symbolic_solve_needs_no_run() {
        let cli = parse(&["solve", "--solver", "kolmo", "walk", "walked", "talk", "--json"]).unwrap();
        let mut out = Vec::new();
        execute(cli.command, &mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["candidates"][0]["word"], "talked");
    }

    #[test]
    fn neural_solve_without_run_names_checkpoint() {
        let cli = parse(&["solve", "--solver", "cnn-annr", "a", "b", "c"]).unwrap();
        let err = execute(cli.command, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_FAILURE);
        assert!(err.to_string().contains("cnn-annr-seed0.mann"), "{err}");
    }
}
