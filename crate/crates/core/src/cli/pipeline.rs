//! File-backed pipeline: a run directory holds the config, the prepared
//! data, checkpoints, training reports and benchmark bundles.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::data::{
    build_analogy_corpus, build_word_dataset, file_checksum, parse_inflection_file,
    read_quadruples_tsv, read_words, split_corpus, toy, word_pool, write_quadruples_tsv,
    write_words, AnalogyQuadruple, CorpusSplit, DataError, InflectionTriple, SplitCounts,
    SplitManifest, Vocabulary, WordDataset,
};
use crate::evaluation::{run_benchmark, BenchmarkReport, SeedSolvers};
use crate::models::{Annc, AnncConfig, Annr, AnnrConfig, AutoEncoder, Checkpoint, CnnEmbedder};
use crate::solvers::{
    AeMethod, AeSolver, AleaSolver, CnnMethod, CnnSolver, KolmoSolver, Solver,
};
use crate::training::{
    generation_accuracy, pretrain_ae, round_trip_accuracy, train_ae_annr, train_annc,
    train_cnn_annr, TrainConfig, TrainReport,
};

use super::config::{check_model_name, check_solver_name, RunConfig};
use super::CliError;

const CONFIG_FILE: &str = "config.json";

/// A prepared run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub config: RunConfig,
}

fn resolve(path: &Path, data_root: Option<&Path>) -> PathBuf {
    match data_root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_owned(),
    }
}

/// Reads the source triples, either from the configured files or from the
/// toy generator. Returns the triples and `(source, sha256)` pairs.
fn load_triples(
    cfg: &RunConfig,
    data_root: Option<&Path>,
    scratch: &Path,
) -> Result<(Vec<InflectionTriple>, Vec<(String, String)>), CliError> {
    if cfg.inputs.is_empty() {
        let triples = toy::generate(cfg.data_seed, cfg.toy_stems);
        let path = scratch.join("toy.tsv");
        fs::write(&path, toy::to_tsv(&triples))?;
        return Ok((triples, vec![("toy.tsv".into(), file_checksum(&path)?)]));
    }
    let mut triples = Vec::new();
    let mut sums = Vec::new();
    for input in &cfg.inputs {
        let path = resolve(input, data_root);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let outcome = parse_inflection_file(&text, cfg.column_order, cfg.strict)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        for w in &outcome.warnings {
            log::warn!("{}:{}: skipped: {}", path.display(), w.line, w.reason);
        }
        triples.extend(outcome.triples);
        sums.push((input.display().to_string(), file_checksum(&path)?));
    }
    Ok((triples, sums))
}

/// Builds the corpus and splits for `cfg` and writes them under
/// `out_root/run-<hash>`. Rerunning with the same config rewrites identical
/// files.
pub fn prepare(cfg: &RunConfig, out_root: &Path, data_root: Option<&Path>) -> Result<RunDir, CliError> {
    cfg.validate()?;
    let root = out_root.join(cfg.run_dir_name());
    let data = root.join("data");
    fs::create_dir_all(&data)?;
    let (triples, source_checksums) = load_triples(cfg, data_root, &data)?;
    if triples.is_empty() {
        return Err(CliError::Runtime("no inflection triples in the input".into()));
    }
    let corpus = build_analogy_corpus(&triples);
    let pool = word_pool(&triples);
    let split = split_corpus(&corpus, pool.clone(), cfg.data_seed, cfg.split)?;
    write_quadruples_tsv(&data.join("train.tsv"), &split.train)?;
    write_quadruples_tsv(&data.join("dev.tsv"), &split.dev)?;
    write_quadruples_tsv(&data.join("test.tsv"), &split.test)?;
    write_words(&data.join("words.txt"), &split.word_pool)?;
    match build_word_dataset(&pool, cfg.data_seed, cfg.word_split) {
        Ok(ws) => {
            write_words(&data.join("words-train.txt"), &ws.train)?;
            write_words(&data.join("words-dev.txt"), &ws.dev)?;
            write_words(&data.join("words-test.txt"), &ws.test)?;
        }
        Err(e @ DataError::TooFewWords { .. }) => {
            log::warn!("no autoencoder word lists: {e}");
            for f in ["words-train.txt", "words-dev.txt", "words-test.txt"] {
                let _ = fs::remove_file(data.join(f));
            }
        }
        Err(e) => return Err(e.into()),
    }
    let manifest = SplitManifest {
        seed: cfg.data_seed,
        sizes: cfg.split,
        counts: SplitCounts {
            train: split.train.len(),
            dev: split.dev.len(),
            test: split.test.len(),
            corpus: corpus.len(),
            words: split.word_pool.len(),
        },
        source_checksums,
    };
    fs::write(data.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(root.join(CONFIG_FILE), cfg.to_json())?;
    log::info!(
        "prepared {}: corpus {}, train {}, dev {}, test {}, words {}",
        root.display(),
        corpus.len(),
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        split.word_pool.len()
    );
    Ok(RunDir { root, config: cfg.clone() })
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Err(CliError::Runtime(format!(
                "{} is not a prepared run directory (no {CONFIG_FILE}; run `morpho prepare` first)",
                root.display()
            )));
        }
        Ok(Self { root: root.to_owned(), config: RunConfig::load(&path)? })
    }

    fn data(&self, file: &str) -> PathBuf {
        self.root.join("data").join(file)
    }

    pub fn manifest(&self) -> Result<SplitManifest, CliError> {
        Ok(serde_json::from_str(&fs::read_to_string(self.data("manifest.json"))?)?)
    }

    pub fn split(&self) -> Result<CorpusSplit, CliError> {
        Ok(CorpusSplit {
            train: read_quadruples_tsv(&self.data("train.tsv"))?,
            dev: read_quadruples_tsv(&self.data("dev.tsv"))?,
            test: read_quadruples_tsv(&self.data("test.tsv"))?,
            word_pool: read_words(&self.data("words.txt"))?,
            seed: self.config.data_seed,
        })
    }

    pub fn word_pool(&self) -> Result<Vec<String>, CliError> {
        Ok(read_words(&self.data("words.txt"))?)
    }

    pub fn word_dataset(&self) -> Result<WordDataset, CliError> {
        if !self.data("words-train.txt").exists() {
            return Err(CliError::Runtime(
                "this run has no autoencoder word lists (too few distinct words)".into(),
            ));
        }
        let pool = self.word_pool()?;
        Ok(WordDataset {
            train: read_words(&self.data("words-train.txt"))?,
            dev: read_words(&self.data("words-dev.txt"))?,
            test: read_words(&self.data("words-test.txt"))?,
            vocab: Vocabulary::from_words(&pool),
        })
    }

    pub fn model_path(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("models").join(format!("{model}-seed{seed}.mann"))
    }

    pub fn report_path(&self, model: &str, seed: u64) -> PathBuf {
        self.root.join("reports").join(format!("train-{model}-seed{seed}.json"))
    }

    /// Loads a checkpoint that `user` depends on, with an error that names
    /// the missing file and the command producing it.
    pub fn checkpoint(&self, model: &str, seed: u64, user: &str) -> Result<(Checkpoint, PathBuf), CliError> {
        let path = self.model_path(model, seed);
        if !path.exists() {
            return Err(CliError::Runtime(format!(
                "{user} needs the {model} checkpoint {} (run `morpho train --run {} --model {model} --seed {seed}`)",
                path.display(),
                self.root.display()
            )));
        }
        Ok((Checkpoint::load(&path)?, path))
    }

    fn train_config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..base.clone() }
    }

    /// Trains `model` for `seed`, writes the checkpoint and the JSON report.
    pub fn train(&self, model: &str, seed: u64) -> Result<TrainReport, CliError> {
        check_model_name(model)?;
        let cfg = &self.config;
        let sizes = &cfg.models;
        // One independent stream per model keeps initializations unrelated.
        let stream = super::config::MODELS.iter().position(|m| *m == model).unwrap_or(0) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (checkpoint, report) = match model {
            "annc" => {
                let split = self.split()?;
                let vocab = Vocabulary::from_words(&split.word_pool);
                let mut cnn = CnnEmbedder::new(sizes.cnn.clone(), vocab, &mut rng)?;
                let annc_cfg = AnncConfig { n: cnn.output_dim(), f1: sizes.annc_f1, f2: sizes.annc_f2 };
                let mut annc = Annc::new(annc_cfg, &mut rng)?;
                let report = train_annc(&mut cnn, &mut annc, &split, &self.train_config(&cfg.training.annc, seed))?;
                (Checkpoint { cnn: Some(cnn), annc: Some(annc), ..Default::default() }, report)
            }
            "cnn-annr" => {
                let (ck, path) = self.checkpoint("annc", seed, "cnn-annr training")?;
                let mut cnn = ck.require_cnn(&path)?.clone();
                let split = self.split()?;
                let n = cnn.output_dim();
                let mut annr = Annr::new(AnnrConfig { n, hidden: sizes.annr_hidden.unwrap_or(n) }, &mut rng)?;
                let report =
                    train_cnn_annr(&mut cnn, &mut annr, &split, &self.train_config(&cfg.training.cnn_annr, seed))?;
                (Checkpoint { cnn: Some(cnn), annr: Some(annr), ..Default::default() }, report)
            }
            "ae" => {
                let ws = self.word_dataset()?;
                let mut ae = AutoEncoder::new(sizes.autoencoder.clone(), ws.vocab.clone(), &mut rng)?;
                let mut report = pretrain_ae(&mut ae, &ws.train, &ws.dev, &self.train_config(&cfg.training.ae, seed))?;
                report
                    .final_metrics
                    .insert("test_round_trip_accuracy".into(), round_trip_accuracy(&ae, &ws.test)?);
                (Checkpoint { autoencoder: Some(ae), ..Default::default() }, report)
            }
            "ae-annr" => {
                let (ck, path) = self.checkpoint("ae", seed, "ae-annr training")?;
                let mut ae = ck.require_autoencoder(&path)?.clone();
                let split = self.split()?;
                let n = ae.embedding_dim();
                let mut annr = Annr::new(AnnrConfig { n, hidden: sizes.annr_hidden.unwrap_or(n) }, &mut rng)?;
                let mut report =
                    train_ae_annr(&mut ae, &mut annr, &split, &self.train_config(&cfg.training.ae_annr, seed))?;
                report
                    .final_metrics
                    .insert("test_generation_accuracy".into(), generation_accuracy(&ae, &annr, &split.test)?);
                (Checkpoint { autoencoder: Some(ae), annr: Some(annr), ..Default::default() }, report)
            }
            _ => unreachable!("model names are checked"),
        };
        let path = self.model_path(model, seed);
        fs::create_dir_all(path.parent().expect("models directory"))?;
        checkpoint.save(&path)?;
        let report_path = self.report_path(model, seed);
        fs::create_dir_all(report_path.parent().expect("reports directory"))?;
        fs::write(&report_path, report.to_json() + "\n")?;
        Ok(report)
    }

    /// Instantiates the named solver with the checkpoints of `seed`.
    pub fn solver(&self, name: &str, seed: u64) -> Result<Box<dyn Solver>, CliError> {
        check_solver_name(name)?;
        let cfg = &self.config;
        let cnn_solver = |model: &str, method: CnnMethod| -> Result<Box<dyn Solver>, CliError> {
            let (ck, path) = self.checkpoint(model, seed, &format!("solver {name}"))?;
            let cnn = ck.require_cnn(&path)?.clone();
            let pool = self.word_pool()?;
            Ok(Box::new(CnnSolver::new(method, cnn, ck.annr.clone(), ck.annc.clone(), &pool)?))
        };
        Ok(match name {
            "alea" => Box::new(AleaSolver { trials: cfg.alea_trials, seed }),
            "kolmo" => Box::new(KolmoSolver { node_budget: cfg.kolmo_budget }),
            "cnn-3cosadd" => cnn_solver("annc", CnnMethod::ThreeCosAdd)?,
            "cnn-3cosmul" => cnn_solver("annc", CnnMethod::ThreeCosMul)?,
            "cnn-annc" => cnn_solver("annc", CnnMethod::Annc { prefilter: cfg.annc_prefilter })?,
            "cnn-annr" => cnn_solver("cnn-annr", CnnMethod::Annr)?,
            "ae-parallel" | "ae-annr" => {
                let (model, method) =
                    if name == "ae-annr" { ("ae-annr", AeMethod::Annr) } else { ("ae", AeMethod::Parallel) };
                let (ck, path) = self.checkpoint(model, seed, &format!("solver {name}"))?;
                let ae = ck.require_autoencoder(&path)?.clone();
                Box::new(AeSolver::new(method, ae, ck.annr.clone())?)
            }
            _ => unreachable!("solver names are checked"),
        })
    }

    /// Runs `solvers` for every seed over `equations` (the test split when
    /// `None`) and writes the bundle to `<run>/<name>`.
    pub fn benchmark(
        &self,
        solvers: &[String],
        seeds: &[u64],
        timeout_secs: f64,
        equations: Option<Vec<AnalogyQuadruple>>,
        name: &str,
    ) -> Result<BenchmarkReport, CliError> {
        if solvers.is_empty() {
            return Err(CliError::Usage("no solvers requested".into()));
        }
        if seeds.is_empty() {
            return Err(CliError::Usage("no seeds requested".into()));
        }
        if !(timeout_secs.is_finite() && timeout_secs >= 0.0) {
            return Err(CliError::Usage(format!("invalid timeout {timeout_secs}")));
        }
        for s in solvers {
            check_solver_name(s)?;
        }
        let equations = match equations {
            Some(e) => e,
            None => self.split()?.test,
        };
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let built = solvers.iter().map(|s| self.solver(s, seed)).collect::<Result<Vec<_>, _>>()?;
            runs.push(SeedSolvers { seed, solvers: built });
        }
        let report = run_benchmark(
            &runs,
            &equations,
            Some(Duration::from_secs_f64(timeout_secs)),
            &self.config.language,
        );
        report.write_bundle(&self.root.join(name))?;
        Ok(report)
    }
}
