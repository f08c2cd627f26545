//! Training loops: autoencoder pre-training, ANNc (which also pre-trains the
//! CNN embedder), two-phase CNN+ANNr and joint AE+ANNr.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axioms::{augment_for_classification, augment_for_regression};
use crate::data::{AnalogyQuadruple, CorpusSplit};
use crate::evaluation::balanced_accuracy;
use crate::models::{Annc, Annr, AutoEncoder, CnnEmbedder};
use crate::nn::{
    clip_grad_norm, convex_combination, loss_annr, shuffle_permutation, Graph, NnError, Optimizer,
    OptimizerKind, ParamStore, Scalar, Var,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no training data")]
    NoData,
}

/// Bounds of `λ = min(max(epoch / divisor, min), max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub divisor: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { divisor: 5.0, min: 0.01, max: 0.99 }
    }
}

impl LambdaSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        (epoch as f64 / self.divisor).max(self.min).min(self.max)
    }
}

/// Weight of the autoencoding term at `epoch`; the ANNr term gets `1 - λ`.
pub fn lambda_schedule(epoch: usize) -> f64 {
    LambdaSchedule::default().at(epoch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    /// Total epochs over all phases.
    pub max_epochs: usize,
    /// Early-stopping patience, in epochs.
    pub patience: usize,
    /// Patience of the frozen-embedder phase of CNN+ANNr.
    pub phase1_patience: usize,
    pub seed: u64,
    /// Relative dev-loss improvement needed to reset patience.
    pub min_rel_improvement: f64,
    /// Global gradient-norm cap.
    pub clip_norm: Option<f64>,
    pub lambda: LambdaSchedule,
}

impl TrainConfig {
    pub fn ae_pretrain(seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::NAdam,
            lr: 1e-2,
            batch_size: 2048,
            max_epochs: 100,
            patience: 5,
            phase1_patience: 3,
            seed,
            min_rel_improvement: 0.01,
            clip_norm: Some(5.0),
            lambda: LambdaSchedule::default(),
        }
    }

    pub fn annc(seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            clip_norm: None,
            ..Self::ae_pretrain(seed)
        }
    }

    pub fn cnn_annr(seed: u64) -> Self {
        Self::annc(seed)
    }

    pub fn ae_annr(seed: u64) -> Self {
        Self {
            batch_size: 512,
            clip_norm: Some(5.0),
            ..Self::annc(seed)
        }
    }

    fn validate(&self, min_batch: usize) -> Result<(), TrainError> {
        if self.batch_size < min_batch {
            return Err(TrainError::Config(format!("batch size {} < {min_batch}", self.batch_size)));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: u8,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Task-specific dev metric (accuracy), when computed.
    pub dev_metric: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: String,
    pub epochs: Vec<EpochLog>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub wall_time_secs: f64,
    pub final_metrics: BTreeMap<String, f64>,
}

impl TrainReport {
    fn new(task: &str) -> Self {
        Self {
            task: task.into(),
            epochs: Vec::new(),
            stop_reason: StopReason::MaxEpochs,
            best_epoch: 0,
            wall_time_secs: 0.0,
            final_metrics: BTreeMap::new(),
        }
    }

    /// Equality ignoring wall time.
    pub fn same_run(&self, other: &Self) -> bool {
        Self { wall_time_secs: 0.0, ..self.clone() } == Self { wall_time_secs: 0.0, ..other.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Tracks the best score seen and a snapshot of the parameters that got it.
struct EarlyStopper<S> {
    best: f64,
    best_epoch: usize,
    snapshot: Option<S>,
    patience: usize,
    stale: usize,
    higher_is_better: bool,
    min_rel: f64,
}

impl<S> EarlyStopper<S> {
    fn new(patience: usize, higher_is_better: bool, min_rel: f64) -> Self {
        Self {
            best: if higher_is_better { f64::NEG_INFINITY } else { f64::INFINITY },
            best_epoch: 0,
            snapshot: None,
            patience,
            stale: 0,
            higher_is_better,
            min_rel,
        }
    }

    /// Records an epoch; returns `true` when patience has run out.
    fn observe(&mut self, epoch: usize, value: f64, snapshot: impl FnOnce() -> S) -> bool {
        let margin = self.min_rel * self.best.abs();
        let better = if self.higher_is_better {
            value > self.best + margin
        } else {
            value < self.best - margin
        };
        if better || self.snapshot.is_none() {
            self.best = value;
            self.best_epoch = epoch;
            self.snapshot = Some(snapshot());
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience.max(1)
    }
}

fn optimizer<T: Scalar>(cfg: &TrainConfig) -> Optimizer<T> {
    Optimizer::new(cfg.optimizer, cfg.lr)
}

fn step<T: Scalar>(
    g: &Graph<T>,
    loss: Var,
    stores: &mut [&mut ParamStore<T>],
    opt: &mut Optimizer<T>,
    clip: Option<f64>,
) -> Result<f64, NnError> {
    let grads = g.backward(loss)?;
    for s in stores.iter_mut() {
        s.accumulate(&grads);
    }
    if let Some(c) = clip {
        clip_grad_norm(stores, c);
    }
    opt.step(stores);
    Ok(g.scalar(loss).as_f64())
}

/// Distinct words of a batch and, per quadruple slot, their row indices.
struct WordIndex {
    words: Vec<String>,
    slots: [Vec<usize>; 4],
}

fn index_words(quads: &[AnalogyQuadruple]) -> WordIndex {
    let mut pos: HashMap<&str, usize> = HashMap::new();
    let mut words = Vec::new();
    let mut slots: [Vec<usize>; 4] = Default::default();
    for q in quads {
        for (k, w) in q.words().into_iter().enumerate() {
            let i = *pos.entry(w).or_insert_with(|| {
                words.push(w.to_string());
                words.len() - 1
            });
            slots[k].push(i);
        }
    }
    WordIndex { words, slots }
}

fn gather4<T: Scalar>(g: &mut Graph<T>, table: Var, idx: &WordIndex) -> Result<[Var; 4], NnError> {
    Ok([
        g.gather_rows(table, &idx.slots[0])?,
        g.gather_rows(table, &idx.slots[1])?,
        g.gather_rows(table, &idx.slots[2])?,
        g.gather_rows(table, &idx.slots[3])?,
    ])
}

fn finite_or_diverged(loss: f64, report: &mut TrainReport) -> bool {
    if loss.is_finite() {
        true
    } else {
        log::warn!("{}: non-finite loss, stopping", report.task);
        report.stop_reason = StopReason::Diverged;
        false
    }
}

/// Classification examples: eight valid forms labelled 1 and up to eight
/// invalid forms labelled 0 per quadruple.
fn classification_examples(
    quads: &[AnalogyQuadruple],
    rng: &mut ChaCha8Rng,
) -> Vec<(AnalogyQuadruple, f64)> {
    let mut out = Vec::with_capacity(quads.len() * 16);
    for q in quads {
        let aug = augment_for_classification(q, rng);
        out.extend(aug.valid.into_iter().map(|x| (x, 1.0)));
        out.extend(aug.invalid.into_iter().map(|x| (x, 0.0)));
    }
    out
}

fn annc_forward<T: Scalar>(
    g: &mut Graph<T>,
    cnn: &CnnEmbedder<T>,
    annc: &Annc<T>,
    batch: &[(AnalogyQuadruple, f64)],
) -> Result<(Var, Var), NnError> {
    let quads: Vec<AnalogyQuadruple> = batch.iter().map(|(q, _)| q.clone()).collect();
    let idx = index_words(&quads);
    let table = cnn.embed_batch(g, &idx.words)?;
    let [a, b, c, d] = gather4(g, table, &idx)?;
    let p = annc.score_batch(g, a, b, c, d)?;
    let y: Vec<T> = batch.iter().map(|(_, y)| T::from_f64(*y)).collect();
    let loss = g.bce(p, &y)?;
    Ok((p, loss))
}

/// Mean BCE and balanced accuracy of the classifier on `examples`.
pub fn evaluate_annc<T: Scalar>(
    cnn: &CnnEmbedder<T>,
    annc: &Annc<T>,
    examples: &[(AnalogyQuadruple, f64)],
) -> Result<(f64, f64), NnError> {
    let (mut total, mut scores, mut labels) = (0.0, Vec::new(), Vec::new());
    for chunk in examples.chunks(512) {
        let mut g = Graph::new();
        let (p, loss) = annc_forward(&mut g, cnn, annc, chunk)?;
        total += g.scalar(loss).as_f64() * chunk.len() as f64;
        scores.extend(g.value(p).iter().map(|x| x.as_f64()));
        labels.extend(chunk.iter().map(|(_, y)| *y == 1.0));
    }
    let bal = balanced_accuracy(&scores, &labels).value();
    Ok((total / examples.len().max(1) as f64, bal))
}

/// Jointly trains the CNN embedder and ANNc on augmented classification
/// examples with binary cross-entropy; early stopping on dev loss.
pub fn train_annc<T: Scalar>(
    cnn: &mut CnnEmbedder<T>,
    annc: &mut Annc<T>,
    split: &CorpusSplit,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate(1)?;
    if split.train.is_empty() {
        return Err(TrainError::NoData);
    }
    let start = Instant::now();
    let mut report = TrainReport::new("annc");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dev = classification_examples(&split.dev, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD5));
    let mut opt = optimizer::<T>(cfg);
    let mut stopper = EarlyStopper::new(cfg.patience, false, cfg.min_rel_improvement);
    for epoch in 0..cfg.max_epochs {
        let mut examples = classification_examples(&split.train, &mut rng);
        examples.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let (_, loss) = annc_forward(&mut g, cnn, annc, batch)?;
            sum += step(&g, loss, &mut [&mut cnn.params, &mut annc.params], &mut opt, cfg.clip_norm)?
                * batch.len() as f64;
        }
        let train_loss = sum / examples.len() as f64;
        if !finite_or_diverged(train_loss, &mut report) {
            break;
        }
        let (dev_loss, dev_acc) = if dev.is_empty() { (train_loss, f64::NAN) } else { evaluate_annc(cnn, annc, &dev)? };
        report.epochs.push(EpochLog { epoch, phase: 1, train_loss, dev_loss, dev_metric: Some(dev_acc), lambda: None });
        log::info!("annc epoch {epoch}: train {train_loss:.5} dev {dev_loss:.5} bal.acc {dev_acc:.4}");
        if stopper.observe(epoch, dev_loss, || (cnn.params.clone(), annc.params.clone())) {
            report.stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    if let Some((c, a)) = stopper.snapshot {
        cnn.params = c;
        annc.params = a;
    }
    report.best_epoch = stopper.best_epoch;
    report.final_metrics.insert("dev_loss".into(), stopper.best);
    if !dev.is_empty() {
        let (_, acc) = evaluate_annc(cnn, annc, &dev)?;
        report.final_metrics.insert("dev_balanced_accuracy".into(), acc);
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Regression equations: the eight valid forms of every quadruple.
fn regression_examples(quads: &[AnalogyQuadruple]) -> Vec<AnalogyQuadruple> {
    quads.iter().flat_map(augment_for_regression).collect()
}

fn annr_loss<T: Scalar>(
    g: &mut Graph<T>,
    annr: &Annr<T>,
    [a, b, c, d]: [Var; 4],
    perm: &[usize],
) -> Result<(Var, Var), NnError> {
    let x = annr.predict_batch(g, a, b, c)?;
    Ok((x, loss_annr(g, d, x, perm)?))
}

fn cnn_annr_batch<T: Scalar>(
    g: &mut Graph<T>,
    cnn: &CnnEmbedder<T>,
    annr: &Annr<T>,
    batch: &[AnalogyQuadruple],
    perm: &[usize],
) -> Result<Var, NnError> {
    let idx = index_words(batch);
    let table = cnn.embed_batch(g, &idx.words)?;
    let vars = gather4(g, table, &idx)?;
    Ok(annr_loss(g, annr, vars, perm)?.1)
}

/// Mean ANNr loss over `examples`, with shuffle partners drawn from a fixed
/// seed so that epochs are comparable.
fn dev_annr_loss<T: Scalar>(
    cnn: &CnnEmbedder<T>,
    annr: &Annr<T>,
    examples: &[AnalogyQuadruple],
    batch_size: usize,
    seed: u64,
) -> Result<f64, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut n) = (0.0, 0usize);
    for chunk in examples.chunks(batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let perm = shuffle_permutation(chunk.len(), &mut rng);
        let mut g = Graph::new();
        let loss = cnn_annr_batch(&mut g, cnn, annr, chunk, &perm)?;
        total += g.scalar(loss).as_f64() * chunk.len() as f64;
        n += chunk.len();
    }
    Ok(if n == 0 { f64::NAN } else { total / n as f64 })
}

/// Two phases: ANNr alone on frozen embeddings until the dev loss stops
/// improving, then embedder and ANNr jointly. At most `max_epochs` in total.
pub fn train_cnn_annr<T: Scalar>(
    cnn: &mut CnnEmbedder<T>,
    annr: &mut Annr<T>,
    split: &CorpusSplit,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate(2)?;
    let train = regression_examples(&split.train);
    if train.len() < 2 {
        return Err(TrainError::NoData);
    }
    let dev = regression_examples(&split.dev);
    let start = Instant::now();
    let mut report = TrainReport::new("cnn_annr");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dev_seed = cfg.seed ^ 0xA22;
    let mut epoch = 0;
    'phases: for phase in [1u8, 2] {
        let frozen = phase == 1;
        cnn.params.set_trainable(!frozen);
        let patience = if frozen { cfg.phase1_patience } else { cfg.patience };
        let mut stopper = EarlyStopper::new(patience, false, cfg.min_rel_improvement);
        let mut opt = optimizer::<T>(cfg);
        // Frozen embeddings do not change: compute them once.
        let table: Option<(HashMap<String, usize>, Vec<T>)> = if frozen {
            let words: Vec<String> = {
                let mut w: Vec<String> = train.iter().chain(&dev).flat_map(|q| q.words().map(String::from)).collect();
                w.sort();
                w.dedup();
                w
            };
            let mut g = Graph::new();
            let e = cnn.embed_batch(&mut g, &words)?;
            let pos = words.into_iter().enumerate().map(|(i, w)| (w, i)).collect();
            Some((pos, g.value(e).to_vec()))
        } else {
            None
        };
        let n = cnn.output_dim();
        while epoch < cfg.max_epochs {
            let mut order = train.clone();
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            let mut seen = 0;
            for batch in order.chunks(cfg.batch_size) {
                if batch.len() < 2 {
                    continue;
                }
                let perm = shuffle_permutation(batch.len(), &mut rng);
                let mut g = Graph::new();
                let loss = match &table {
                    Some((pos, values)) => {
                        let vars: Vec<Var> = (0..4)
                            .map(|k| {
                                let data = batch
                                    .iter()
                                    .flat_map(|q| {
                                        let r = pos[q.words()[k]];
                                        values[r * n..(r + 1) * n].iter().copied()
                                    })
                                    .collect();
                                g.input(batch.len(), n, data)
                            })
                            .collect::<Result<_, _>>()?;
                        annr_loss(&mut g, annr, [vars[0], vars[1], vars[2], vars[3]], &perm)?.1
                    }
                    None => cnn_annr_batch(&mut g, cnn, annr, batch, &perm)?,
                };
                let stores: &mut [&mut ParamStore<T>] = if frozen {
                    &mut [&mut annr.params]
                } else {
                    &mut [&mut cnn.params, &mut annr.params]
                };
                sum += step(&g, loss, stores, &mut opt, cfg.clip_norm)? * batch.len() as f64;
                seen += batch.len();
            }
            let train_loss = sum / seen.max(1) as f64;
            if !finite_or_diverged(train_loss, &mut report) {
                if let Some((c, a)) = stopper.snapshot.take() {
                    cnn.params = c;
                    annr.params = a;
                }
                break 'phases;
            }
            let dev_loss = if dev.len() >= 2 {
                dev_annr_loss(cnn, annr, &dev, cfg.batch_size, dev_seed)?
            } else {
                train_loss
            };
            report.epochs.push(EpochLog { epoch, phase, train_loss, dev_loss, dev_metric: None, lambda: None });
            log::info!("cnn+annr phase {phase} epoch {epoch}: train {train_loss:.5} dev {dev_loss:.5}");
            epoch += 1;
            if stopper.observe(epoch - 1, dev_loss, || (cnn.params.clone(), annr.params.clone())) {
                report.stop_reason = StopReason::EarlyStopping;
                break;
            }
            report.stop_reason = StopReason::MaxEpochs;
        }
        if let Some((c, a)) = stopper.snapshot {
            cnn.params = c;
            annr.params = a;
            report.best_epoch = stopper.best_epoch;
            report.final_metrics.insert(format!("phase{phase}_dev_loss"), stopper.best);
        }
    }
    cnn.params.set_trainable(true);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Fraction of `words` reproduced exactly by encode-then-decode.
pub fn round_trip_accuracy<T: Scalar, S: AsRef<str>>(ae: &AutoEncoder<T>, words: &[S]) -> Result<f64, NnError> {
    if words.is_empty() {
        return Ok(f64::NAN);
    }
    let decoded = ae.round_trip(words)?;
    let hits = decoded.iter().zip(words).filter(|(d, w)| !d.truncated && d.word == w.as_ref()).count();
    Ok(hits as f64 / words.len() as f64)
}

fn ae_loss<T: Scalar, S: AsRef<str>>(g: &mut Graph<T>, ae: &AutoEncoder<T>, words: &[S]) -> Result<Var, NnError> {
    let e = ae.encode_batch(g, words)?;
    ae.reconstruction_loss(g, e, words)
}

/// Autoencoder pre-training with teacher forcing; early stopping on dev
/// round-trip word accuracy.
pub fn pretrain_ae<T: Scalar>(
    ae: &mut AutoEncoder<T>,
    train: &[String],
    dev: &[String],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate(1)?;
    if train.is_empty() {
        return Err(TrainError::NoData);
    }
    let start = Instant::now();
    let mut report = TrainReport::new("ae");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = optimizer::<T>(cfg);
    let mut stopper = EarlyStopper::new(cfg.patience, true, 0.0);
    let dev_set: &[String] = if dev.is_empty() { train } else { dev };
    for epoch in 0..cfg.max_epochs {
        let mut order = train.to_vec();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let loss = ae_loss(&mut g, ae, batch)?;
            sum += step(&g, loss, &mut [&mut ae.params], &mut opt, cfg.clip_norm)? * batch.len() as f64;
        }
        let train_loss = sum / order.len() as f64;
        if !finite_or_diverged(train_loss, &mut report) {
            break;
        }
        let mut dev_loss = 0.0;
        for chunk in dev_set.chunks(512) {
            let mut g = Graph::new();
            let l = ae_loss(&mut g, ae, chunk)?;
            dev_loss += g.scalar(l).as_f64() * chunk.len() as f64;
        }
        dev_loss /= dev_set.len() as f64;
        let acc = round_trip_accuracy(ae, dev_set)?;
        report.epochs.push(EpochLog { epoch, phase: 1, train_loss, dev_loss, dev_metric: Some(acc), lambda: None });
        log::info!("ae epoch {epoch}: train {train_loss:.5} dev {dev_loss:.5} acc {acc:.4}");
        // Accuracy plateaus at 1; ties are broken by lower dev loss.
        let score = acc - 1e-6 * dev_loss.min(1e5);
        if stopper.observe(epoch, score, || ae.params.clone()) {
            report.stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    if let Some(p) = stopper.snapshot {
        ae.params = p;
    }
    report.best_epoch = stopper.best_epoch;
    report.final_metrics.insert("dev_round_trip_accuracy".into(), round_trip_accuracy(ae, dev_set)?);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn ae_annr_batch<T: Scalar>(
    g: &mut Graph<T>,
    ae: &AutoEncoder<T>,
    annr: &Annr<T>,
    batch: &[AnalogyQuadruple],
    perm: &[usize],
    lambda: f64,
) -> Result<Var, NnError> {
    let idx = index_words(batch);
    let table = ae.encode_batch(g, &idx.words)?;
    let vars = gather4(g, table, &idx)?;
    let (x, l_annr) = annr_loss(g, annr, vars, perm)?;
    let gold: Vec<&str> = batch.iter().map(|q| q.d.as_str()).collect();
    let l_ae = ae.reconstruction_loss(g, x, &gold)?;
    convex_combination(g, l_annr, l_ae, lambda)
}

/// Fraction of equations whose decoded ANNr prediction equals the gold word.
pub fn generation_accuracy<T: Scalar>(
    ae: &AutoEncoder<T>,
    annr: &Annr<T>,
    quads: &[AnalogyQuadruple],
) -> Result<f64, NnError> {
    if quads.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0;
    for chunk in quads.chunks(256) {
        let idx = index_words(chunk);
        let e = ae.encode_words(&idx.words)?;
        let rows = |k: usize| idx.slots[k].iter().map(|&i| e[i].clone()).collect::<Vec<_>>();
        let x = annr.predict_rows(&rows(0), &rows(1), &rows(2))?;
        let longest = chunk.iter().flat_map(|q| q.words()).map(|w| w.chars().count()).max().unwrap_or(0);
        let decoded = ae.decode_greedy(&x, ae.config.max_decode_len.max(longest + 5))?;
        hits += decoded.iter().zip(chunk).filter(|(d, q)| !d.truncated && d.word == q.d).count();
    }
    Ok(hits as f64 / quads.len() as f64)
}

/// Joint AE+ANNr training on `(1 - λ) L_ANNr + λ L_AE` with `λ` from the
/// epoch schedule; early stopping on dev loss.
pub fn train_ae_annr<T: Scalar>(
    ae: &mut AutoEncoder<T>,
    annr: &mut Annr<T>,
    split: &CorpusSplit,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate(2)?;
    if annr.config.n != ae.embedding_dim() {
        return Err(TrainError::Config(format!(
            "annr dimension {} does not match the autoencoder's {}",
            annr.config.n,
            ae.embedding_dim()
        )));
    }
    let train = regression_examples(&split.train);
    if train.len() < 2 {
        return Err(TrainError::NoData);
    }
    let dev = regression_examples(&split.dev);
    let start = Instant::now();
    let mut report = TrainReport::new("ae_annr");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = optimizer::<T>(cfg);
    let mut stopper = EarlyStopper::new(cfg.patience, false, cfg.min_rel_improvement);
    for epoch in 0..cfg.max_epochs {
        let lambda = cfg.lambda.at(epoch);
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let (mut sum, mut seen) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let perm = shuffle_permutation(batch.len(), &mut rng);
            let mut g = Graph::new();
            let loss = ae_annr_batch(&mut g, ae, annr, batch, &perm, lambda)?;
            sum += step(&g, loss, &mut [&mut ae.params, &mut annr.params], &mut opt, cfg.clip_norm)?
                * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = sum / seen.max(1) as f64;
        if !finite_or_diverged(train_loss, &mut report) {
            break;
        }
        // Dev loss at the final weighting so that epochs are comparable.
        let dev_lambda = cfg.lambda.max;
        let mut dev_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xAEA);
        let (mut dev_sum, mut dev_n) = (0.0, 0);
        for chunk in dev.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let perm = shuffle_permutation(chunk.len(), &mut dev_rng);
            let mut g = Graph::new();
            let l = ae_annr_batch(&mut g, ae, annr, chunk, &perm, dev_lambda)?;
            dev_sum += g.scalar(l).as_f64() * chunk.len() as f64;
            dev_n += chunk.len();
        }
        let dev_loss = if dev_n == 0 { train_loss } else { dev_sum / dev_n as f64 };
        report.epochs.push(EpochLog { epoch, phase: 1, train_loss, dev_loss, dev_metric: None, lambda: Some(lambda) });
        log::info!("ae+annr epoch {epoch} (λ={lambda:.2}): train {train_loss:.5} dev {dev_loss:.5}");
        if stopper.observe(epoch, dev_loss, || (ae.params.clone(), annr.params.clone())) {
            report.stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    if let Some((a, r)) = stopper.snapshot {
        ae.params = a;
        annr.params = r;
    }
    report.best_epoch = stopper.best_epoch;
    report.final_metrics.insert("dev_loss".into(), stopper.best);
    report.final_metrics.insert("dev_generation_accuracy".into(), generation_accuracy(ae, annr, &split.dev)?);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
