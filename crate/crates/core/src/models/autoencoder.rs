use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_layout, rows_f64};
use crate::data::Vocabulary;
use crate::nn::layers::{init_dense, lstm_step, lstm_unroll, zeros, Dense, Lstm, LstmVars};
use crate::nn::{Graph, NnError, ParamStore, Scalar, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoEncoderConfig {
    /// Hidden size of each encoder direction; the embedding has `4 * hidden`
    /// components and the decoder `2 * hidden` units.
    pub hidden: usize,
    /// Decoding stops after this many characters unless EOW comes first.
    pub max_decode_len: usize,
}

impl Default for AutoEncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            max_decode_len: 30,
        }
    }
}

/// Result of greedy decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub word: String,
    /// Set when the length cap was reached before EOW.
    pub truncated: bool,
}

/// Bidirectional LSTM encoder over one-hot characters and an LSTM decoder
/// started from the split encoder state.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder<T> {
    pub config: AutoEncoderConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
}

struct Parts {
    fwd: Lstm,
    bwd: Lstm,
    dec: Lstm,
    out: Dense,
}

fn parts(config: &AutoEncoderConfig, vocab: &Vocabulary) -> Parts {
    let (v, h) = (vocab.len(), config.hidden);
    Parts {
        fwd: Lstm::new("ae.enc_f", v, h),
        bwd: Lstm::new("ae.enc_b", v, h),
        dec: Lstm::new("ae.dec", v, 2 * h),
        out: Dense::new("ae.out"),
    }
}

/// Decoder-side parameters placed on a graph.
pub(crate) struct DecoderVars {
    lstm: LstmVars,
    out_w: Var,
    out_b: Var,
}

impl<T: Scalar> AutoEncoder<T> {
    pub fn new<R: Rng + ?Sized>(
        config: AutoEncoderConfig,
        vocab: Vocabulary,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut params = ParamStore::new();
        let (v, h) = (vocab.len(), config.hidden);
        Lstm::init("ae.enc_f", v, h, &mut params, rng)?;
        Lstm::init("ae.enc_b", v, h, &mut params, rng)?;
        Lstm::init("ae.dec", v, 2 * h, &mut params, rng)?;
        init_dense(&mut params, "ae.out", 2 * h, v, rng)?;
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn from_params(
        config: AutoEncoderConfig,
        vocab: Vocabulary,
        params: ParamStore<T>,
    ) -> Result<Self, NnError> {
        let template = Self::new(config.clone(), vocab.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        check_layout(&template.params, &params)?;
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        4 * self.config.hidden
    }

    /// Encodes a batch of non-empty words into a `words x 4h` node holding
    /// `(h_f, h_b, c_f, c_b)` per row.
    pub fn encode_batch<S: AsRef<str>>(&self, g: &mut Graph<T>, words: &[S]) -> Result<Var, NnError> {
        let p = parts(&self.config, &self.vocab);
        let ids: Vec<Vec<usize>> = words.iter().map(|w| self.vocab.encode_word(w.as_ref())).collect();
        if ids.is_empty() || ids.iter().any(Vec::is_empty) {
            return Err(NnError::Empty("ae_encode"));
        }
        let b = ids.len();
        let max_len = ids.iter().map(Vec::len).max().unwrap();
        let masks: Vec<Vec<bool>> = (0..max_len)
            .map(|t| ids.iter().map(|w| t < w.len()).collect())
            .collect();
        let h = self.config.hidden;
        let fwd = p.fwd.vars(g, &self.params)?;
        let bwd = p.bwd.vars(g, &self.params)?;

        // One-hot input times W_ih is a row lookup.
        let step_ids = |t: usize, reverse: bool| -> Vec<usize> {
            ids.iter()
                .map(|w| match (t < w.len(), reverse) {
                    (false, _) => Vocabulary::PAD,
                    (true, false) => w[t],
                    (true, true) => w[w.len() - 1 - t],
                })
                .collect()
        };
        let mut xf = Vec::with_capacity(max_len);
        let mut xb = Vec::with_capacity(max_len);
        for t in 0..max_len {
            xf.push(g.gather_rows(fwd.w_ih, &step_ids(t, false))?);
            xb.push(g.gather_rows(bwd.w_ih, &step_ids(t, true))?);
        }
        let (z_h, z_c) = (zeros(g, b, h), zeros(g, b, h));
        let (hf, cf) = lstm_unroll(g, &fwd, &xf, Some(&masks), z_h, z_c)?;
        let (hb, cb) = lstm_unroll(g, &bwd, &xb, Some(&masks), z_h, z_c)?;
        g.concat_cols(&[hf, hb, cf, cb])
    }

    pub(crate) fn decoder_vars(&self, g: &mut Graph<T>) -> Result<DecoderVars, NnError> {
        let p = parts(&self.config, &self.vocab);
        Ok(DecoderVars {
            lstm: p.dec.vars(g, &self.params)?,
            out_w: g.param(self.params.get(&p.out.w)?),
            out_b: g.param(self.params.get(&p.out.b)?),
        })
    }

    fn initial_state(&self, g: &mut Graph<T>, emb: Var) -> Result<(Var, Var), NnError> {
        let (rows, cols) = g.dims(emb);
        if cols != self.embedding_dim() {
            return Err(NnError::shape(
                "ae_decode",
                format!("{rows}x{cols} embedding, expected {} columns", self.embedding_dim()),
            ));
        }
        let two_h = 2 * self.config.hidden;
        Ok((g.slice_cols(emb, 0, two_h)?, g.slice_cols(emb, two_h, two_h)?))
    }

    /// Teacher-forced decoding of `targets` from embeddings `emb`. Returns the
    /// `sum(|target|+1) x V` distributions, their gold indices (the word
    /// followed by EOW) and per-row loss weights `1/((|target|+1) * words)`.
    pub fn teacher_forcing<S: AsRef<str>>(
        &self,
        g: &mut Graph<T>,
        emb: Var,
        targets: &[S],
    ) -> Result<(Var, Vec<usize>, Vec<T>), NnError> {
        let b = targets.len();
        if g.dims(emb).0 != b || b == 0 {
            return Err(NnError::shape(
                "teacher_forcing",
                format!("{} embeddings for {b} targets", g.dims(emb).0),
            ));
        }
        let ids: Vec<Vec<usize>> = targets.iter().map(|w| self.vocab.encode_word(w.as_ref())).collect();
        let max_len = ids.iter().map(Vec::len).max().unwrap();
        let dv = self.decoder_vars(g)?;
        let (mut h, mut c) = self.initial_state(g, emb)?;
        let mut states = Vec::with_capacity(max_len + 1);
        for t in 0..=max_len {
            let input: Vec<usize> = ids
                .iter()
                .map(|w| match t {
                    0 => Vocabulary::BOW,
                    t if t <= w.len() => w[t - 1],
                    _ => Vocabulary::PAD,
                })
                .collect();
            let xw = g.gather_rows(dv.lstm.w_ih, &input)?;
            (h, c) = lstm_step(g, &dv.lstm, xw, h, c)?;
            states.push(h);
        }
        let all = g.concat_rows(&states)?;
        let mut rows = Vec::new();
        let mut gold = Vec::new();
        let mut weights = Vec::new();
        for (r, w) in ids.iter().enumerate() {
            let wt = T::one() / T::from_f64(((w.len() + 1) * b) as f64);
            for t in 0..=w.len() {
                rows.push(t * b + r);
                gold.push(if t < w.len() { w[t] } else { Vocabulary::EOW });
                weights.push(wt);
            }
        }
        let picked = g.gather_rows(all, &rows)?;
        let logits = g.affine(picked, dv.out_w, dv.out_b)?;
        Ok((g.softmax(logits), gold, weights))
    }

    /// Mean over words of the per-position cross-entropy of reconstructing
    /// `targets` from `emb`.
    pub fn reconstruction_loss<S: AsRef<str>>(
        &self,
        g: &mut Graph<T>,
        emb: Var,
        targets: &[S],
    ) -> Result<Var, NnError> {
        let (probs, gold, weights) = self.teacher_forcing(g, emb, targets)?;
        g.weighted_nll(probs, &gold, &weights)
    }

    /// Greedy decoding of each embedding row, feeding back the most likely
    /// character until EOW or `max_len` characters.
    pub fn decode_greedy(&self, embeddings: &[Vec<f64>], max_len: usize) -> Result<Vec<Decoded>, NnError> {
        let b = embeddings.len();
        if b == 0 {
            return Ok(Vec::new());
        }
        let dim = self.embedding_dim();
        if embeddings.iter().any(|e| e.len() != dim) {
            return Err(NnError::shape("ae_decode", format!("embedding dimension must be {dim}")));
        }
        let mut g = Graph::new();
        let flat = embeddings.iter().flatten().map(|&v| T::from_f64(v)).collect();
        let emb = g.input(b, dim, flat)?;
        let dv = self.decoder_vars(&mut g)?;
        let (mut h, mut c) = self.initial_state(&mut g, emb)?;
        let v = self.vocab.len();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); b];
        let mut done = vec![None::<bool>; b];
        let mut input = vec![Vocabulary::BOW; b];
        for _ in 0..=max_len {
            let xw = g.gather_rows(dv.lstm.w_ih, &input)?;
            (h, c) = lstm_step(&mut g, &dv.lstm, xw, h, c)?;
            let logits = g.affine(h, dv.out_w, dv.out_b)?;
            let scores = g.value(logits);
            for r in 0..b {
                if done[r].is_some() {
                    continue;
                }
                let row = &scores[r * v..(r + 1) * v];
                let best = argmax(row);
                if best == Vocabulary::EOW {
                    done[r] = Some(false);
                } else if out[r].len() == max_len {
                    done[r] = Some(true);
                } else {
                    out[r].push(best);
                    input[r] = best;
                }
            }
            if done.iter().all(Option::is_some) {
                break;
            }
        }
        Ok(out
            .iter()
            .zip(done)
            .map(|(ids, d)| Decoded {
                word: self.vocab.decode_word(ids),
                truncated: d.unwrap_or(true),
            })
            .collect())
    }

    /// Embeddings of many words as `f64` vectors.
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<Vec<f64>>, NnError> {
        let mut out = Vec::with_capacity(words.len());
        for chunk in words.chunks(256) {
            let mut g = Graph::new();
            let e = self.encode_batch(&mut g, chunk)?;
            out.extend(rows_f64(g.value(e), self.embedding_dim()));
        }
        Ok(out)
    }

    /// Encode then greedily decode.
    pub fn round_trip<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<Decoded>, NnError> {
        let mut out = Vec::with_capacity(words.len());
        for chunk in words.chunks(256) {
            let emb = self.encode_words(chunk)?;
            let longest = chunk.iter().map(|w| w.as_ref().chars().count()).max().unwrap_or(0);
            out.extend(self.decode_greedy(&emb, self.config.max_decode_len.max(longest + 5))?);
        }
        Ok(out)
    }
}

/// Index of the largest value, first on ties.
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
