use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_layout, rows_f64};
use crate::data::Vocabulary;
use crate::nn::{Graph, NnError, ParamStore, Scalar, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnEmbedderConfig {
    pub char_emb_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
}

impl Default for CnnEmbedderConfig {
    fn default() -> Self {
        Self {
            char_emb_dim: 64,
            filter_widths: vec![2, 3, 4, 5, 6],
            filters_per_width: 16,
        }
    }
}

impl CnnEmbedderConfig {
    pub fn output_dim(&self) -> usize {
        self.filters_per_width * self.filter_widths.len()
    }

    /// Words shorter than this are padded.
    pub fn min_len(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }
}

/// Character embeddings, one convolution per filter width, max-over-time
/// pooling and concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnEmbedder<T> {
    pub config: CnnEmbedderConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
}

const EMB: &str = "cnn.emb";

fn filter_name(width: usize) -> String {
    format!("cnn.conv{width}")
}

impl<T: Scalar> CnnEmbedder<T> {
    pub fn new<R: Rng + ?Sized>(
        config: CnnEmbedderConfig,
        vocab: Vocabulary,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut params = ParamStore::new();
        let m = config.char_emb_dim;
        let v = vocab.len();
        params.add(EMB, Tensor::uniform(&[v, m], 1.0 / (m as f64).sqrt(), rng))?;
        for &w in &config.filter_widths {
            let fan_in = w * m;
            params.add(
                filter_name(w),
                Tensor::uniform(&[fan_in, config.filters_per_width], 1.0 / (fan_in as f64).sqrt(), rng),
            )?;
        }
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn from_params(
        config: CnnEmbedderConfig,
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

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Embeds a batch of words as a `words x output_dim` node.
    pub fn embed_batch<S: AsRef<str>>(&self, g: &mut Graph<T>, words: &[S]) -> Result<Var, NnError> {
        if words.is_empty() {
            return Err(NnError::Empty("cnn_embed"));
        }
        let min_len = self.config.min_len();
        let mut ids = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        for w in words {
            let mut enc = self.vocab.encode_word(w.as_ref());
            if enc.is_empty() {
                return Err(NnError::Empty("cnn_embed"));
            }
            while enc.len() < min_len {
                enc.push(Vocabulary::PAD);
            }
            spans.push((ids.len(), enc.len()));
            ids.extend(enc);
        }
        let table = g.param(self.params.get(EMB)?);
        let chars = g.gather_rows(table, &ids)?;
        let mut pooled = Vec::with_capacity(self.config.filter_widths.len());
        for &w in &self.config.filter_widths {
            let filters = g.param(self.params.get(&filter_name(w))?);
            let windows = g.windows(chars, &spans, w, 1)?;
            let conv = g.matmul(windows, filters)?;
            let mut start = 0;
            let segs: Vec<(usize, usize)> = spans
                .iter()
                .map(|&(_, len)| {
                    let n = len - w + 1;
                    let s = (start, n);
                    start += n;
                    s
                })
                .collect();
            pooled.push(g.segment_max(conv, &segs)?);
        }
        g.concat_cols(&pooled)
    }

    /// Embeddings of many words, computed in chunks, as `f64` vectors.
    pub fn embed_words<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<Vec<f64>>, NnError> {
        let mut out = Vec::with_capacity(words.len());
        for chunk in words.chunks(256) {
            let mut g = Graph::new();
            let e = self.embed_batch(&mut g, chunk)?;
            out.extend(rows_f64(g.value(e), self.output_dim()));
        }
        Ok(out)
    }

    pub fn embed(&self, word: &str) -> Result<Vec<f64>, NnError> {
        Ok(self.embed_words(&[word])?.remove(0))
    }
}
