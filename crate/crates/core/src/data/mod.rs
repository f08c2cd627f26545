//! Inflection data ingestion, analogy corpus assembly and deterministic splits.
//!
//! Source files hold `(lemma, features, form)` triples. Two triples sharing the
//! same feature tag describe the same morphological transformation and combine
//! into an analogy `lemma1:form1::lemma2:form2`.

mod corpus;
mod manifest;
mod parse;
pub mod toy;
mod vocab;

pub use corpus::{
    build_analogy_corpus, build_word_dataset, dedup_analogies, pairwise_disjoint, split_corpus, word_pool,
    CorpusSplit, SplitSizes, WordDataset, WordSplitSizes,
};
pub use manifest::{
    file_checksum, read_quadruples_tsv, read_words, write_quadruples_tsv, write_words,
    SplitCounts, SplitManifest,
};
pub use parse::{parse_inflection_file, ColumnOrder, ParseOutcome, ParseWarning};
pub use vocab::{Symbol, Vocabulary};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("corpus has {available} analogies, at least {required} are needed for the development set plus one")]
    CorpusTooSmall { available: usize, required: usize },
    #[error("only {available} distinct words, at least {required} are needed to build a word dataset")]
    TooFewWords { available: usize, required: usize },
    #[error("invalid vocabulary file: {0}")]
    BadVocabulary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A `(lemma, features, inflected form)` record from an inflection file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InflectionTriple {
    pub lemma: String,
    pub features: String,
    pub inflected: String,
}

impl InflectionTriple {
    pub fn new(
        lemma: impl Into<String>,
        features: impl Into<String>,
        inflected: impl Into<String>,
    ) -> Self {
        Self {
            lemma: lemma.into(),
            features: features.into(),
            inflected: inflected.into(),
        }
    }
}

/// Four words standing in proportion, `a:b::c:d`, tagged with the feature
/// string that the pairs `(a, b)` and `(c, d)` share.
///
/// The same type represents an analogical equation `a:b::c:x`; `d` is then the
/// gold solution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnalogyQuadruple {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    pub feature: String,
}

impl AnalogyQuadruple {
    pub fn new(
        a: impl Into<String>,
        b: impl Into<String>,
        c: impl Into<String>,
        d: impl Into<String>,
    ) -> Self {
        Self::with_feature(a, b, c, d, "")
    }

    pub fn with_feature(
        a: impl Into<String>,
        b: impl Into<String>,
        c: impl Into<String>,
        d: impl Into<String>,
        feature: impl Into<String>,
    ) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
            feature: feature.into(),
        }
    }

    pub fn words(&self) -> [&str; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    /// Builds a quadruple from four words, keeping this quadruple's feature tag.
    pub fn rearranged(&self, words: [&str; 4]) -> Self {
        Self::with_feature(words[0], words[1], words[2], words[3], self.feature.clone())
    }

    /// `a:b::a:b`.
    pub fn is_identity_form(&self) -> bool {
        self.a == self.c && self.b == self.d
    }

    /// Word-only serialization used for string-level comparisons.
    pub fn serialized(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.a, self.b, self.c, self.d)
    }

    /// `c:d::a:b`.
    pub fn symmetric(&self) -> Self {
        self.rearranged([&self.c, &self.d, &self.a, &self.b])
    }
}

impl fmt::Display for AnalogyQuadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}::{}:{}", self.a, self.b, self.c, self.d)
    }
}
