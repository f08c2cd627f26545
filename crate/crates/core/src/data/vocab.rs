use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DataError;

/// A vocabulary entry: a data character or one of the reserved markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Pad,
    Unk,
    /// Beginning of word.
    Bow,
    /// End of word.
    Eow,
    Char(char),
}

/// Bidirectional character/index map.
///
/// Indices 0..4 are PAD, UNK, BOW and EOW; data characters follow in sorted
/// order, so reloading the same character set reproduces the same indices.
/// Characters are Unicode scalar values, no normalization is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const BOW: usize = 2;
    pub const EOW: usize = 3;
    const RESERVED: usize = 4;

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let sorted: BTreeSet<char> = chars.into_iter().collect();
        let chars: Vec<char> = sorted.into_iter().collect();
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + Self::RESERVED))
            .collect();
        Self { chars, index }
    }

    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut set = BTreeSet::new();
        for w in words {
            set.extend(w.as_ref().chars());
        }
        Self::from_chars(set)
    }

    /// Total number of indices, reserved entries included.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Index of a character, UNK when it is outside the vocabulary.
    pub fn encode_char(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn encode_symbol(&self, s: Symbol) -> usize {
        match s {
            Symbol::Pad => Self::PAD,
            Symbol::Unk => Self::UNK,
            Symbol::Bow => Self::BOW,
            Symbol::Eow => Self::EOW,
            Symbol::Char(c) => self.encode_char(c),
        }
    }

    pub fn decode(&self, index: usize) -> Option<Symbol> {
        match index {
            Self::PAD => Some(Symbol::Pad),
            Self::UNK => Some(Symbol::Unk),
            Self::BOW => Some(Symbol::Bow),
            Self::EOW => Some(Symbol::Eow),
            i => self.chars.get(i - Self::RESERVED).copied().map(Symbol::Char),
        }
    }

    pub fn encode_word(&self, word: &str) -> Vec<usize> {
        word.chars().map(|c| self.encode_char(c)).collect()
    }

    /// Renders indices back to text. Reserved markers other than UNK are
    /// dropped; UNK renders as U+FFFD.
    pub fn decode_word(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| match self.decode(i) {
                Some(Symbol::Char(c)) => Some(c),
                Some(Symbol::Unk) => Some(char::REPLACEMENT_CHARACTER),
                _ => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    chars: String,
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabFile {
            chars: self.chars.iter().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = VocabFile::deserialize(d)?;
        let vocab = Vocabulary::from_chars(file.chars.chars());
        if vocab.chars.len() != file.chars.chars().count() {
            return Err(serde::de::Error::custom(
                DataError::BadVocabulary("duplicate characters".into()).to_string(),
            ));
        }
        Ok(vocab)
    }
}
