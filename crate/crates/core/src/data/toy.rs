//! A small synthetic agglutinative language used for smoke tests, demos and
//! the desk-scale end-to-end checks.
//!
//! Stems are random consonant-vowel syllable strings. Every stem takes each
//! of five suffixes; suffix vowels harmonize with the last vowel of the stem
//! (back `a o u` versus front `e i`).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::InflectionTriple;

const CONSONANTS: &[char] = &['b', 'f', 'g', 'k', 'm', 'p', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// `(feature tag, back-harmony suffix, front-harmony suffix)`.
pub const TRANSFORMATIONS: [(&str, &str, &str); 5] = [
    ("N;PL", "lar", "ler"),
    ("N;GEN", "nun", "nin"),
    ("N;LOC", "da", "de"),
    ("N;ABL", "dan", "den"),
    ("N;DIM", "cuk", "cik"),
];

fn is_front(stem: &str) -> bool {
    stem.chars()
        .rev()
        .find(|c| VOWELS.contains(c))
        .is_some_and(|v| v == 'e' || v == 'i')
}

pub fn inflect(stem: &str, transformation: usize) -> String {
    let (_, back, front) = TRANSFORMATIONS[transformation];
    format!("{stem}{}", if is_front(stem) { front } else { back })
}

fn random_stem(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(*CONSONANTS.choose(rng).unwrap());
        s.push(*VOWELS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.3) {
        s.push(*CONSONANTS.choose(rng).unwrap());
    }
    s
}

/// Generates `n_stems` stems inflected with all five transformations.
/// Every word (stem or form) is distinct.
pub fn generate(seed: u64, n_stems: usize) -> Vec<InflectionTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: HashSet<String> = HashSet::new();
    let mut stems = Vec::with_capacity(n_stems);
    while stems.len() < n_stems {
        let stem = random_stem(&mut rng);
        let forms: Vec<String> = (0..TRANSFORMATIONS.len()).map(|t| inflect(&stem, t)).collect();
        if words.contains(&stem) || forms.iter().any(|f| words.contains(f)) {
            continue;
        }
        words.insert(stem.clone());
        words.extend(forms);
        stems.push(stem);
    }
    let mut triples = Vec::with_capacity(n_stems * TRANSFORMATIONS.len());
    for (t, (tag, _, _)) in TRANSFORMATIONS.iter().enumerate() {
        for stem in &stems {
            triples.push(InflectionTriple::new(stem.clone(), *tag, inflect(stem, t)));
        }
    }
    triples
}

/// Renders triples in the `lemma<TAB>features<TAB>form` layout.
pub fn to_tsv(triples: &[InflectionTriple]) -> String {
    triples
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.lemma, t.features, t.inflected))
        .collect()
}
