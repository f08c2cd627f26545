use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnalogyQuadruple, DataError, InflectionTriple, Vocabulary};

/// Combines every unordered pair of triples with an identical feature tag into
/// `lemma1:form1::lemma2:form2`. A triple paired with itself yields the
/// identity form `lemma:form::lemma:form`.
///
/// Tags are visited in order of first appearance, pairs in file order.
pub fn build_analogy_corpus(triples: &[InflectionTriple]) -> Vec<AnalogyQuadruple> {
    let mut tag_order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&InflectionTriple>> = HashMap::new();
    for t in triples {
        let group = groups.entry(t.features.as_str()).or_insert_with(|| {
            tag_order.push(t.features.as_str());
            Vec::new()
        });
        group.push(t);
    }

    let mut corpus = Vec::new();
    for tag in tag_order {
        let group = &groups[tag];
        for (i, first) in group.iter().enumerate() {
            for second in &group[i..] {
                corpus.push(AnalogyQuadruple::with_feature(
                    &first.lemma,
                    &first.inflected,
                    &second.lemma,
                    &second.inflected,
                    tag,
                ));
            }
        }
    }
    corpus
}

fn canonical(q: &AnalogyQuadruple) -> AnalogyQuadruple {
    let sym = q.symmetric();
    if sym.serialized() < q.serialized() {
        sym
    } else {
        q.clone()
    }
}

/// Keeps one representative of every `{A:B::C:D, C:D::A:B}` pair: the
/// orientation with the lexicographically smaller serialization. Exact
/// duplicates collapse as well. Output follows first-occurrence order.
pub fn dedup_analogies(corpus: &[AnalogyQuadruple]) -> Vec<AnalogyQuadruple> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<AnalogyQuadruple> = Vec::new();
    for q in corpus {
        let canon = canonical(q);
        let key = canon.serialized();
        match index.get(&key) {
            Some(&pos) => {
                // Same words under several tags: keep the smallest tag.
                if canon.feature < out[pos].feature {
                    out[pos].feature = canon.feature;
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(canon);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub dev: usize,
    pub test: usize,
    pub train_max: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            dev: 500,
            test: 5000,
            train_max: 50000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<AnalogyQuadruple>,
    pub dev: Vec<AnalogyQuadruple>,
    pub test: Vec<AnalogyQuadruple>,
    /// Every word of the source data, analogical or not, sorted.
    pub word_pool: Vec<String>,
    pub seed: u64,
}

/// All lemmas and forms of the source triples, deduplicated and sorted.
pub fn word_pool(triples: &[InflectionTriple]) -> Vec<String> {
    let set: BTreeSet<&str> = triples
        .iter()
        .flat_map(|t| [t.lemma.as_str(), t.inflected.as_str()])
        .collect();
    set.into_iter().map(str::to_owned).collect()
}

/// Draws disjoint dev, test and train samples from the (deduplicated) corpus.
///
/// The development set is filled first, then the test set and the training
/// set are truncated to whatever remains.
pub fn split_corpus(
    corpus: &[AnalogyQuadruple],
    word_pool: Vec<String>,
    seed: u64,
    sizes: SplitSizes,
) -> Result<CorpusSplit, DataError> {
    let corpus = dedup_analogies(corpus);
    if corpus.len() < sizes.dev + 1 {
        return Err(DataError::CorpusTooSmall {
            available: corpus.len(),
            required: sizes.dev + 1,
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let take = |range: std::ops::Range<usize>| -> Vec<AnalogyQuadruple> {
        order[range].iter().map(|&i| corpus[i].clone()).collect()
    };
    let dev_end = sizes.dev;
    let test_end = dev_end + sizes.test.min(corpus.len() - dev_end);
    let train_end = test_end + sizes.train_max.min(corpus.len() - test_end);

    Ok(CorpusSplit {
        dev: take(0..dev_end),
        test: take(dev_end..test_end),
        train: take(test_end..train_end),
        word_pool,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSplitSizes {
    pub train_max: usize,
    pub dev: usize,
    pub test: usize,
    /// Minimum number of distinct words required.
    pub min_words: usize,
}

impl Default for WordSplitSizes {
    fn default() -> Self {
        Self {
            train_max: 40000,
            dev: 500,
            test: 500,
            min_words: 1000,
        }
    }
}

/// Disjoint word lists for autoencoder pre-training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordDataset {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub vocab: Vocabulary,
}

/// Samples disjoint train/dev/test word sets from every word of the source
/// data, including words that occur in no analogy.
pub fn build_word_dataset<S: AsRef<str>>(
    words: &[S],
    seed: u64,
    sizes: WordSplitSizes,
) -> Result<WordDataset, DataError> {
    let distinct: BTreeSet<&str> = words.iter().map(AsRef::as_ref).collect();
    let required = sizes.min_words.max(sizes.dev + sizes.test + 1);
    if distinct.len() < required {
        return Err(DataError::TooFewWords {
            available: distinct.len(),
            required,
        });
    }
    let mut pool: Vec<&str> = distinct.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let owned = |s: &[&str]| s.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let dev = owned(&pool[..sizes.dev]);
    let test = owned(&pool[sizes.dev..sizes.dev + sizes.test]);
    let rest = &pool[sizes.dev + sizes.test..];
    let train = owned(&rest[..sizes.train_max.min(rest.len())]);

    let vocab = Vocabulary::from_words(train.iter().chain(&dev).chain(&test));
    Ok(WordDataset {
        train,
        dev,
        test,
        vocab,
    })
}

/// True when no quadruple appears in more than one of the given sets.
pub fn pairwise_disjoint(sets: &[&[AnalogyQuadruple]]) -> bool {
    let mut seen: HashSet<String> = HashSet::new();
    for set in sets {
        let local: HashSet<String> = set.iter().map(|q| q.serialized()).collect();
        if local.iter().any(|k| seen.contains(k)) {
            return false;
        }
        seen.extend(local);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple(l: &str, f: &str, i: &str) -> InflectionTriple {
        InflectionTriple::new(l, f, i)
    }

    fn synthetic_corpus(n: usize) -> Vec<AnalogyQuadruple> {
        (0..n)
            .map(|i| AnalogyQuadruple::with_feature(format!("a{i}"), format!("b{i}"), "c", "d", "T"))
            .collect()
    }

    #[test]
    fn shared_tag_pairs_combine() {
        let corpus = build_analogy_corpus(&[
            triple("run", "T", "running"),
            triple("dance", "T", "dancing"),
        ]);
        assert!(corpus.contains(&AnalogyQuadruple::with_feature(
            "run", "running", "dance", "dancing", "T"
        )));
        assert_eq!(corpus.len(), 3);
    }

    #[test]
    fn single_triple_yields_identity_form() {
        let corpus = build_analogy_corpus(&[triple("run", "T", "running")]);
        assert_eq!(
            corpus,
            vec![AnalogyQuadruple::with_feature("run", "running", "run", "running", "T")]
        );
        assert!(corpus[0].is_identity_form());
    }

    #[test]
    fn disjoint_tags_only_give_identity_forms() {
        let corpus = build_analogy_corpus(&[triple("run", "T1", "ran"), triple("cat", "T2", "cats")]);
        assert!(corpus.iter().all(AnalogyQuadruple::is_identity_form));
        let cross: Vec<_> = corpus.iter().filter(|q| q.a != q.c).collect();
        assert!(cross.is_empty());
    }

    #[test]
    fn every_pair_shares_its_tag() {
        let triples = vec![
            triple("run", "V;PST", "ran"),
            triple("walk", "V;PST", "walked"),
            triple("cat", "N;PL", "cats"),
            triple("dog", "N;PL", "dogs"),
            triple("walk", "V;PTCP", "walking"),
        ];
        let by_pair: HashMap<(String, String), String> = triples
            .iter()
            .map(|t| ((t.lemma.clone(), t.inflected.clone()), t.features.clone()))
            .collect();
        for q in build_analogy_corpus(&triples) {
            assert_eq!(by_pair[&(q.a.clone(), q.b.clone())], q.feature);
            assert_eq!(by_pair[&(q.c.clone(), q.d.clone())], q.feature);
        }
    }

    #[test]
    fn dedup_keeps_one_of_symmetric_pair() {
        let q = AnalogyQuadruple::new("run", "running", "dance", "dancing");
        let out = dedup_analogies(&[q.clone(), q.symmetric()]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], q.symmetric()); // "dance..." < "run..."
    }

    #[test]
    fn dedup_keeps_identity_forms() {
        let q = AnalogyQuadruple::new("run", "running", "run", "running");
        assert_eq!(dedup_analogies(&[q.clone()]), vec![q]);
        assert!(dedup_analogies(&[]).is_empty());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let corpus = synthetic_corpus(60000);
        let split = split_corpus(&corpus, vec![], 7, SplitSizes::default()).unwrap();
        assert_eq!(split.train.len(), 50000);
        assert_eq!(split.dev.len(), 500);
        assert_eq!(split.test.len(), 5000);
        assert!(pairwise_disjoint(&[&split.train, &split.dev, &split.test]));
    }

    #[test]
    fn split_truncates_small_corpus() {
        let corpus = synthetic_corpus(600);
        let split = split_corpus(&corpus, vec![], 1, SplitSizes::default()).unwrap();
        assert_eq!(split.dev.len(), 500);
        assert_eq!(split.test.len(), 100);
        assert!(split.train.len() <= 100);
        assert!(pairwise_disjoint(&[&split.train, &split.dev, &split.test]));
    }

    #[test]
    fn split_rejects_corpus_smaller_than_dev() {
        let err = split_corpus(&synthetic_corpus(500), vec![], 0, SplitSizes::default())
            .unwrap_err();
        assert!(err.to_string().contains("501"));
    }

    #[test]
    fn split_is_deterministic() {
        let corpus = synthetic_corpus(3000);
        let a = split_corpus(&corpus, vec!["x".into()], 11, SplitSizes::default()).unwrap();
        let b = split_corpus(&corpus, vec!["x".into()], 11, SplitSizes::default()).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = split_corpus(&corpus, vec!["x".into()], 12, SplitSizes::default()).unwrap();
        assert_ne!(a.dev, c.dev);
    }

    #[test]
    fn word_dataset_sizes() {
        let words: Vec<String> = (0..45000).map(|i| format!("w{i}")).collect();
        let ds = build_word_dataset(&words, 3, WordSplitSizes::default()).unwrap();
        assert_eq!((ds.train.len(), ds.dev.len(), ds.test.len()), (40000, 500, 500));
        let all: HashSet<&String> = ds.train.iter().chain(&ds.dev).chain(&ds.test).collect();
        assert_eq!(all.len(), 41000);
    }

    #[test]
    fn word_dataset_deduplicates_and_rejects_small_sources() {
        let mut words: Vec<String> = (0..1200).map(|i| format!("w{i}")).collect();
        words.extend(words.clone());
        let ds = build_word_dataset(&words, 0, WordSplitSizes::default()).unwrap();
        assert_eq!(ds.train.len() + ds.dev.len() + ds.test.len(), 1200);

        let few: Vec<String> = (0..999).map(|i| format!("w{i}")).collect();
        assert!(matches!(
            build_word_dataset(&few, 0, WordSplitSizes::default()),
            Err(DataError::TooFewWords { available: 999, .. })
        ));
    }

    fn arb_quad() -> impl Strategy<Value = AnalogyQuadruple> {
        let w = "[ab]{1,2}";
        (w, w, w, w).prop_map(|(a, b, c, d)| AnalogyQuadruple::new(a, b, c, d))
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent(corpus in prop::collection::vec(arb_quad(), 0..40)) {
            let once = dedup_analogies(&corpus);
            prop_assert_eq!(dedup_analogies(&once), once.clone());
            // Every input survives either as itself or through its symmetric form.
            let kept: HashSet<String> = once.iter().map(|q| q.serialized()).collect();
            for q in &corpus {
                prop_assert!(kept.contains(&q.serialized()) || kept.contains(&q.symmetric().serialized()));
            }
        }
    }
}
