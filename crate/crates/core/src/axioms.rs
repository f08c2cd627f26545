//! Axiom-driven data augmentation.
//!
//! Symmetry (`A:B::C:D -> C:D::A:B`) and central permutation
//! (`A:B::C:D -> A:C::B:D`) generate eight equivalent forms of every analogy.
//! Three corruptions of each valid form give conflicting, invalid examples.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::AnalogyQuadruple;

/// Number of equivalent forms of a quadruple (original included).
pub const N_VALID: usize = 8;
/// Invalid examples generated before filtering.
pub const N_INVALID_RAW: usize = 24;

/// The eight equivalent forms, original first:
/// `A:B::C:D, A:C::B:D, D:B::C:A, C:A::D:B, C:D::A:B, B:A::D:C, D:C::B:A, B:D::A:C`.
pub fn valid_forms(q: &AnalogyQuadruple) -> Vec<AnalogyQuadruple> {
    let (a, b, c, d) = (q.a.as_str(), q.b.as_str(), q.c.as_str(), q.d.as_str());
    vec![
        q.clone(),
        q.rearranged([a, c, b, d]),
        q.rearranged([d, b, c, a]),
        q.rearranged([c, a, d, b]),
        q.rearranged([c, d, a, b]),
        q.rearranged([b, a, d, c]),
        q.rearranged([d, c, b, a]),
        q.rearranged([b, d, a, c]),
    ]
}

/// The corruptions `B:A::C:D`, `C:B::A:D` and `A:A::C:D` of one form.
fn corruptions(q: &AnalogyQuadruple) -> [AnalogyQuadruple; 3] {
    let (a, b, c, d) = (q.a.as_str(), q.b.as_str(), q.c.as_str(), q.d.as_str());
    [
        q.rearranged([b, a, c, d]),
        q.rearranged([c, b, a, d]),
        q.rearranged([a, a, c, d]),
    ]
}

/// Three corruptions of each valid form, in valid-form order, 24 in total.
/// Some may coincide with valid forms; see [`augment_for_classification`].
pub fn invalid_forms(q: &AnalogyQuadruple) -> Vec<AnalogyQuadruple> {
    valid_forms(q).iter().flat_map(corruptions).collect()
}

/// Invalid forms that are not string-identical to any valid form, without
/// repetitions, in generation order.
pub fn filtered_invalid_forms(q: &AnalogyQuadruple) -> Vec<AnalogyQuadruple> {
    let valid: Vec<String> = valid_forms(q).iter().map(|v| v.serialized()).collect();
    let mut kept: Vec<AnalogyQuadruple> = Vec::new();
    for inv in invalid_forms(q) {
        let key = inv.serialized();
        if !valid.contains(&key) && !kept.iter().any(|k| k.serialized() == key) {
            kept.push(inv);
        }
    }
    kept
}

/// Balanced positive/negative examples derived from one analogy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedBatch {
    pub origin: AnalogyQuadruple,
    pub valid: Vec<AnalogyQuadruple>,
    pub invalid: Vec<AnalogyQuadruple>,
    /// Set when every invalid form collided with a valid one; `invalid` is
    /// then empty.
    pub degenerate: bool,
}

/// Eight valid forms plus eight invalid forms.
///
/// Invalid forms colliding with a valid form are dropped. With more than eight
/// survivors, eight are sampled without replacement; with fewer, all survivors
/// are kept and the remainder is sampled with replacement among them.
pub fn augment_for_classification<R: Rng + ?Sized>(
    q: &AnalogyQuadruple,
    rng: &mut R,
) -> AugmentedBatch {
    let valid = valid_forms(q);
    let survivors = filtered_invalid_forms(q);
    let invalid: Vec<AnalogyQuadruple> = if survivors.is_empty() {
        log::debug!("no invalid form survives filtering for {q}");
        Vec::new()
    } else if survivors.len() >= N_VALID {
        survivors.choose_multiple(rng, N_VALID).cloned().collect()
    } else {
        let mut picked = survivors.clone();
        while picked.len() < N_VALID {
            picked.push(survivors.choose(rng).unwrap().clone());
        }
        picked
    };
    AugmentedBatch {
        origin: q.clone(),
        degenerate: invalid.is_empty(),
        valid,
        invalid,
    }
}

/// Eight equations `x:y::z:?` with their gold answers, stored as complete
/// quadruples whose last word is the gold. These are exactly the valid forms.
pub fn augment_for_regression(q: &AnalogyQuadruple) -> Vec<AnalogyQuadruple> {
    valid_forms(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeSet, HashSet};

    fn q(a: &str, b: &str, c: &str, d: &str) -> AnalogyQuadruple {
        AnalogyQuadruple::new(a, b, c, d)
    }

    /// Fixpoint of {q} under symmetry and central permutation.
    fn brute_force_closure(start: &AnalogyQuadruple) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut todo = vec![start.clone()];
        while let Some(x) = todo.pop() {
            if !seen.insert(x.serialized()) {
                continue;
            }
            todo.push(x.rearranged([&x.c, &x.d, &x.a, &x.b]));
            todo.push(x.rearranged([&x.a, &x.c, &x.b, &x.d]));
        }
        seen
    }

    #[test]
    fn eight_listed_forms() {
        let forms: Vec<String> = valid_forms(&q("A", "B", "C", "D"))
            .iter()
            .map(|f| f.to_string())
            .collect();
        assert_eq!(
            forms,
            [
                "A:B::C:D", "A:C::B:D", "D:B::C:A", "C:A::D:B", "C:D::A:B", "B:A::D:C",
                "D:C::B:A", "B:D::A:C"
            ]
        );
        let closure = brute_force_closure(&q("A", "B", "C", "D"));
        let ours: BTreeSet<String> = valid_forms(&q("A", "B", "C", "D"))
            .iter()
            .map(|f| f.serialized())
            .collect();
        assert_eq!(closure, ours);
    }

    #[test]
    fn fully_degenerate_forms() {
        let forms = valid_forms(&q("A", "A", "A", "A"));
        assert_eq!(forms.len(), 8);
        assert!(forms.iter().all(|f| f.to_string() == "A:A::A:A"));
    }

    #[test]
    fn valid_forms_closed_under_rules() {
        let forms = valid_forms(&q("w", "x", "y", "z"));
        let keys: HashSet<String> = forms.iter().map(|f| f.serialized()).collect();
        for f in &forms {
            assert!(keys.contains(&f.symmetric().serialized()));
            assert!(keys.contains(&f.rearranged([&f.a, &f.c, &f.b, &f.d]).serialized()));
        }
    }

    #[test]
    fn invalid_forms_order() {
        let inv = invalid_forms(&q("A", "B", "C", "D"));
        assert_eq!(inv.len(), N_INVALID_RAW);
        assert_eq!(inv[0].to_string(), "B:A::C:D");
        assert_eq!(inv[1].to_string(), "C:B::A:D");
        assert_eq!(inv[2].to_string(), "A:A::C:D");
        assert_eq!(inv[3].to_string(), "C:A::B:D");
    }

    #[test]
    fn collisions_exist_for_repeated_words() {
        let q = q("A", "A", "C", "C");
        let valid: HashSet<String> = valid_forms(&q).iter().map(|f| f.serialized()).collect();
        assert!(invalid_forms(&q).iter().any(|f| valid.contains(&f.serialized())));
        assert_eq!(invalid_forms(&q).len(), 24);
    }

    #[test]
    fn generic_batch_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = augment_for_classification(&q("walk", "walked", "talk", "talked"), &mut rng);
        assert_eq!(batch.valid.len(), 8);
        assert_eq!(batch.invalid.len(), 8);
        assert!(!batch.degenerate);
        let valid: HashSet<String> = batch.valid.iter().map(|f| f.serialized()).collect();
        assert!(batch.invalid.iter().all(|f| !valid.contains(&f.serialized())));
        let distinct: HashSet<String> = batch.invalid.iter().map(|f| f.serialized()).collect();
        assert_eq!(distinct.len(), 8, "sampled without replacement");
    }

    #[test]
    fn sang_collision_is_filtered() {
        let origin = q("sang", "sang", "was", "were");
        let valid: HashSet<String> = valid_forms(&origin).iter().map(|f| f.serialized()).collect();
        // The A:A::C:D corruption of the original reproduces it.
        assert_eq!(invalid_forms(&origin)[2], origin);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = augment_for_classification(&origin, &mut rng);
        assert!(batch.invalid.iter().all(|f| !valid.contains(&f.serialized())));
        assert!(!batch.invalid.contains(&origin));
    }

    #[test]
    fn fully_degenerate_batch_is_flagged() {
        let origin = q("A", "A", "A", "A");
        // Every corruption of A:A::A:A is A:A::A:A itself.
        assert!(invalid_forms(&origin).iter().all(|f| f == &origin));
        let batch = augment_for_classification(&origin, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(batch.degenerate);
        assert!(batch.invalid.is_empty());
        assert_eq!(batch.valid.len(), 8);
    }

    #[test]
    fn few_survivors_all_appear() {
        let origin = q("A", "A", "C", "C");
        let survivors = filtered_invalid_forms(&origin);
        assert!(!survivors.is_empty() && survivors.len() < 8);
        let batch = augment_for_classification(&origin, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(batch.invalid.len(), 8);
        for s in &survivors {
            assert!(batch.invalid.contains(s));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let origin = q("walk", "walked", "talk", "talked");
        let a = augment_for_classification(&origin, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment_for_classification(&origin, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn regression_golds() {
        let eqs = augment_for_regression(&q("A", "B", "C", "D"));
        let golds: Vec<&str> = eqs.iter().map(|e| e.d.as_str()).collect();
        assert_eq!(golds, ["D", "D", "A", "B", "B", "C", "A", "C"]);
        let mut sorted = golds.clone();
        sorted.sort();
        assert_eq!(sorted, ["A", "A", "B", "B", "C", "C", "D", "D"]);
    }

    #[test]
    fn regression_identity_equation() {
        let eqs = augment_for_regression(&q("A", "B", "A", "B"));
        assert_eq!(eqs.len(), 8);
        for e in &eqs {
            // Each equation stays a valid form of the identity analogy.
            assert!(valid_forms(&q("A", "B", "A", "B")).contains(e));
        }
    }
}
