//! Monte-Carlo solver over character shuffles.
//!
//! A trial draws a uniform interleaving of `B` and `C` (each word keeps its
//! internal order) and deletes the characters of `A` from it as a subsequence.
//! The survivors of all trials are the candidates, ranked by frequency.
//!
//! Which occurrence of `A` gets deleted matters. We delete the embedding that
//! uses the most characters originating from `C`, breaking ties by the
//! leftmost positions. With that rule `A:B::A:x` always yields `B`: the copy of
//! `A` coming from `C` is deleted whole.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::bag::{bag_of, bag_target};
use super::Deadline;

/// Interleaved character with its origin (`true` for `C`).
pub type Tagged = (char, bool);

/// Uniform random interleaving of `b` and `c`.
pub fn random_interleaving<R: Rng + ?Sized>(b: &[char], c: &[char], rng: &mut R) -> Vec<Tagged> {
    let mut origin: Vec<bool> = std::iter::repeat(false)
        .take(b.len())
        .chain(std::iter::repeat(true).take(c.len()))
        .collect();
    origin.shuffle(rng);
    let (mut ib, mut ic) = (0, 0);
    origin
        .into_iter()
        .map(|from_c| {
            if from_c {
                ic += 1;
                (c[ic - 1], true)
            } else {
                ib += 1;
                (b[ib - 1], false)
            }
        })
        .collect()
}

/// Removes `a` from `s` as a subsequence, choosing the embedding with the most
/// `C`-origin positions and, among those, the lexicographically smallest
/// position vector. `None` when `a` is not a subsequence of `s`.
pub fn delete_subsequence(s: &[Tagged], a: &[char]) -> Option<String> {
    const NEG: i32 = i32::MIN / 2;
    let (n, k) = (s.len(), a.len());
    // best[i][j]: most C positions when matching a[i..] inside s[j..].
    let mut best = vec![vec![NEG; n + 1]; k + 1];
    best[k].iter_mut().for_each(|v| *v = 0);
    for i in (0..k).rev() {
        for j in (0..n).rev() {
            let mut v = best[i][j + 1];
            if s[j].0 == a[i] && best[i + 1][j + 1] != NEG {
                v = v.max(s[j].1 as i32 + best[i + 1][j + 1]);
            }
            best[i][j] = v;
        }
    }
    let mut remaining = best[0][0];
    if remaining == NEG {
        return None;
    }
    let mut keep = vec![true; n];
    let mut cur = 0;
    for i in 0..k {
        let j = (cur..n)
            .find(|&j| {
                s[j].0 == a[i]
                    && best[i + 1][j + 1] != NEG
                    && s[j].1 as i32 + best[i + 1][j + 1] == remaining
            })
            .expect("an optimal embedding exists");
        remaining -= s[j].1 as i32;
        keep[j] = false;
        cur = j + 1;
    }
    Some(s.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t.0).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AleaOutcome {
    /// Candidates with their trial counts, most frequent first, ties in
    /// lexicographic order.
    pub candidates: Vec<(String, usize)>,
    pub trials_run: usize,
    pub timed_out: bool,
    /// Set when `bag(A)` is not contained in `bag(B)`: deleting `A` would
    /// then have to consume characters of `C`, and no shuffle-deletion can
    /// satisfy the saturating bag identity.
    pub refused: bool,
}

pub fn solve_alea<R: Rng + ?Sized>(
    a: &str,
    b: &str,
    c: &str,
    trials: usize,
    rng: &mut R,
    deadline: &Deadline,
) -> AleaOutcome {
    let mut out = AleaOutcome {
        candidates: Vec::new(),
        trials_run: 0,
        timed_out: false,
        refused: false,
    };
    if !bag_of(a).is_subset(&bag_of(b)) {
        out.refused = true;
        return out;
    }
    let (av, bv, cv): (Vec<char>, Vec<char>, Vec<char>) =
        (a.chars().collect(), b.chars().collect(), c.chars().collect());
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in 0..trials {
        if t % 64 == 0 && deadline.expired() {
            out.timed_out = true;
            break;
        }
        let s = random_interleaving(&bv, &cv, rng);
        if let Some(d) = delete_subsequence(&s, &av) {
            *counts.entry(d).or_insert(0) += 1;
        }
        out.trials_run += 1;
    }
    let mut cands: Vec<(String, usize)> = counts.into_iter().collect();
    cands.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    debug_assert!(cands.iter().all(|(d, _)| bag_of(d) == bag_target(a, b, c)));
    out.candidates = cands;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// All interleavings of `b` and `c`, with origins.
    pub(crate) fn all_interleavings(b: &[char], c: &[char]) -> Vec<Vec<Tagged>> {
        if b.is_empty() {
            return vec![c.iter().map(|&x| (x, true)).collect()];
        }
        if c.is_empty() {
            return vec![b.iter().map(|&x| (x, false)).collect()];
        }
        let mut out = Vec::new();
        for mut rest in all_interleavings(&b[1..], c) {
            rest.insert(0, (b[0], false));
            out.push(rest);
        }
        for mut rest in all_interleavings(b, &c[1..]) {
            rest.insert(0, (c[0], true));
            out.push(rest);
        }
        out
    }

    /// Brute force over position subsets in lexicographic order.
    fn brute_delete(s: &[Tagged], a: &[char]) -> Option<String> {
        fn combos(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for j in start..n {
                cur.push(j);
                combos(n, k, j + 1, cur, out);
                cur.pop();
            }
        }
        let mut all = Vec::new();
        combos(s.len(), a.len(), 0, &mut Vec::new(), &mut all);
        let mut best: Option<(usize, Vec<usize>)> = None;
        for pos in all {
            if pos.iter().zip(a).all(|(&p, &ch)| s[p].0 == ch) {
                let score = pos.iter().filter(|&&p| s[p].1).count();
                if best.as_ref().map_or(true, |(b, _)| score > *b) {
                    best = Some((score, pos));
                }
            }
        }
        best.map(|(_, pos)| {
            s.iter()
                .enumerate()
                .filter(|(i, _)| !pos.contains(i))
                .map(|(_, t)| t.0)
                .collect()
        })
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..400 {
            let w = |rng: &mut ChaCha8Rng, max: usize| -> Vec<char> {
                let n = rng.gen_range(0..=max);
                (0..n).map(|_| ['a', 'b', 'c'][rng.gen_range(0..3)]).collect()
            };
            let (a, b, c) = (w(&mut rng, 3), w(&mut rng, 4), w(&mut rng, 4));
            for s in all_interleavings(&b, &c) {
                assert_eq!(delete_subsequence(&s, &a), brute_delete(&s, &a));
            }
        }
    }

    #[test]
    fn cat_cats_animal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = solve_alea("cat", "cats", "animal", 1000, &mut rng, &Deadline::unlimited());
        assert!(out.candidates.iter().any(|(d, _)| d == "animals"));
        let target = bag_target("cat", "cats", "animal");
        assert!(out.candidates.iter().all(|(d, _)| bag_of(d) == target));
    }

    #[test]
    fn identity_equation_yields_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (a, b) in [("ab", "ba"), ("walk", "walked"), ("aa", "aab"), ("x", "x")] {
            let out = solve_alea(a, b, a, 300, &mut rng, &Deadline::unlimited());
            let words: Vec<&str> = out.candidates.iter().map(|(w, _)| w.as_str()).collect();
            assert_eq!(words, [b], "{a}:{b}::{a}");
        }
    }

    #[test]
    fn refuses_when_a_is_not_inside_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = solve_alea("sing", "sang", "ring", 100, &mut rng, &Deadline::unlimited());
        assert!(out.refused);
        assert!(out.candidates.is_empty());
    }

    #[test]
    fn walk_walked_talk_modal_candidate() {
        // Exhaustive distribution over all interleavings.
        let (a, b, c): (Vec<char>, Vec<char>, Vec<char>) =
            ("walk".chars().collect(), "walked".chars().collect(), "talk".chars().collect());
        let mut dist: HashMap<String, usize> = HashMap::new();
        for s in all_interleavings(&b, &c) {
            if let Some(d) = brute_delete(&s, &a) {
                *dist.entry(d).or_default() += 1;
            }
        }
        let modal = dist.iter().max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = solve_alea("walk", "walked", "talk", 1000, &mut rng, &Deadline::unlimited());
        assert_eq!(&out.candidates[0].0, modal.0);
        let set: BTreeSet<&String> = dist.keys().collect();
        assert!(out.candidates.iter().all(|(d, _)| set.contains(d)));
    }

    #[test]
    fn zero_limit_times_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Deadline::new(Some(std::time::Duration::ZERO));
        let out = solve_alea("a", "ab", "c", 100, &mut rng, &d);
        assert!(out.timed_out);
        assert_eq!(out.trials_run, 0);
    }
}
