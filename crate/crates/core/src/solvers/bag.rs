use std::collections::BTreeMap;
use std::fmt;

/// Multiset of characters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Bag(BTreeMap<char, usize>);

impl Bag {
    pub fn count(&self, c: char) -> usize {
        self.0.get(&c).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-character difference, floored at zero.
    pub fn saturating_sub(&self, other: &Bag) -> Bag {
        Bag(self
            .0
            .iter()
            .filter_map(|(&c, &n)| {
                let left = n.saturating_sub(other.count(c));
                (left > 0).then_some((c, left))
            })
            .collect())
    }

    pub fn union_sum(&self, other: &Bag) -> Bag {
        let mut out = self.0.clone();
        for (&c, &n) in &other.0 {
            *out.entry(c).or_insert(0) += n;
        }
        Bag(out)
    }

    pub fn is_subset(&self, other: &Bag) -> bool {
        self.0.iter().all(|(&c, &n)| other.count(c) >= n)
    }
}

impl fmt::Display for Bag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chars: Vec<String> = self
            .0
            .iter()
            .flat_map(|(&c, &n)| std::iter::repeat(c.to_string()).take(n))
            .collect();
        write!(f, "{{{}}}", chars.join(","))
    }
}

pub fn bag_of(word: &str) -> Bag {
    let mut m = BTreeMap::new();
    for c in word.chars() {
        *m.entry(c).or_insert(0) += 1;
    }
    Bag(m)
}

/// `(bag(B) - bag(A)) + bag(C)` with saturating subtraction.
pub fn bag_target(a: &str, b: &str, c: &str) -> Bag {
    bag_of(b).saturating_sub(&bag_of(a)).union_sum(&bag_of(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_cats_animal() {
        assert_eq!(bag_target("cat", "cats", "animal").to_string(), "{a,a,i,l,m,n,s}");
    }

    #[test]
    fn equal_a_and_b() {
        assert_eq!(bag_target("xyz", "xyz", "hello"), bag_of("hello"));
    }

    #[test]
    fn saturates() {
        assert_eq!(bag_of("ab").saturating_sub(&bag_of("bbc")), bag_of("a"));
        assert_eq!(bag_target("q", "", "c"), bag_of("c"));
    }
}
