//! Minimum-description-length solver.
//!
//! Enumerates edit programs turning `A` into `B` in order of encoded length,
//! transfers each onto `C` and returns the output of the cheapest program that
//! applies. Copy boundaries are carried over through a longest-common-
//! subsequence alignment of `A` and `C`; inserted strings and deletion lengths
//! are kept as they are.

use std::fmt;

use super::bag::{bag_of, Bag};
use super::Deadline;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EditOp {
    /// Copy `len` characters from the source cursor.
    CopyRun(usize),
    /// Skip `len` source characters.
    Delete(usize),
    /// Emit a literal string.
    Insert(String),
}

fn log_bits(len: usize) -> usize {
    // ceil(log2(len + 1))
    (usize::BITS - len.leading_zeros()) as usize
}

impl EditOp {
    pub fn bits(&self) -> usize {
        match self {
            EditOp::CopyRun(l) => 2 + log_bits(*l),
            EditOp::Delete(l) => 3 + log_bits(*l),
            EditOp::Insert(s) => 3 + 8 * s.chars().count(),
        }
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditOp::CopyRun(l) => write!(f, "CopyRun({l})"),
            EditOp::Delete(l) => write!(f, "Delete({l})"),
            EditOp::Insert(s) => write!(f, "Insert({s:?})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EditProgram {
    pub ops: Vec<EditOp>,
}

impl EditProgram {
    /// Encoded length in bits.
    pub fn complexity(&self) -> usize {
        self.ops.iter().map(EditOp::bits).sum()
    }

    /// Runs the program over `source`. `None` if an operation runs past the
    /// end or the source is not fully consumed.
    pub fn replay(&self, source: &str) -> Option<String> {
        let src: Vec<char> = source.chars().collect();
        let mut cur = 0;
        let mut out = String::new();
        for op in &self.ops {
            match op {
                EditOp::CopyRun(l) => {
                    out.extend(src.get(cur..cur + l)?);
                    cur += l;
                }
                EditOp::Delete(l) => {
                    src.get(cur..cur + l)?;
                    cur += l;
                }
                EditOp::Insert(s) => out.push_str(s),
            }
        }
        (cur == src.len()).then_some(out)
    }

    /// Carries the program over to `c`, a word aligned with `a`, and returns
    /// the transferred program. `None` when the transfer is inconsistent.
    pub fn reanchor(&self, a: &str, c: &str) -> Option<EditProgram> {
        let av: Vec<char> = a.chars().collect();
        let cv: Vec<char> = c.chars().collect();
        let anchors = lcs_anchors(&av, &cv);
        let last_copy = self.ops.iter().rposition(|o| matches!(o, EditOp::CopyRun(_)));
        let mut ops = Vec::with_capacity(self.ops.len());
        let (mut i, mut j) = (0usize, 0usize);
        for (k, op) in self.ops.iter().enumerate() {
            match op {
                EditOp::Delete(l) => {
                    i += l;
                    j += l;
                    ops.push(EditOp::Delete(*l));
                }
                EditOp::Insert(s) => ops.push(EditOp::Insert(s.clone())),
                EditOp::CopyRun(l) => {
                    i += l;
                    let end = if Some(k) == last_copy {
                        let later: usize = self.ops[k + 1..]
                            .iter()
                            .map(|o| if let EditOp::Delete(d) = o { *d } else { 0 })
                            .sum();
                        cv.len().checked_sub(later)?
                    } else {
                        map_boundary(&anchors, i)
                    };
                    let len = end.checked_sub(j)?;
                    if len > 0 {
                        ops.push(EditOp::CopyRun(len));
                    }
                    j = end;
                }
            }
            if j > cv.len() {
                return None;
            }
        }
        (j == cv.len()).then_some(EditProgram { ops })
    }
}

impl fmt::Display for EditProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ops.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Boundary pairs `(i, j)` of an LCS alignment, from `(0, 0)` to the ends.
/// Each matched pair `a[x] = c[y]` contributes `(x, y)` and `(x + 1, y + 1)`.
fn lcs_anchors(a: &[char], c: &[char]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), c.len());
    let mut t = vec![vec![0usize; m + 1]; n + 1];
    for x in (0..n).rev() {
        for y in (0..m).rev() {
            t[x][y] = if a[x] == c[y] {
                1 + t[x + 1][y + 1]
            } else {
                t[x + 1][y].max(t[x][y + 1])
            };
        }
    }
    let mut anchors = vec![(0, 0)];
    let (mut x, mut y) = (0, 0);
    while x < n && y < m {
        if a[x] == c[y] && t[x][y] == 1 + t[x + 1][y + 1] {
            anchors.push((x, y));
            anchors.push((x + 1, y + 1));
            x += 1;
            y += 1;
        } else if t[x + 1][y] >= t[x][y + 1] {
            x += 1;
        } else {
            y += 1;
        }
    }
    anchors.push((n, m));
    anchors.dedup();
    anchors
}

/// Position in `C` matching boundary `p` of `A`, interpolated linearly
/// between the surrounding anchors and rounded to nearest.
fn map_boundary(anchors: &[(usize, usize)], p: usize) -> usize {
    let hi = anchors.iter().position(|&(x, _)| x >= p).unwrap_or(anchors.len() - 1);
    let (x1, y1) = anchors[hi];
    if x1 == p || hi == 0 {
        return y1;
    }
    let (x0, y0) = anchors[hi - 1];
    let (num, den) = ((p - x0) * (y1 - y0), x1 - x0);
    y0 + (2 * num + den) / (2 * den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KolmoOutcome {
    /// Solution word with the program that produced it from `A` to `B`.
    pub solution: Option<(String, EditProgram)>,
    pub nodes: u64,
    pub timed_out: bool,
    pub budget_exhausted: bool,
}

struct Search<'a> {
    a: Vec<char>,
    b: Vec<char>,
    a_bags: Vec<Bag>,
    b_bags: Vec<Bag>,
    a_str: &'a str,
    c_str: &'a str,
    budget: Option<u64>,
    deadline: &'a Deadline,
    nodes: u64,
    stop: bool,
    timed_out: bool,
    budget_exhausted: bool,
    ops: Vec<EditOp>,
    found: Option<(String, EditProgram)>,
}

impl Search<'_> {
    /// Cost no completion of the suffix problem `A[i..] -> B[j..]` can beat.
    fn lower_bound(&self, i: usize, j: usize) -> usize {
        let (ra, rb) = (&self.a_bags[i], &self.b_bags[j]);
        let missing = rb.saturating_sub(ra).len();
        let surplus = ra.saturating_sub(rb).len();
        let mut lb = 0;
        if missing > 0 {
            lb += 3 + 8 * missing;
        }
        if surplus > 0 {
            lb += 4;
        }
        if self.b.len() - j > missing {
            lb += 3;
        }
        lb
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.budget.is_some_and(|b| self.nodes > b) {
            self.budget_exhausted = true;
            self.stop = true;
        } else if self.nodes % 1024 == 0 && self.deadline.expired() {
            self.timed_out = true;
            self.stop = true;
        }
        !self.stop
    }

    fn dfs(&mut self, i: usize, j: usize, cost: usize, threshold: usize) {
        if self.stop || !self.tick() {
            return;
        }
        let (n, m) = (self.a.len(), self.b.len());
        if i == n && j == m {
            if cost == threshold {
                let program = EditProgram { ops: self.ops.clone() };
                if let Some(word) = program.reanchor(self.a_str, self.c_str).and_then(|p| p.replay(self.c_str)) {
                    self.found = Some((word, program));
                    self.stop = true;
                }
            }
            return;
        }
        let try_op = |s: &mut Self, op: EditOp, ni: usize, nj: usize| {
            let c = cost + op.bits();
            if s.stop || c + s.lower_bound(ni, nj) > threshold {
                return;
            }
            s.ops.push(op);
            s.dfs(ni, nj, c, threshold);
            s.ops.pop();
        };
        let max_copy = self.a[i..].iter().zip(&self.b[j..]).take_while(|(x, y)| x == y).count();
        for l in (1..=max_copy).rev() {
            try_op(self, EditOp::CopyRun(l), i + l, j + l);
        }
        for l in 1..=n - i {
            try_op(self, EditOp::Delete(l), i + l, j);
        }
        for l in 1..=m - j {
            let s: String = self.b[j..j + l].iter().collect();
            try_op(self, EditOp::Insert(s), i, j + l);
        }
    }
}

/// Solves `A:B::C:x`. `budget` caps the number of search nodes over all
/// iterations; the deadline is polled every 1024 nodes.
pub fn solve_kolmo(a: &str, b: &str, c: &str, budget: Option<u64>, deadline: &Deadline) -> KolmoOutcome {
    let suffix_bags = |w: &str| -> Vec<Bag> {
        let idx: Vec<usize> = w.char_indices().map(|(k, _)| k).chain([w.len()]).collect();
        idx.into_iter().map(|k| bag_of(&w[k..])).collect()
    };
    let mut s = Search {
        a: a.chars().collect(),
        b: b.chars().collect(),
        a_bags: suffix_bags(a),
        b_bags: suffix_bags(b),
        a_str: a,
        c_str: c,
        budget,
        deadline,
        nodes: 0,
        stop: false,
        timed_out: false,
        budget_exhausted: false,
        ops: Vec::new(),
        found: None,
    };
    if deadline.expired() {
        s.timed_out = true;
    } else {
        // Deleting every character and inserting every character one by one
        // bounds any program worth considering.
        let max_threshold = 4 * s.a.len() + 11 * s.b.len();
        let mut t = s.lower_bound(0, 0);
        while t <= max_threshold && !s.stop {
            s.dfs(0, 0, 0, t);
            t += 1;
        }
    }
    KolmoOutcome {
        solution: s.found,
        nodes: s.nodes,
        timed_out: s.timed_out,
        budget_exhausted: s.budget_exhausted,
    }
}

/// Cheapest program turning `a` into `b`, ignoring any third word.
pub fn minimal_program(a: &str, b: &str) -> Option<EditProgram> {
    solve_kolmo(a, b, a, None, &Deadline::unlimited()).solution.map(|(_, p)| p)
}
