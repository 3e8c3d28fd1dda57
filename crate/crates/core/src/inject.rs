//! Sentence trees, flattening with soft positions, and the visible matrix.
//!
//! A sentence tree is the original token sequence (the trunk, with `[CLS]`
//! and `[SEP]` already in place) plus depth-1 branches, one per injected
//! triple. Flattening emits each anchor's branches right after the anchor's
//! last token. Hard positions index the emitted sequence; soft positions
//! continue from the anchor inside a branch and keep counting along the
//! trunk as if no branch were there.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::EntityMatch;
use crate::tokenizer::{Token, Tokenizer, SEP_ID};

/// Additive mask value for invisible pairs.
pub const NEG_INF: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    A,
    B,
}

impl Segment {
    pub fn index(self) -> usize {
        match self {
            Segment::A => 0,
            Segment::B => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    /// Trunk span `[start, end)` of the head entity.
    pub anchor: (usize, usize),
    pub relation: Vec<Token>,
    pub tail: Vec<Token>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.relation.len() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.relation.iter().chain(&self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceTree {
    pub trunk: Vec<Token>,
    /// Sorted by anchor start; branches sharing an anchor keep triple order.
    pub branches: Vec<Branch>,
}

impl SentenceTree {
    pub fn plain(trunk: Vec<Token>) -> Self {
        SentenceTree {
            trunk,
            branches: Vec::new(),
        }
    }

    /// Length of the flattened sequence.
    pub fn flat_len(&self) -> usize {
        self.trunk.len() + self.branches.iter().map(Branch::len).sum::<usize>()
    }

    /// Shrinks the tree until it flattens to at most `max_len` tokens.
    /// Whole branches go first, last-anchored first; the trunk is cut only
    /// once no branch is left. Returns the number of branches dropped.
    pub fn fit(&mut self, max_len: usize) -> usize {
        let mut dropped = 0;
        while self.flat_len() > max_len && self.branches.pop().is_some() {
            dropped += 1;
        }
        if self.trunk.len() > max_len {
            self.trunk.truncate(max_len);
        }
        dropped
    }
}

/// K-Inject: hang one branch per (match, triple) pair off the matched span.
///
/// Match spans are in trunk coordinates. Relation and tail strings are
/// tokenized with `tokenizer`.
pub fn k_inject(trunk: Vec<Token>, matches: &[EntityMatch], tokenizer: &Tokenizer) -> Result<SentenceTree> {
    let mut sorted: Vec<&EntityMatch> = matches.iter().collect();
    sorted.sort_by_key(|m| m.start);
    for m in &sorted {
        if m.start >= m.end || m.end > trunk.len() {
            return Err(Error::SpanOutOfBounds {
                span: m.span(),
                len: trunk.len(),
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingSpans {
                first: pair[0].span(),
                second: pair[1].span(),
            });
        }
    }

    let mut branches = Vec::new();
    for m in sorted {
        for triple in &m.triples {
            let branch = Branch {
                anchor: m.span(),
                relation: tokenizer.tokenize(&triple.relation),
                tail: tokenizer.tokenize(&triple.tail),
            };
            if !branch.is_empty() {
                branches.push(branch);
            }
        }
    }
    Ok(SentenceTree { trunk, branches })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlatToken {
    pub token: Token,
    pub hard_pos: usize,
    pub soft_pos: usize,
    pub segment: Segment,
    /// 0 for trunk tokens, k for the k-th branch (1-based).
    pub branch_id: usize,
}

impl FlatToken {
    pub fn is_trunk(&self) -> bool {
        self.branch_id == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlatSequence {
    pub tokens: Vec<FlatToken>,
}

impl FlatSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.token.id as usize).collect()
    }

    pub fn soft_positions(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.soft_pos).collect()
    }

    pub fn hard_positions(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.hard_pos).collect()
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.tokens.iter().map(|t| t.segment).collect()
    }

    /// Hard positions of trunk tokens, in trunk order.
    pub fn trunk_rows(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.is_trunk())
            .map(|t| t.hard_pos)
            .collect()
    }

    /// Replaces soft positions with hard ones (the "no soft position"
    /// ablation).
    pub fn use_hard_positions(&mut self) {
        for t in &mut self.tokens {
            t.soft_pos = t.hard_pos;
        }
    }
}

/// Emits the tree in hard-position order with soft positions and segments.
pub fn flatten(tree: &SentenceTree) -> FlatSequence {
    let mut tokens = Vec::with_capacity(tree.flat_len());
    let mut segment = Segment::A;
    let mut next_branch = 0;
    for (t, tok) in tree.trunk.iter().enumerate() {
        let seg = segment;
        tokens.push(FlatToken {
            token: tok.clone(),
            hard_pos: tokens.len(),
            soft_pos: t,
            segment: seg,
            branch_id: 0,
        });
        if tok.id == SEP_ID && tok.is_special() {
            segment = Segment::B;
        }
        while next_branch < tree.branches.len() && tree.branches[next_branch].anchor.1 == t + 1 {
            let branch = &tree.branches[next_branch];
            for (k, btok) in branch.tokens().enumerate() {
                tokens.push(FlatToken {
                    token: btok.clone(),
                    hard_pos: tokens.len(),
                    soft_pos: t + 1 + k,
                    segment: seg,
                    branch_id: next_branch + 1,
                });
            }
            next_branch += 1;
        }
    }
    FlatSequence { tokens }
}

/// Square additive mask over hard positions: 0 where visible, [`NEG_INF`]
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleMatrix {
    n: usize,
    data: Vec<f64>,
}

impl VisibleMatrix {
    pub fn all_visible(n: usize) -> Self {
        VisibleMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut visible: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = vec![NEG_INF; n * n];
        for i in 0..n {
            for j in 0..n {
                if visible(i, j) {
                    data[i * n + j] = 0.0;
                }
            }
        }
        VisibleMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Extends to `len` with padding rows/columns that see only themselves.
    pub fn padded(&self, len: usize) -> Self {
        assert!(len >= self.n, "cannot pad {} down to {len}", self.n);
        VisibleMatrix::from_fn(len, |i, j| {
            if i < self.n && j < self.n {
                self.is_visible(i, j)
            } else {
                i == j
            }
        })
    }

    /// One string of `1` (visible) / `0` (invisible) per row.
    pub fn render_rows(&self) -> Vec<String> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| if self.is_visible(i, j) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }
}

/// Visibility: trunk tokens see each other, branch tokens see their own
/// branch and the trunk tokens of their anchor.
pub fn visible_matrix(seq: &FlatSequence, tree: &SentenceTree) -> VisibleMatrix {
    // Trunk index for trunk rows, anchor span for branch rows.
    enum Place {
        Trunk(usize),
        Branch(usize, (usize, usize)),
    }
    let mut trunk_idx = 0;
    let places: Vec<Place> = seq
        .tokens
        .iter()
        .map(|t| {
            if t.is_trunk() {
                trunk_idx += 1;
                Place::Trunk(trunk_idx - 1)
            } else {
                Place::Branch(t.branch_id, tree.branches[t.branch_id - 1].anchor)
            }
        })
        .collect();

    VisibleMatrix::from_fn(seq.len(), |i, j| match (&places[i], &places[j]) {
        (Place::Trunk(_), Place::Trunk(_)) => true,
        (Place::Branch(a, _), Place::Branch(b, _)) => a == b,
        (Place::Trunk(t), Place::Branch(_, (s, e))) | (Place::Branch(_, (s, e)), Place::Trunk(t)) => s <= t && t < e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DumpFormat {
    #[default]
    Json,
    Tsv,
}

#[derive(Debug, Serialize)]
struct DumpToken<'a> {
    surface: &'a str,
    id: u32,
    hard: usize,
    soft: usize,
    segment: Segment,
    branch: usize,
}

#[derive(Debug, Serialize)]
struct Dump<'a> {
    tokens: Vec<DumpToken<'a>>,
    visible: Vec<String>,
}

/// Renders a flattened sequence and its mask, the format `kbert inject`
/// prints and the golden files use.
pub fn render_injection(seq: &FlatSequence, matrix: &VisibleMatrix, format: DumpFormat) -> String {
    match format {
        DumpFormat::Json => {
            let dump = Dump {
                tokens: seq
                    .tokens
                    .iter()
                    .map(|t| DumpToken {
                        surface: &t.token.surface,
                        id: t.token.id,
                        hard: t.hard_pos,
                        soft: t.soft_pos,
                        segment: t.segment,
                        branch: t.branch_id,
                    })
                    .collect(),
                visible: matrix.render_rows(),
            };
            let mut s = serde_json::to_string_pretty(&dump).expect("dump is always serializable");
            s.push('\n');
            s
        }
        DumpFormat::Tsv => {
            let mut s = String::from("hard\tsoft\tsegment\tbranch\tid\tsurface\tvisible\n");
            for (t, row) in seq.tokens.iter().zip(matrix.render_rows()) {
                let seg = match t.segment {
                    Segment::A => "A",
                    Segment::B => "B",
                };
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    t.hard_pos, t.soft_pos, seg, t.branch_id, t.token.id, t.token.surface, row
                );
            }
            s
        }
    }
}
