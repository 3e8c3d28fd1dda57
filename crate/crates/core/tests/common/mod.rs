//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls the code under test except to build
//! inputs.

#![allow(dead_code)]

use kbert::inject::{SentenceTree, VisibleMatrix};
use kbert::kg::{KnowledgeGraph, Triple};
use kbert::tensor::Matrix;
use kbert::tokenizer::{build_vocab, TokenizeMode, Tokenizer};
use kbert::transformer::{BlockParams, ModelConfig};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "theta"];
pub const LETTERS: [char; 5] = ['a', 'b', 'c', 'd', 'e'];

/// Normalization written out independently of the matcher.
pub fn normalize(s: &str, mode: TokenizeMode) -> String {
    match mode {
        TokenizeMode::Char => s.chars().filter(|c| !c.is_whitespace()).collect(),
        TokenizeMode::Whitespace => {
            let words: Vec<String> = s.split_whitespace().map(|w| w.to_lowercase()).collect();
            words.join(" ")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatch {
    pub start: usize,
    pub end: usize,
    pub head: String,
    pub triples: Vec<Triple>,
}

/// Exhaustive span search: at each start, try every end and keep the longest
/// span equal (after normalization) to some head, scanning the triple list
/// directly. Ties between heads go to the smallest name.
pub fn oracle_query(
    surfaces: &[String],
    triples: &[Triple],
    mode: TokenizeMode,
    max_triples: usize,
    max_entities: usize,
) -> Vec<OracleMatch> {
    let sep = if mode == TokenizeMode::Char { "" } else { " " };
    let n = surfaces.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n && out.len() < max_entities && max_triples > 0 {
        let mut best: Option<(usize, String)> = None;
        for j in i + 1..=n {
            let key = normalize(&surfaces[i..j].join(sep), mode);
            if key.is_empty() {
                continue;
            }
            let head = triples
                .iter()
                .filter(|t| normalize(&t.head, mode) == key)
                .map(|t| t.head.clone())
                .min();
            if let Some(h) = head {
                best = Some((j, h));
            }
        }
        match best {
            Some((j, head)) => {
                let ts: Vec<Triple> = triples
                    .iter()
                    .filter(|t| t.head == head)
                    .take(max_triples)
                    .cloned()
                    .collect();
                out.push(OracleMatch {
                    start: i,
                    end: j,
                    head,
                    triples: ts,
                });
                i = j;
            }
            None => i += 1,
        }
    }
    out
}

/// What sits at each flat index, derived from the tree alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Trunk(usize),
    /// Branch index, offset within the branch, anchor span.
    Branch(usize, usize, (usize, usize)),
}

/// Emission order: each trunk token, then (after an anchor's last token)
/// every branch hung on that anchor.
pub fn oracle_layout(tree: &SentenceTree) -> Vec<Node> {
    let mut out = Vec::new();
    for t in 0..tree.trunk.len() {
        out.push(Node::Trunk(t));
        for (b, br) in tree.branches.iter().enumerate() {
            if br.anchor.1 == t + 1 {
                for k in 0..br.len() {
                    out.push(Node::Branch(b, k, br.anchor));
                }
            }
        }
    }
    out
}

pub fn oracle_soft_positions(tree: &SentenceTree) -> Vec<usize> {
    oracle_layout(tree)
        .into_iter()
        .map(|n| match n {
            Node::Trunk(t) => t,
            Node::Branch(_, k, (_, end)) => end + k,
        })
        .collect()
}

/// Tree-membership visibility.
pub fn oracle_visible(tree: &SentenceTree) -> Vec<Vec<bool>> {
    let layout = oracle_layout(tree);
    let vis = |a: Node, b: Node| match (a, b) {
        (Node::Trunk(_), Node::Trunk(_)) => true,
        (Node::Branch(x, _, _), Node::Branch(y, _, _)) => x == y,
        (Node::Trunk(t), Node::Branch(_, _, (s, e))) | (Node::Branch(_, _, (s, e)), Node::Trunk(t)) => s <= t && t < e,
    };
    layout
        .iter()
        .map(|&a| layout.iter().map(|&b| vis(a, b)).collect())
        .collect()
}

/// A random graph, sentence and tokenizer. Word mode mixes case so that
/// case-insensitive matching is exercised; some words are left out of the
/// vocabulary so that matching on surfaces is exercised too.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mode: TokenizeMode,
    pub kg: KnowledgeGraph,
    pub text: String,
    pub tokenizer: Tokenizer,
}

fn random_word<R: Rng>(rng: &mut R) -> String {
    let w = *WORDS.choose(rng).unwrap();
    if rng.random_bool(0.2) {
        let mut c = w.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        first + c.as_str()
    } else {
        w.to_string()
    }
}

fn random_letters<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect()
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let mode = if rng.random_bool(0.5) {
        TokenizeMode::Whitespace
    } else {
        TokenizeMode::Char
    };
    let triple_count = rng.random_range(0..14);
    let mut triples = Vec::new();
    for _ in 0..triple_count {
        let head = match mode {
            TokenizeMode::Whitespace => {
                let len = rng.random_range(1..=3);
                (0..len).map(|_| random_word(rng)).collect::<Vec<_>>().join(" ")
            }
            TokenizeMode::Char => {
                let len = rng.random_range(2..=4);
                random_letters(rng, len)
            }
        };
        let relation = ["is_a", "part of", "near", "r"][rng.random_range(0..4)];
        let tail = match mode {
            TokenizeMode::Whitespace => {
                let len = rng.random_range(1..=2);
                (0..len).map(|_| random_word(rng)).collect::<Vec<_>>().join(" ")
            }
            TokenizeMode::Char => {
                let len = rng.random_range(2..=3);
                random_letters(rng, len)
            }
        };
        triples.push(Triple::new(head, relation, tail));
    }
    let kg = KnowledgeGraph::from_triples(triples);
    let len = rng.random_range(1..=15);
    let text = match mode {
        TokenizeMode::Whitespace => (0..len).map(|_| random_word(rng)).collect::<Vec<_>>().join(" "),
        TokenizeMode::Char => random_letters(rng, len),
    };
    let mut corpus: Vec<String> = WORDS.iter().take(6).map(|w| w.to_string()).collect();
    corpus.extend(LETTERS.iter().take(4).map(|c| c.to_string()));
    corpus.extend(["is_a", "part", "of", "near", "r"].map(String::from));
    let vocab = build_vocab(&corpus, 1, mode).unwrap();
    Instance {
        mode,
        kg,
        text,
        tokenizer: Tokenizer::new(vocab, mode),
    }
}

/// Relative error with a fixed floor on the denominator so that gradients
/// that are zero in both computations compare as equal.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

// Explicit-loop attention with the same accumulation order as the library.
/// Returns the projected output and per-head scores. `None` leaves the mask
/// term out entirely.
pub fn reference_attention(
    h: &Matrix,
    mask: Option<&VisibleMatrix>,
    p: &BlockParams,
    cfg: &ModelConfig,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = h.rows();
    let d = cfg.hidden;
    let dk = d / cfg.heads;
    let scale = (dk as f64).sqrt();
    let linear = |x: &Vec<Vec<f64>>, w: &Matrix, b: &Matrix| -> Vec<Vec<f64>> {
        let mut y = vec![vec![0.0; w.cols()]; x.len()];
        for i in 0..x.len() {
            for j in 0..w.cols() {
                let mut acc = 0.0;
                for k in 0..w.rows() {
                    acc += x[i][k] * w.get(k, j);
                }
                y[i][j] = acc + b.get(0, j);
            }
        }
        y
    };
    let x: Vec<Vec<f64>> = (0..n).map(|i| h.row(i).to_vec()).collect();
    let q = linear(&x, &p.query.weight, &p.query.bias);
    let k = linear(&x, &p.key.weight, &p.key.bias);
    let v = linear(&x, &p.value.weight, &p.value.bias);
    let mut ctx = vec![vec![0.0; d]; n];
    let mut all_scores = Vec::new();
    for head in 0..cfg.heads {
        let off = head * dk;
        let mut scores = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut dot = 0.0;
                for c in 0..dk {
                    dot += q[i][off + c] * k[j][off + c];
                }
                scores[i][j] = match mask {
                    None => dot / scale,
                    Some(m) if cfg.mask_after_scale => dot / scale + m.get(i, j),
                    Some(m) => (dot + m.get(i, j)) / scale,
                };
            }
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if scores[i][j] > max {
                    max = scores[i][j];
                }
            }
            let mut sum = 0.0;
            for j in 0..n {
                scores[i][j] = (scores[i][j] - max).exp();
                sum += scores[i][j];
            }
            for j in 0..n {
                scores[i][j] /= sum;
            }
        }
        for i in 0..n {
            for j in 0..n {
                for c in 0..dk {
                    ctx[i][off + c] += scores[i][j] * v[j][off + c];
                }
            }
        }
        all_scores.push(scores);
    }
    (linear(&ctx, &p.output.weight, &p.output.bias), all_scores)
}
