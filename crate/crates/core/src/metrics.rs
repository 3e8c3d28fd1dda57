//! Accuracy and exact-span NER scores over BIO tags.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Decodes BIO tags into spans. An `I-X` that does not continue an `X` span
/// opens a new one; anything that is not `B-`/`I-` is outside.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, label) = match tag.split_once('-') {
            Some((p @ ("B" | "I"), l)) if !l.is_empty() => (p, l),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && open.as_ref().is_some_and(|s| s.label == label);
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i + 1;
            }
            continue;
        }
        if let Some(s) = open.take() {
            spans.push(s);
        }
        if prefix != "O" {
            open = Some(Span {
                start: i,
                end: i + 1,
                label: label.to_string(),
            });
        }
    }
    spans.extend(open);
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Zero denominators yield 0.
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// Micro-averaged exact-span precision, recall and F1 over aligned tag
/// sequences.
pub fn evaluate_ner<S: AsRef<str>, T: AsRef<str>>(predicted: &[Vec<S>], gold: &[Vec<T>]) -> Result<Prf> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let (mut correct, mut n_pred, mut n_gold) = (0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                predicted: p.len(),
                gold: g.len(),
            });
        }
        let ps: HashSet<Span> = bio_spans(p).into_iter().collect();
        let gs: HashSet<Span> = bio_spans(g).into_iter().collect();
        correct += ps.intersection(&gs).count();
        n_pred += ps.len();
        n_gold += gs.len();
    }
    Ok(Prf::from_counts(correct, n_pred, n_gold))
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    hits as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(tags: &str) -> Vec<String> {
        tags.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn decodes_spans() {
        let spans = bio_spans(&v("B-PER I-PER O B-LOC I-ORG I-ORG O B-LOC"));
        let got: Vec<_> = spans.iter().map(|s| (s.start, s.end, s.label.as_str())).collect();
        assert_eq!(got, [(0, 2, "PER"), (3, 4, "LOC"), (4, 6, "ORG"), (7, 8, "LOC")]);
    }

    #[test]
    fn perfect_prediction() {
        let g = vec![v("B-PER I-PER O B-LOC")];
        let s = evaluate_ner(&g, &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_convention() {
        let s = evaluate_ner(&[v("O O O")], &[v("B-PER O O")]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn partial_overlap_is_not_a_match() {
        let s = evaluate_ner(&[v("B-PER O B-LOC")], &[v("B-PER I-PER B-LOC")]).unwrap();
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn length_mismatch() {
        assert!(evaluate_ner(&[v("O O")], &[v("O")]).is_err());
        assert!(evaluate_ner(&[v("O")], &[v("O"), v("O")]).is_err());
    }
}
