use std::collections::HashSet;
use std::path::Path;

use kbert::data::{load_conll, ClassRecord, LabelSet};
use kbert::layers::Parameters;
use kbert::metrics::evaluate_ner;
use kbert::tensor::Matrix;
use kbert::tokenizer::build_vocab;
use kbert::train::{cls_features, evaluate, predict, prepare_classification, prepare_tagging, PreparedExample};
use kbert::{
    load_kg, train, HeadKind, KBert, KnowledgeGraph, ModelConfig, Pipeline, TokenizeMode, Tokenizer, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(vocab_size: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        layers: 2,
        heads: 2,
        hidden,
        ff: 2 * hidden,
        max_seq_len: 32,
        dropout: 0.0,
        mask_after_scale: false,
    }
}

fn toy() -> (Tokenizer, Vec<ClassRecord>, LabelSet) {
    let texts = [
        ("the food was great", "pos"),
        ("great service today", "pos"),
        ("a great little place", "pos"),
        ("really great coffee", "pos"),
        ("great view and staff", "pos"),
        ("the food was awful", "neg"),
        ("awful service today", "neg"),
        ("an awful little place", "neg"),
        ("really awful coffee", "neg"),
        ("awful view and staff", "neg"),
    ];
    let corpus: Vec<&str> = texts.iter().map(|t| t.0).collect();
    let vocab = build_vocab(&corpus, 1, TokenizeMode::Whitespace).unwrap();
    let records = texts
        .iter()
        .map(|(t, l)| ClassRecord {
            text: t.to_string(),
            pair: None,
            label: l.to_string(),
        })
        .collect();
    (
        Tokenizer::new(vocab, TokenizeMode::Whitespace),
        records,
        LabelSet::new(["neg", "pos"]),
    )
}

fn toy_examples() -> (Vec<PreparedExample>, LabelSet, usize) {
    let (tok, records, labels) = toy();
    let kg = KnowledgeGraph::default();
    let examples = prepare_classification(&Pipeline::new(&tok, &kg, 32), &records, &labels).unwrap();
    (examples, labels, tok.vocab().len())
}

#[test]
fn separable_toy_is_learned() {
    let (examples, labels, vocab) = toy_examples();
    let mut net = KBert::new(config(vocab, 16), HeadKind::Classify, 2, 7).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 2,
        epochs: 20,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &examples, &examples, &labels, &cfg).unwrap();
    let last = report.last().unwrap();
    assert_eq!(last.dev.accuracy, 1.0, "{}", report.json_lines());
    assert!(last.train_loss < report.epochs[0].train_loss);
}

#[test]
fn training_is_deterministic_per_seed() {
    let (examples, labels, vocab) = toy_examples();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = |cfg: &TrainConfig| {
        let mut net = KBert::new(config(vocab, 8), HeadKind::Classify, 2, 3).unwrap();
        let report = train(&mut net, &examples, &examples, &labels, cfg).unwrap();
        (net, report)
    };
    let (a, ra) = run(&cfg);
    let (b, rb) = run(&cfg);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let (c, _) = run(&TrainConfig { seed: 12, ..cfg });
    assert_ne!(a, c);
}

#[test]
fn frozen_encoder_only_moves_the_head() {
    let (examples, labels, vocab) = toy_examples();
    let before = KBert::new(config(vocab, 8), HeadKind::Classify, 2, 5).unwrap();
    let mut net = before.clone();
    let cfg = TrainConfig {
        epochs: 2,
        freeze_encoder: true,
        ..TrainConfig::default()
    };
    train(&mut net, &examples, &examples, &labels, &cfg).unwrap();
    assert_eq!(net.model, before.model);
    assert_ne!(net.head, before.head);
}

/// Binary logistic regression by Newton's method on `[x, 1]`; returns the
/// minimal mean negative log-likelihood.
fn newton_logistic_loss(x: &Matrix, y: &[usize]) -> f64 {
    let n = x.rows();
    let d = x.cols() + 1;
    let feat = |i: usize, j: usize| if j + 1 == d { 1.0 } else { x.get(i, j) };
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let loss = |w: &[f64]| {
        (0..n)
            .map(|i| {
                let z: f64 = (0..d).map(|j| w[j] * feat(i, j)).sum();
                // log(1 + e^z) - y z, written stably
                let softplus = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                softplus - y[i] as f64 * z
            })
            .sum::<f64>()
            / n as f64
    };
    let mut w = vec![0.0; d];
    for _ in 0..100 {
        let mut g = vec![0.0; d];
        let mut h = vec![vec![0.0; d]; d];
        for i in 0..n {
            let z: f64 = (0..d).map(|j| w[j] * feat(i, j)).sum();
            let p = sigmoid(z);
            for a in 0..d {
                g[a] += (p - y[i] as f64) * feat(i, a) / n as f64;
                for b in 0..d {
                    h[a][b] += p * (1.0 - p) * feat(i, a) * feat(i, b) / n as f64;
                }
            }
        }
        for (a, row) in h.iter_mut().enumerate() {
            row[a] += 1e-12;
        }
        // Solve h · step = g by Gaussian elimination with partial pivoting.
        let mut aug: Vec<Vec<f64>> = h
            .iter()
            .zip(&g)
            .map(|(r, &gi)| r.iter().copied().chain([gi]).collect())
            .collect();
        for c in 0..d {
            let piv = (c..d)
                .max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs()))
                .unwrap();
            aug.swap(c, piv);
            for r in 0..d {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for k in c..=d {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        let step: Vec<f64> = (0..d).map(|r| aug[r][d] / aug[r][r]).collect();
        let mut t = 1.0;
        let current = loss(&w);
        loop {
            let cand: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi - t * si).collect();
            if loss(&cand) <= current || t < 1e-8 {
                w = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-12 {
            break;
        }
    }
    loss(&w)
}

#[test]
fn frozen_encoder_reaches_logistic_regression_optimum() {
    // Random labels over random sentences: not linearly separable in the
    // [CLS] features, so the optimum is finite.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let records: Vec<ClassRecord> = (0..200)
        .map(|_| {
            let len = rng.random_range(2..6);
            let text = (0..len)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ");
            ClassRecord {
                text,
                pair: None,
                label: if rng.random_bool(0.5) { "x" } else { "y" }.into(),
            }
        })
        .collect();
    let vocab = build_vocab(&words, 1, TokenizeMode::Whitespace).unwrap();
    let tok = Tokenizer::new(vocab, TokenizeMode::Whitespace);
    let kg = KnowledgeGraph::default();
    let labels = LabelSet::new(["x", "y"]);
    let examples = prepare_classification(&Pipeline::new(&tok, &kg, 32), &records, &labels).unwrap();

    // At the default init scale the [CLS] rows barely differ between
    // sentences; widen the frozen feature map so the optimum is reachable.
    let mut net = KBert::new(config(tok.vocab().len(), 4), HeadKind::Classify, 2, 9).unwrap();
    net.model.visit_mut("", &mut |name, m| {
        if name.starts_with("embeddings") || name.ends_with("weight") {
            m.scale(30.0);
        }
    });
    let feats = cls_features(&net, &examples).unwrap();
    let y: Vec<usize> = examples.iter().map(|e| e.targets[0].unwrap()).collect();
    let optimum = newton_logistic_loss(&feats, &y);

    let cfg = TrainConfig {
        learning_rate: 0.05,
        batch_size: examples.len(),
        epochs: 600,
        freeze_encoder: true,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &examples, &examples, &labels, &cfg).unwrap();
    let reached = report.last().unwrap().dev.loss;
    assert!(
        (reached - optimum).abs() <= 1e-3,
        "trained loss {reached} vs logistic optimum {optimum}"
    );
}

fn ner_setup() -> (
    Tokenizer,
    KnowledgeGraph,
    Vec<kbert::data::TagRecord>,
    Vec<kbert::data::TagRecord>,
) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let train_recs = load_conll(dir.join("sample_train.conll")).unwrap();
    let dev_recs = load_conll(dir.join("sample_dev.conll")).unwrap();
    let kg = load_kg(dir.join("sample_kg.tsv")).unwrap();
    let mut corpus: Vec<String> = train_recs.iter().chain(&dev_recs).map(|r| r.tokens.join(" ")).collect();
    corpus.extend(kg.triples().iter().map(|t| format!("{} {}", t.relation, t.tail)));
    let vocab = build_vocab(&corpus, 1, TokenizeMode::Whitespace).unwrap();
    (
        Tokenizer::new(vocab, TokenizeMode::Whitespace),
        kg,
        train_recs,
        dev_recs,
    )
}

/// Spans as maximal intervals: starts at `B-X`, or at an `I-X` not preceded
/// by a tag of the same label; continues over `I-X`.
fn interval_spans(tags: &[String]) -> HashSet<(usize, usize, String)> {
    let parse = |t: &str| -> Option<(bool, String)> {
        let (p, l) = t.split_once('-')?;
        if l.is_empty() {
            return None;
        }
        match p {
            "B" => Some((true, l.to_string())),
            "I" => Some((false, l.to_string())),
            _ => None,
        }
    };
    let mut out = HashSet::new();
    for i in 0..tags.len() {
        let Some((begin, label)) = parse(&tags[i]) else {
            continue;
        };
        let prev_same = i > 0 && parse(&tags[i - 1]).is_some_and(|(_, l)| l == label);
        if !begin && prev_same {
            continue;
        }
        let mut j = i + 1;
        while j < tags.len() && parse(&tags[j]) == Some((false, label.clone())) {
            j += 1;
        }
        out.insert((i, j, label));
    }
    out
}

fn oracle_f1(pred: &[Vec<String>], gold: &[Vec<String>]) -> f64 {
    let (mut hit, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let ps = interval_spans(p);
        let gs = interval_spans(g);
        hit += ps.intersection(&gs).count();
        np += ps.len();
        ng += gs.len();
    }
    if hit == 0 {
        return 0.0;
    }
    let (p, r) = (hit as f64 / np as f64, hit as f64 / ng as f64);
    2.0 * p * r / (p + r)
}

#[test]
fn tagging_reports_span_scores_that_match_an_oracle() {
    let (tok, kg, train_recs, dev_recs) = ner_setup();
    let tags: Vec<String> = train_recs
        .iter()
        .chain(&dev_recs)
        .flat_map(|r| r.tags.clone())
        .collect();
    let labels = LabelSet::new(tags);
    let pipeline = Pipeline::new(&tok, &kg, 32);
    let train_set = prepare_tagging(&pipeline, &train_recs, &labels).unwrap();
    let dev_set = prepare_tagging(&pipeline, &dev_recs, &labels).unwrap();
    let mut net = KBert::new(config(tok.vocab().len(), 16), HeadKind::Tag, labels.len(), 1).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 2,
        epochs: 30,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &train_set, &train_set, &labels, &cfg).unwrap();
    let reported = report.last().unwrap().dev.spans.unwrap().f1;
    assert!(reported > 0.9, "{}", report.json_lines());

    for set in [&train_set, &dev_set] {
        let metrics = evaluate(&net, set, &labels).unwrap();
        let mut pred = Vec::new();
        let mut gold = Vec::new();
        for ex in set.iter() {
            let p = predict(&net, &ex.input).unwrap();
            pred.push(p.iter().map(|&c| labels.name(c).to_string()).collect::<Vec<_>>());
            gold.push(
                ex.targets
                    .iter()
                    .map(|t| labels.name(t.unwrap()).to_string())
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(metrics.spans.unwrap().f1, oracle_f1(&pred, &gold));
    }
}

#[test]
fn non_finite_parameters_are_reported() {
    let (examples, labels, vocab) = toy_examples();
    let mut net = KBert::new(config(vocab, 8), HeadKind::Classify, 2, 3).unwrap();
    net.head.proj.weight.set(0, 0, f64::NAN);
    let err = train(&mut net, &examples, &examples, &labels, &TrainConfig::default()).unwrap_err();
    assert!(err.to_string().to_lowercase().contains("finite"), "{err}");
    assert!(!net.all_finite());
}

fn tag_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("O".to_string()),
        Just("B-PER".to_string()),
        Just("I-PER".to_string()),
        Just("B-LOC".to_string()),
        Just("I-LOC".to_string()),
    ]
}

proptest! {
    #[test]
    fn ner_scores_match_interval_oracle(
        pairs in proptest::collection::vec(
            (1usize..12).prop_flat_map(|n| (
                proptest::collection::vec(tag_strategy(), n),
                proptest::collection::vec(tag_strategy(), n),
            )),
            1..6,
        )
    ) {
        let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let got = evaluate_ner(&pred, &gold).unwrap();
        prop_assert!((got.f1 - oracle_f1(&pred, &gold)).abs() < 1e-15);
    }
}
