//! Synthetic classification probe and the ablation grid run on it.
//!
//! Every sentence has eight words drawn from a filler list, uniformly and
//! independently, before entities are written over some of them.
//!
//! [`ProbeVariant::Knowledge`]: word 3 is the *subject*, a freshly invented
//! entity name whose category (the label) is stored only in the graph as
//! `(subject, is_a, category)`. Each of words 0-2 is a *distractor* entity
//! with probability 1/2, and one more distractor sits at a random word in
//! 4-7. Distractors carry `is_a` triples with independently drawn
//! categories. Every entity also gets a neutral colour triple (`likes` or
//! the two-token `was painted`) half of the time, in random file order, so
//! the number of branch tokens emitted before the subject varies from 0 to
//! 15 while its soft position stays 4. Entity names are unique across the
//! dataset and kept out of the vocabulary. Label information argument: the
//! label is drawn first and only written into the graph; the surface
//! (fillers, entity slots, names that all read as `[UNK]`) is drawn without
//! looking at it, so with the graph withheld every classifier is at chance.
//! With the graph, the label is the `is_a` tail attached at word 3.
//!
//! [`ProbeVariant::Misleading`]: the label is written in the sentence as a
//! category word at word 4. An entity at word 2 carries an `is_a` triple
//! whose tail is a *different* category. Its branch tail lands on the same
//! soft position as the cue word, so without the visible matrix the two are
//! indistinguishable to the encoder.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{ClassRecord, LabelSet};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::model::{HeadKind, KBert};
use crate::pipeline::{Pipeline, Switches};
use crate::tokenizer::{build_vocab, TokenizeMode, Tokenizer};
use crate::train::{evaluate, prepare_classification, train, TrainConfig};
use crate::transformer::ModelConfig;

pub const CATEGORIES: [&str; 4] = ["animal", "city", "fruit", "tool"];
pub const RELATION: &str = "is_a";
pub const SENTENCE_WORDS: usize = 8;
pub const SUBJECT_SLOT: usize = 3;
pub const LEADING_SLOTS: [usize; 3] = [0, 1, 2];
pub const TRAILING_SLOTS: [usize; 4] = [4, 5, 6, 7];
pub const MISLEADING_SLOT: usize = 2;
pub const CUE_SLOT: usize = 4;
pub const NEUTRAL_RELATIONS: [&str; 2] = ["likes", "was painted"];
pub const NEUTRAL_TAILS: [&str; 4] = ["red", "blue", "green", "gold"];

pub const FILLERS: [&str; 24] = [
    "the", "a", "one", "this", "that", "some", "we", "they", "saw", "met", "found", "heard", "near", "after", "before",
    "with", "today", "again", "quietly", "later", "here", "there", "often", "then",
];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeVariant {
    Knowledge,
    Misleading,
}

impl ProbeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeVariant::Knowledge => "knowledge",
            ProbeVariant::Misleading => "misleading",
        }
    }
}

/// One generated sentence with its hidden structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeItem {
    pub words: Vec<String>,
    pub label: usize,
    /// `(slot, name, is_a tail category)` for every entity in the sentence;
    /// the subject (or the misleading entity) comes first.
    pub entities: Vec<(usize, String, usize)>,
}

impl ProbeItem {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct ProbeDataset {
    pub variant: ProbeVariant,
    pub items: Vec<ProbeItem>,
    pub kg: KnowledgeGraph,
}

impl ProbeDataset {
    pub fn records(&self) -> Vec<ClassRecord> {
        self.items
            .iter()
            .map(|it| ClassRecord {
                text: it.text(),
                pair: None,
                label: CATEGORIES[it.label].to_string(),
            })
            .collect()
    }

    pub fn labels() -> LabelSet {
        LabelSet::new(CATEGORIES)
    }

    /// Whitespace tokenizer over fillers and graph tokens. Entity names stay
    /// out of the vocabulary: they read as `[UNK]` and are matched against
    /// the graph by surface, so no per-entity embedding can memorize labels.
    pub fn tokenizer(&self) -> Result<Tokenizer> {
        let mut corpus: Vec<String> = FILLERS.map(String::from).to_vec();
        corpus.push(RELATION.to_string());
        corpus.extend(NEUTRAL_RELATIONS.map(String::from));
        corpus.extend(CATEGORIES.map(String::from));
        corpus.extend(NEUTRAL_TAILS.map(String::from));
        let vocab = build_vocab(&corpus, 1, TokenizeMode::Whitespace)?;
        Ok(Tokenizer::new(vocab, TokenizeMode::Whitespace))
    }
}

fn fresh_name<R: Rng>(rng: &mut R, used: &mut HashSet<String>) -> String {
    loop {
        let mut name = String::new();
        for _ in 0..3 {
            name.push_str(ONSETS.choose(rng).unwrap());
            name.push_str(VOWELS.choose(rng).unwrap());
        }
        if !FILLERS.contains(&name.as_str()) && used.insert(name.clone()) {
            return name;
        }
    }
}

fn other_category<R: Rng>(rng: &mut R, not: usize) -> usize {
    (not + rng.random_range(1..CATEGORIES.len())) % CATEGORIES.len()
}

/// Seeded probe dataset of `size` sentences plus its graph.
pub fn synth_probe_dataset(seed: u64, size: usize, variant: ProbeVariant) -> Result<ProbeDataset> {
    if size < 100 {
        return Err(Error::Dataset(format!("probe size must be at least 100, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut items = Vec::with_capacity(size);
    let mut triples = Vec::new();
    for _ in 0..size {
        let label = rng.random_range(0..CATEGORIES.len());
        let mut words: Vec<String> = (0..SENTENCE_WORDS)
            .map(|_| FILLERS.choose(&mut rng).unwrap().to_string())
            .collect();
        let mut entities = Vec::new();
        match variant {
            ProbeVariant::Knowledge => {
                entities.push((SUBJECT_SLOT, fresh_name(&mut rng, &mut used), label));
                let mut slots: Vec<usize> = LEADING_SLOTS.into_iter().filter(|_| rng.random_bool(0.5)).collect();
                slots.push(*TRAILING_SLOTS.choose(&mut rng).unwrap());
                for slot in slots {
                    let tail = rng.random_range(0..CATEGORIES.len());
                    entities.push((slot, fresh_name(&mut rng, &mut used), tail));
                }
            }
            ProbeVariant::Misleading => {
                words[CUE_SLOT] = CATEGORIES[label].to_string();
                let tail = other_category(&mut rng, label);
                entities.push((MISLEADING_SLOT, fresh_name(&mut rng, &mut used), tail));
            }
        }
        for (slot, name, tail) in &entities {
            words[*slot] = name.clone();
            let is_a = Triple::new(name, RELATION, CATEGORIES[*tail]);
            if variant == ProbeVariant::Knowledge && rng.random_bool(0.5) {
                let relation = *NEUTRAL_RELATIONS.choose(&mut rng).unwrap();
                let neutral = Triple::new(name, relation, *NEUTRAL_TAILS.choose(&mut rng).unwrap());
                if rng.random_bool(0.5) {
                    triples.extend([is_a, neutral]);
                } else {
                    triples.extend([neutral, is_a]);
                }
            } else {
                triples.push(is_a);
            }
        }
        items.push(ProbeItem { words, label, entities });
    }
    Ok(ProbeDataset {
        variant,
        items,
        kg: KnowledgeGraph::from_triples(triples),
    })
}

/// Ablation cells. `NoKgNoVisibleMatrix` is included to complete the
/// kg × visible-matrix square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Full,
    NoVisibleMatrix,
    NoKg,
    NoKgNoVisibleMatrix,
    HardPosition,
}

impl Cell {
    pub const ALL: [Cell; 5] = [
        Cell::Full,
        Cell::NoVisibleMatrix,
        Cell::NoKg,
        Cell::NoKgNoVisibleMatrix,
        Cell::HardPosition,
    ];

    pub fn switches(self) -> Switches {
        match self {
            Cell::Full => Switches::full(),
            Cell::NoVisibleMatrix => Switches::no_visible_matrix(),
            Cell::NoKg => Switches::no_kg(),
            Cell::NoKgNoVisibleMatrix => Switches {
                use_kg: false,
                use_visible_matrix: false,
                use_soft_position: true,
            },
            Cell::HardPosition => Switches::no_soft_position(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cell::Full => "full",
            Cell::NoVisibleMatrix => "no_visible_matrix",
            Cell::NoKg => "no_kg",
            Cell::NoKgNoVisibleMatrix => "no_kg_no_visible_matrix",
            Cell::HardPosition => "hard_position",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeSettings {
    pub train_size: usize,
    pub test_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            train_size: 2000,
            test_size: 500,
            layers: 2,
            heads: 2,
            hidden: 32,
            ff: 64,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub variant: ProbeVariant,
    pub cell: Cell,
    pub seed: u64,
    pub accuracy: f64,
    /// Test accuracy after each epoch.
    pub curve: Vec<f64>,
}

/// Generates the seed's dataset, trains one model with the cell's switches
/// and returns its test accuracy after the last epoch.
pub fn run_cell(variant: ProbeVariant, cell: Cell, seed: u64, settings: &ProbeSettings) -> Result<CellResult> {
    let data = synth_probe_dataset(seed, settings.train_size + settings.test_size, variant)?;
    let tokenizer = data.tokenizer()?;
    let labels = ProbeDataset::labels();
    let config = ModelConfig {
        vocab_size: tokenizer.vocab().len(),
        layers: settings.layers,
        heads: settings.heads,
        hidden: settings.hidden,
        ff: settings.ff,
        max_seq_len: 32,
        dropout: 0.0,
        mask_after_scale: false,
    };
    let pipeline = Pipeline::new(&tokenizer, &data.kg, config.max_seq_len).with_switches(cell.switches());
    let records = data.records();
    let (train_recs, test_recs) = records.split_at(settings.train_size);
    let train_set = prepare_classification(&pipeline, train_recs, &labels)?;
    let test_set = prepare_classification(&pipeline, test_recs, &labels)?;
    let mut net = KBert::new(
        config,
        HeadKind::Classify,
        labels.len(),
        seed.wrapping_mul(31).wrapping_add(1),
    )?;
    let train_config = TrainConfig {
        learning_rate: settings.learning_rate,
        batch_size: settings.batch_size,
        epochs: settings.epochs,
        seed,
        switches: cell.switches(),
        freeze_encoder: false,
    };
    let report = train(&mut net, &train_set, &test_set, &labels, &train_config)?;
    let curve: Vec<f64> = report.epochs.iter().map(|e| e.dev.accuracy).collect();
    let accuracy = match curve.last() {
        Some(&a) => a,
        None => evaluate(&net, &test_set, &labels)?.accuracy,
    };
    Ok(CellResult {
        variant,
        cell,
        seed,
        accuracy,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub settings: ProbeSettings,
    pub chance: f64,
    pub results: Vec<CellResult>,
}

impl ProbeReport {
    pub fn accuracies(&self, variant: ProbeVariant, cell: Cell) -> Vec<f64> {
        self.results
            .iter()
            .filter(|r| r.variant == variant && r.cell == cell)
            .map(|r| r.accuracy)
            .collect()
    }

    pub fn mean(&self, variant: ProbeVariant, cell: Cell) -> Option<f64> {
        let a = self.accuracies(variant, cell);
        (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary {
            variant: ProbeVariant,
            cell: Cell,
            mean_accuracy: f64,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            report: &'a ProbeReport,
            summary: Vec<Summary>,
        }
        let mut summary = Vec::new();
        for variant in [ProbeVariant::Knowledge, ProbeVariant::Misleading] {
            for cell in Cell::ALL {
                if let Some(m) = self.mean(variant, cell) {
                    summary.push(Summary {
                        variant,
                        cell,
                        mean_accuracy: m,
                    });
                }
            }
        }
        let mut s = serde_json::to_string_pretty(&Out { report: self, summary }).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per (variant, cell, seed).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,cell,seed,accuracy\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{:.4}",
                r.variant.as_str(),
                r.cell.as_str(),
                r.seed,
                r.accuracy
            );
        }
        s
    }
}

/// Runs every (variant, cell) over `seeds`.
pub fn run_ablation(
    seeds: &[u64],
    variants: &[ProbeVariant],
    cells: &[Cell],
    settings: &ProbeSettings,
) -> Result<ProbeReport> {
    let mut results = Vec::new();
    for &variant in variants {
        for &cell in cells {
            for &seed in seeds {
                results.push(run_cell(variant, cell, seed, settings)?);
            }
        }
    }
    Ok(ProbeReport {
        settings: *settings,
        chance: 1.0 / CATEGORIES.len() as f64,
        results,
    })
}
