//! Fine-tunes a small classifier on the bundled sentences, with and without
//! the knowledge graph, and reports dev metrics per epoch.
//!
//! cargo run --release --example train_classifier

use std::path::Path;

use kbert::data::{load_classification, LabelSet};
use kbert::tokenizer::build_vocab;
use kbert::train::prepare_classification;
use kbert::{load_kg, train, HeadKind, KBert, ModelConfig, Pipeline, Switches, TokenizeMode, Tokenizer, TrainConfig};

fn main() -> kbert::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let kg = load_kg(dir.join("cities_kg.tsv"))?;
    let train_set = load_classification(dir.join("sample_train.tsv"))?;
    let dev_set = load_classification(dir.join("sample_dev.tsv"))?;

    let mut corpus: Vec<String> = train_set.iter().map(|r| r.text.clone()).collect();
    corpus.extend(kg.triples().iter().map(|t| format!("{} {}", t.relation, t.tail)));
    let tokenizer = Tokenizer::new(
        build_vocab(&corpus, 1, TokenizeMode::Whitespace)?,
        TokenizeMode::Whitespace,
    );
    let labels = LabelSet::new(train_set.iter().map(|r| r.label.clone()));

    for (name, switches) in [("with graph", Switches::full()), ("without graph", Switches::no_kg())] {
        let pipeline = Pipeline::new(&tokenizer, &kg, 32).with_switches(switches);
        let train_x = prepare_classification(&pipeline, &train_set, &labels)?;
        let dev_x = prepare_classification(&pipeline, &dev_set, &labels)?;
        let config = ModelConfig {
            vocab_size: tokenizer.vocab().len(),
            layers: 2,
            heads: 2,
            hidden: 16,
            ff: 32,
            max_seq_len: 32,
            dropout: 0.0,
            mask_after_scale: false,
        };
        let mut net = KBert::new(config, HeadKind::Classify, labels.len(), 0)?;
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            epochs: 10,
            switches,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &train_x, &dev_x, &labels, &cfg)?;
        println!("{name}");
        for e in &report.epochs {
            println!(
                "  epoch {:>2}  train loss {:.4}  dev acc {:.3}",
                e.epoch, e.train_loss, e.dev.accuracy
            );
        }
    }
    Ok(())
}
