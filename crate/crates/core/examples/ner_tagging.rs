//! Trains the tagging head on the bundled BIO sentences and prints span
//! precision, recall and F1 plus the predicted tags of one sentence.
//!
//! cargo run --release --example ner_tagging

use std::path::Path;

use kbert::data::{load_conll, LabelSet};
use kbert::tokenizer::build_vocab;
use kbert::train::{evaluate, predict, prepare_tagging};
use kbert::{load_kg, train, HeadKind, KBert, ModelConfig, Pipeline, TokenizeMode, Tokenizer, TrainConfig};

fn main() -> kbert::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let kg = load_kg(dir.join("cities_kg.tsv"))?;
    let train_set = load_conll(dir.join("sample_train.conll"))?;
    let dev_set = load_conll(dir.join("sample_dev.conll"))?;

    let mut corpus: Vec<String> = train_set.iter().map(|r| r.tokens.join(" ")).collect();
    corpus.extend(kg.triples().iter().map(|t| format!("{} {}", t.relation, t.tail)));
    let tokenizer = Tokenizer::new(
        build_vocab(&corpus, 1, TokenizeMode::Whitespace)?,
        TokenizeMode::Whitespace,
    );
    let labels = LabelSet::new(train_set.iter().chain(&dev_set).flat_map(|r| r.tags.clone()));
    let pipeline = Pipeline::new(&tokenizer, &kg, 32);
    let train_x = prepare_tagging(&pipeline, &train_set, &labels)?;
    let dev_x = prepare_tagging(&pipeline, &dev_set, &labels)?;

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
    let mut net = KBert::new(config, HeadKind::Tag, labels.len(), 0)?;
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 2,
        epochs: 30,
        ..TrainConfig::default()
    };
    train(&mut net, &train_x, &dev_x, &labels, &cfg)?;

    for (name, set) in [("train", &train_x), ("dev", &dev_x)] {
        let m = evaluate(&net, set, &labels)?;
        let spans = m.spans.expect("tagging reports spans");
        println!(
            "{name:<5} token acc {:.3}  P {:.3}  R {:.3}  F1 {:.3}",
            m.accuracy, spans.precision, spans.recall, spans.f1
        );
    }
    let sentence = &dev_set[0];
    let tags = predict(&net, &dev_x[0].input)?;
    for ((word, gold), guess) in sentence.tokens.iter().zip(&sentence.tags).zip(tags) {
        println!("  {word:<10} {gold:<7} {}", labels.name(guess));
    }
    Ok(())
}
