//! Saves a freshly built model, prints the inspector view, loads it back
//! and confirms the logits and bytes are unchanged.
//!
//! cargo run --example checkpoint_roundtrip -- [path]

use kbert::data::LabelSet;
use kbert::persistence::{inspect, load, save, to_bytes, Checkpoint};
use kbert::tokenizer::build_vocab;
use kbert::{HeadKind, KBert, ModelConfig, TokenizeMode, Tokenizer};

fn main() -> kbert::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("kbert_example.kbt"));
    let tokenizer = Tokenizer::new(
        build_vocab(&["Tim Cook is visiting Beijing now"], 1, TokenizeMode::Whitespace)?,
        TokenizeMode::Whitespace,
    );
    let mut config = ModelConfig::desk(tokenizer.vocab().len());
    config.max_seq_len = 32;
    let net = KBert::new(config, HeadKind::Classify, 2, 9)?;
    let ckpt = Checkpoint::new(net, tokenizer, LabelSet::new(["business", "travel"]))?;
    save(&ckpt, &path)?;
    println!("{}", inspect(&path)?);

    let back = load(&path)?;
    let input = kbert::Pipeline::new(&back.tokenizer, &kbert::KnowledgeGraph::default(), 32)
        .encode_text("Tim Cook is visiting Beijing now", None)?
        .input;
    let same_logits = ckpt.net.logits(&input)?.as_slice() == back.net.logits(&input)?.as_slice();
    let same_bytes = to_bytes(&ckpt)? == to_bytes(&back)?;
    println!("logits identical: {same_logits}, bytes identical: {same_bytes}");
    Ok(())
}
