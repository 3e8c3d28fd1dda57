//! Builds the sentence tree for "Tim Cook is visiting Beijing now" against
//! the bundled three-triple graph and prints the flattened sequence.
//!
//! cargo run --example inject_example -- [tsv|json]

use std::path::Path;

use kbert::inject::{render_injection, DumpFormat};
use kbert::tokenizer::build_vocab;
use kbert::{load_kg, Pipeline, TokenizeMode, Tokenizer};

fn main() -> kbert::Result<()> {
    let format = match std::env::args().nth(1).as_deref() {
        Some("json") => DumpFormat::Json,
        _ => DumpFormat::Tsv,
    };
    let kg = load_kg(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_kg.tsv"))?;
    let text = "Tim Cook is visiting Beijing now";
    let mut corpus = vec![text.to_string()];
    for t in kg.triples() {
        corpus.push(format!("{} {}", t.relation, t.tail));
    }
    let tokenizer = Tokenizer::new(
        build_vocab(&corpus, 1, TokenizeMode::Whitespace)?,
        TokenizeMode::Whitespace,
    );
    let enc = Pipeline::new(&tokenizer, &kg, 64).encode_text(text, None)?;

    let trunk: Vec<&str> = enc.tree.trunk.iter().map(|t| t.surface.as_str()).collect();
    println!("trunk: {}", trunk.join(" "));
    for b in &enc.tree.branches {
        let words: Vec<&str> = b.tokens().map(|t| t.surface.as_str()).collect();
        println!("branch at {:?}: {}", b.anchor, words.join(" "));
    }
    println!();
    print!("{}", render_injection(&enc.flat, &enc.matrix, format));
    Ok(())
}
