//! Prints one head's attention weights for an untrained encoder, with and
//! without the visible matrix. Branch tokens get zero weight from [CLS] only
//! when the mask is on.
//!
//! cargo run --example attention_trace

use std::path::Path;

use kbert::tokenizer::build_vocab;
use kbert::{load_kg, HeadKind, KBert, ModelConfig, Pipeline, Switches, TokenizeMode, Tokenizer};

fn main() -> kbert::Result<()> {
    let kg = load_kg(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_kg.tsv"))?;
    let text = "Tim Cook is visiting Beijing now";
    let vocab = build_vocab(
        &[text, "CEO Apple capital China is_a City"],
        1,
        TokenizeMode::Whitespace,
    )?;
    let tokenizer = Tokenizer::new(vocab, TokenizeMode::Whitespace);
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
    let net = KBert::new(config, HeadKind::Classify, 2, 1)?;

    for (name, switches) in [
        ("masked", Switches::full()),
        ("unmasked", Switches::no_visible_matrix()),
    ] {
        let enc = Pipeline::new(&tokenizer, &kg, 32)
            .with_switches(switches)
            .encode_text(text, None)?;
        let states = net.model.encode(&enc.input)?;
        let scores = states.scores(1, 0).expect("layer 1 head 0");
        println!("{name}, layer 1 head 1:");
        let surfaces: Vec<&str> = enc.flat.tokens.iter().map(|t| t.token.surface.as_str()).collect();
        println!(
            "{:>9} {}",
            "",
            surfaces.iter().map(|s| format!("{s:>9.8}")).collect::<String>()
        );
        for (i, s) in surfaces.iter().enumerate() {
            let row: String = scores.row(i).iter().map(|p| format!("{p:>9.3}")).collect();
            println!("{s:>9} {row}");
        }
        println!();
    }
    Ok(())
}
