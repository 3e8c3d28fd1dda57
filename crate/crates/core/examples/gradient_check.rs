//! Compares the hand-written reverse pass with central differences on a
//! small tagging model and reports the worst relative error per tensor.
//!
//! cargo run --release --example gradient_check

use std::path::Path;

use kbert::layers::cross_entropy;
use kbert::tokenizer::build_vocab;
use kbert::{load_kg, HeadKind, KBert, ModelConfig, Parameters, Pipeline, TokenizeMode, Tokenizer};

fn main() -> kbert::Result<()> {
    let kg = load_kg(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_kg.tsv"))?;
    let vocab = build_vocab(&["Tim Cook CEO Apple"], 1, TokenizeMode::Whitespace)?;
    let tokenizer = Tokenizer::new(vocab, TokenizeMode::Whitespace);
    let input = Pipeline::new(&tokenizer, &kg, 16).encode_text("Tim Cook", None)?.input;
    let config = ModelConfig {
        vocab_size: tokenizer.vocab().len(),
        layers: 2,
        heads: 2,
        hidden: 8,
        ff: 16,
        max_seq_len: 8,
        dropout: 0.0,
        mask_after_scale: false,
    };
    let net = KBert::new(config, HeadKind::Tag, 3, 4)?;
    let targets = [Some(2), Some(0)];
    let loss = |n: &KBert| cross_entropy(&n.logits(&input).unwrap(), &targets).0;

    let pass = net.forward(&input)?;
    let (_, d_logits) = cross_entropy(&pass.logits, &targets);
    let mut grads = net.zeros_like();
    net.backward(&input, &pass, &d_logits, &mut grads);

    let eps = 1e-4;
    let mut overall: f64 = 0.0;
    for (t, (name, g)) in grads.named_tensors().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (e, &a) in g.as_slice().iter().enumerate() {
            let shifted = |d: f64| {
                let mut c = net.clone();
                c.named_tensors_mut()[t].1.as_mut_slice()[e] += d;
                loss(&c)
            };
            let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{name:<32} {:>5} values  max rel err {worst:.2e}", g.as_slice().len());
        overall = overall.max(worst);
    }
    println!("overall {overall:.2e}");
    Ok(())
}
