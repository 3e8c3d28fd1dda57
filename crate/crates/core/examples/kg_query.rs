//! Looks up entities in a sentence with longest-match search.
//!
//! cargo run --example kg_query -- [triple file] [sentence]

use std::path::Path;

use kbert::tokenizer::build_vocab;
use kbert::{k_query, load_kg, QueryLimits, TokenizeMode, Tokenizer};

fn main() -> kbert::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("data/cities_kg.tsv")
            .display()
            .to_string()
    });
    let text = args
        .next()
        .unwrap_or_else(|| "Nadella met Pichai in Tokyo before flying to paris".into());

    let kg = load_kg(&path)?;
    let stats = kg.stats();
    println!(
        "{path}: {} triples, {} entities, {} dropped",
        stats.triples, stats.entities, stats.dropped
    );

    let tokenizer = Tokenizer::new(
        build_vocab(&[text.as_str()], 1, TokenizeMode::Whitespace)?,
        TokenizeMode::Whitespace,
    );
    let tokens = tokenizer.tokenize(&text);
    for limit in [1, 2] {
        let limits = QueryLimits {
            max_triples_per_entity: limit,
            ..QueryLimits::default()
        };
        println!("\nat most {limit} triple(s) per entity:");
        for m in k_query(&tokens, &kg, limits, TokenizeMode::Whitespace) {
            let facts: Vec<String> = m
                .triples
                .iter()
                .map(|t| format!("({}, {})", t.relation, t.tail))
                .collect();
            println!("  [{}, {}) {:<8} {}", m.start, m.end, m.entity, facts.join(" "));
        }
    }
    Ok(())
}
