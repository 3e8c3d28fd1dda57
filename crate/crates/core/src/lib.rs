//! Knowledge-enabled BERT-style encoding in pure Rust.
//!
//! Knowledge-graph triples are attached to matching entities as branches of a
//! sentence tree. The tree is flattened with soft positions and a visible
//! matrix that keeps each branch private to its anchor, then run through a
//! mask-self-attention encoder with classification or tagging heads.
//!
//! The runnable programs under `examples/` walk through each piece:
//!
//! - `inject_example`: build and print a sentence tree, soft positions and visible matrix
//! - `kg_query`: longest-match entity lookup against a triple file
//! - `attention_trace`: per-head attention scores with and without the mask
//! - `gradient_check`: reverse pass against finite differences
//! - `train_classifier` / `ner_tagging`: fine-tuning with both heads
//! - `probe_ablation`: the synthetic ablation grid
//! - `checkpoint_roundtrip`: save, load and inspect `.kbt` files

pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod inject;
pub mod kg;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod persistence;
pub mod pipeline;
pub mod probe;
pub mod tensor;
pub mod tokenizer;
pub mod train;
pub mod transformer;

pub use error::{Error, Result};
pub use inject::{flatten, k_inject, visible_matrix, FlatSequence, SentenceTree, VisibleMatrix, NEG_INF};
pub use kg::{k_query, load_kg, EntityMatch, KnowledgeGraph, QueryLimits, Triple};
pub use layers::Parameters;
pub use model::{HeadKind, KBert, Model, ModelInput};
pub use pipeline::{Pipeline, Switches};
pub use tensor::Matrix;
pub use tokenizer::{TokenizeMode, Tokenizer, Vocabulary};
pub use train::{train, TrainConfig};
pub use transformer::{mask_self_attention, ModelConfig};
