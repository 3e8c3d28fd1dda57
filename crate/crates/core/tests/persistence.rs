use std::path::Path;

use kbert::data::{load_classification, LabelSet};
use kbert::persistence::{from_bytes, inspect, load, save, to_bytes, Checkpoint, MAGIC};
use kbert::tokenizer::build_vocab;
use kbert::train::prepare_classification;
use kbert::{
    load_kg, train, Error, HeadKind, KBert, ModelConfig, Parameters, Pipeline, Switches, TokenizeMode, Tokenizer,
    TrainConfig,
};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn config(vocab_size: usize, ff: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        layers: 2,
        heads: 2,
        hidden: 8,
        ff,
        max_seq_len: 32,
        dropout: 0.0,
        mask_after_scale: false,
    }
}

fn tokenizer() -> Tokenizer {
    let vocab = build_vocab(
        &["Tim Cook is visiting Beijing now CEO Apple capital China is_a City arrived in Paris"],
        1,
        TokenizeMode::Whitespace,
    )
    .unwrap();
    Tokenizer::new(vocab, TokenizeMode::Whitespace)
}

fn checkpoint(ff: usize, seed: u64) -> Checkpoint {
    let tok = tokenizer();
    let net = KBert::new(config(tok.vocab().len(), ff), HeadKind::Classify, 2, seed).unwrap();
    Checkpoint::new(net, tok, LabelSet::new(["business", "travel"])).unwrap()
}

fn reseal(bytes: &mut Vec<u8>) {
    let body = bytes.len() - 32;
    let sum = Sha256::digest(&bytes[..body]);
    bytes[body..].copy_from_slice(&sum);
}

#[test]
fn file_round_trip_is_bitwise() {
    let c = checkpoint(16, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.kbt");
    save(&c, &path).unwrap();
    let back = load(&path).unwrap();
    let a = c.net.named_tensors();
    let b = back.net.named_tensors();
    assert_eq!(a.len(), b.len());
    for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ta.shape(), tb.shape());
        assert!(
            ta.as_slice()
                .iter()
                .zip(tb.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()),
            "{na}"
        );
    }
    assert_eq!(back.tokenizer, c.tokenizer);
    assert_eq!(back.labels, c.labels);
    assert_eq!(back.net.model.config, c.net.model.config);

    let again = dir.path().join("b.kbt");
    save(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn flipped_payload_byte_fails_the_checksum() {
    let c = checkpoint(16, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.kbt");
    save(&c, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load(&path), Err(Error::Checksum)));
}

#[test]
fn unknown_version_is_reported() {
    let mut bytes = to_bytes(&checkpoint(16, 3)).unwrap();
    bytes[MAGIC.len()..MAGIC.len() + 4].copy_from_slice(&7u32.to_le_bytes());
    reseal(&mut bytes);
    let err = from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, Error::UnsupportedVersion(7)));
    assert!(err.to_string().contains("unsupported version"));
}

#[test]
fn header_config_disagreeing_with_a_tensor_names_it() {
    // Serialize a model with ff = 32, then claim ff = 16 in the header.
    let mut bytes = to_bytes(&checkpoint(32, 4)).unwrap();
    let ff_offset = MAGIC.len() + 4 + 4 * 8;
    assert_eq!(
        u64::from_le_bytes(bytes[ff_offset..ff_offset + 8].try_into().unwrap()),
        32
    );
    bytes[ff_offset..ff_offset + 8].copy_from_slice(&16u64.to_le_bytes());
    reseal(&mut bytes);
    match from_bytes(&bytes) {
        Err(Error::ShapeMismatch { name, expected, found }) => {
            assert!(name.contains("ff_in"), "{name}");
            assert_eq!(expected, (8, 16));
            assert_eq!(found, (8, 32));
        }
        other => panic!("expected a shape mismatch, got {other:?}"),
    }
}

#[test]
fn oversized_header_is_refused_before_allocation() {
    let mut bytes = to_bytes(&checkpoint(16, 4)).unwrap();
    let vocab_offset = MAGIC.len() + 4;
    bytes[vocab_offset..vocab_offset + 8].copy_from_slice(&(1u64 << 40).to_le_bytes());
    reseal(&mut bytes);
    assert!(matches!(from_bytes(&bytes), Err(Error::Corrupt(_))));
}

#[test]
fn truncated_files_are_errors() {
    let bytes = to_bytes(&checkpoint(16, 5)).unwrap();
    for cut in [0, 4, 8, 20, bytes.len() / 3, bytes.len() - 1] {
        assert!(from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}

#[test]
fn inspect_reads_the_header_and_inventory() {
    let c = checkpoint(16, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.kbt");
    save(&c, &path).unwrap();
    let info = inspect(&path).unwrap();
    assert_eq!(info.config, c.net.model.config);
    assert_eq!(info.labels, vec!["business", "travel"]);
    assert_eq!(info.tensors.len(), c.net.named_tensors().len());
    assert_eq!(info.param_count(), c.net.param_count());
}

#[test]
fn checkpoint_trained_without_knowledge_runs_with_it() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let kg = load_kg(dir.join("sample_kg.tsv")).unwrap();
    let records = load_classification(dir.join("sample_train.tsv")).unwrap();
    let tok = tokenizer();
    let labels = LabelSet::new(records.iter().map(|r| r.label.clone()));
    let plain = Pipeline::new(&tok, &kg, 32).with_switches(Switches::no_kg());
    let examples = prepare_classification(&plain, &records, &labels).unwrap();
    let mut net = KBert::new(config(tok.vocab().len(), 16), HeadKind::Classify, labels.len(), 7).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        switches: Switches::no_kg(),
        ..TrainConfig::default()
    };
    train(&mut net, &examples, &examples, &labels, &cfg).unwrap();

    let bytes = to_bytes(&Checkpoint::new(net, tok, labels).unwrap()).unwrap();
    let loaded = from_bytes(&bytes).unwrap();
    let full = Pipeline::new(&loaded.tokenizer, &kg, 32);
    let enc = full.encode_text("Tim Cook is visiting Beijing now", None).unwrap();
    assert!(!enc.tree.branches.is_empty());
    let logits = loaded.net.logits(&enc.input).unwrap();
    assert_eq!(logits.shape(), (1, 2));
    assert!(logits.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_corruption_never_panics(pos in any::<prop::sample::Index>(), byte in any::<u8>(), reseal_it in any::<bool>()) {
        let mut bytes = to_bytes(&checkpoint(16, 8)).unwrap();
        let i = pos.index(bytes.len() - 32);
        let unchanged = bytes[i] == byte;
        bytes[i] = byte;
        if reseal_it {
            reseal(&mut bytes);
        }
        let result = from_bytes(&bytes);
        if !unchanged && !reseal_it {
            prop_assert!(result.is_err());
        }
    }
}
