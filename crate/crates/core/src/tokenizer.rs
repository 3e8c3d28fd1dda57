//! Vocabulary and the two tokenization modes: word-level (whitespace) and
//! character-level.
//!
//! The vocabulary file is plain UTF-8 with one token per line; the line
//! number is the id. The first five lines are always the special tokens in
//! the order `[PAD]`, `[UNK]`, `[CLS]`, `[SEP]`, `[MASK]`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Special tokens in their fixed file order.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;
pub const CLS_ID: TokenId = 2;
pub const SEP_ID: TokenId = 3;
pub const MASK_ID: TokenId = 4;

fn is_special(s: &str) -> bool {
    SPECIAL_TOKENS.contains(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizeMode {
    /// One token per unicode scalar value, whitespace dropped.
    Char,
    /// One token per run of non-whitespace characters.
    #[default]
    Whitespace,
}

impl TokenizeMode {
    /// Splits text into surface strings without consulting a vocabulary.
    pub fn split(self, text: &str) -> Vec<String> {
        match self {
            TokenizeMode::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            TokenizeMode::Whitespace => text.split_whitespace().map(String::from).collect(),
        }
    }

    /// Joins surfaces back into text. Char mode concatenates, word mode puts
    /// one space between words.
    pub fn join<S: AsRef<str>>(self, surfaces: &[S]) -> String {
        let sep = match self {
            TokenizeMode::Char => "",
            TokenizeMode::Whitespace => " ",
        };
        let mut out = String::new();
        for (i, s) in surfaces.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            out.push_str(s.as_ref());
        }
        out
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenizeMode::Char => "char",
            TokenizeMode::Whitespace => "whitespace",
        }
    }
}

impl fmt::Display for TokenizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(TokenizeMode::Char),
            "whitespace" | "word" => Ok(TokenizeMode::Whitespace),
            other => Err(Error::Config(format!("unknown tokenize mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
}

impl Token {
    pub fn new(id: TokenId, surface: impl Into<String>) -> Self {
        Token {
            id,
            surface: surface.into(),
        }
    }

    pub fn is_special(&self) -> bool {
        matches!(self.id, PAD_ID | CLS_ID | SEP_ID | MASK_ID) && is_special(&self.surface)
    }
}

/// Dense, 0-based token ids. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. The list must start
    /// with the five special tokens and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len() || tokens.iter().zip(SPECIAL_TOKENS).any(|(a, b)| a != b) {
            return Err(Error::Vocabulary(format!(
                "first {} entries must be {:?}",
                SPECIAL_TOKENS.len(),
                SPECIAL_TOKENS
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(|c| c == '\n' || c == '\r') {
                return Err(Error::Vocabulary(format!("invalid token at id {id}")));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id for a surface, falling back to `[UNK]`. Special-token strings
    /// appearing in text never map to their special ids.
    pub fn lookup(&self, surface: &str) -> TokenId {
        if is_special(surface) {
            return UNK_ID;
        }
        self.id(surface).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for tok in &self.tokens {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in BufReader::new(r).lines() {
            tokens.push(line?);
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}

/// Builds a vocabulary from a corpus: specials first, then every token seen
/// at least `min_count` times, by descending count with lexicographic ties.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_count: usize, mode: TokenizeMode) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in corpus {
        for surface in mode.split(line.as_ref()) {
            if !is_special(&surface) {
                *counts.entry(surface).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(s, _)| s))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Tokenizes `text`; unknown surfaces get the `[UNK]` id but keep their
/// original surface string.
pub fn tokenize(text: &str, mode: TokenizeMode, vocab: &Vocabulary) -> Vec<Token> {
    mode.split(text)
        .into_iter()
        .map(|s| Token::new(vocab.lookup(&s), s))
        .collect()
}

pub fn detokenize(tokens: &[Token], mode: TokenizeMode) -> String {
    let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    mode.join(&surfaces)
}

/// A vocabulary paired with a fixed tokenization mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: Vocabulary,
    mode: TokenizeMode,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary, mode: TokenizeMode) -> Self {
        Tokenizer { vocab, mode }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn mode(&self) -> TokenizeMode {
        self.mode
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        tokenize(text, self.mode, &self.vocab)
    }

    /// Maps pre-split surfaces (e.g. a CoNLL column) to tokens.
    pub fn tokens_from_surfaces<S: AsRef<str>>(&self, surfaces: &[S]) -> Vec<Token> {
        surfaces
            .iter()
            .map(|s| Token::new(self.vocab.lookup(s.as_ref()), s.as_ref()))
            .collect()
    }

    pub fn detokenize(&self, tokens: &[Token]) -> String {
        detokenize(tokens, self.mode)
    }

    pub fn special(&self, id: TokenId) -> Token {
        Token::new(id, SPECIAL_TOKENS[id as usize])
    }
}
