//! Triple store and entity lookup.
//!
//! A knowledge graph file is UTF-8 TSV with exactly three columns per line,
//! `head<TAB>relation<TAB>tail`. Lines starting with `#` and blank lines are
//! skipped. Triples whose head or tail is shorter than two characters, or
//! that contain control characters, are dropped at load time and counted.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{Token, TokenizeMode};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    /// Refinement rule applied on load: entity names of at least two
    /// characters, a non-empty relation, no control characters anywhere.
    pub fn passes_refinement(&self) -> bool {
        let clean = |s: &str| !s.chars().any(char::is_control);
        self.head.chars().count() >= 2
            && self.tail.chars().count() >= 2
            && !self.relation.is_empty()
            && clean(&self.head)
            && clean(&self.relation)
            && clean(&self.tail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    index: HashMap<String, Vec<usize>>,
    dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KgStats {
    pub triples: usize,
    pub entities: usize,
    pub dropped: usize,
}

impl KnowledgeGraph {
    /// Builds a graph from triples, dropping (and counting) any that fail
    /// refinement.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = KnowledgeGraph::default();
        for t in triples {
            kg.push(t);
        }
        kg
    }

    fn push(&mut self, triple: Triple) {
        if !triple.passes_refinement() {
            self.dropped += 1;
            return;
        }
        self.index
            .entry(triple.head.clone())
            .or_default()
            .push(self.triples.len());
        self.triples.push(triple);
    }

    pub fn parse<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut kg = KnowledgeGraph::default();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: n + 1,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            kg.push(Triple::new(cols[0].trim(), cols[1].trim(), cols[2].trim()));
        }
        Ok(kg)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Number of triples rejected by refinement.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn entity_count(&self) -> usize {
        self.index.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Triples with the given head, in file order.
    pub fn triples_of<'a>(&'a self, head: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.index
            .get(head)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    pub fn stats(&self) -> KgStats {
        KgStats {
            triples: self.len(),
            entities: self.entity_count(),
            dropped: self.dropped,
        }
    }
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    KnowledgeGraph::parse(file, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLimits {
    pub max_triples_per_entity: usize,
    pub max_entities_per_sentence: usize,
}

impl Default for QueryLimits {
    fn default() -> Self {
        QueryLimits {
            max_triples_per_entity: 2,
            max_entities_per_sentence: 8,
        }
    }
}

/// One entity occurrence in a sentence, with the triples selected for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntityMatch {
    /// Half-open token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub entity: String,
    pub triples: Vec<Triple>,
}

impl EntityMatch {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Normalized surface key used for matching. Word mode compares
/// case-insensitively with single spaces; char mode compares the exact
/// characters with whitespace removed.
pub fn match_key(text: &str, mode: TokenizeMode) -> String {
    match mode {
        TokenizeMode::Char => text.chars().filter(|c| !c.is_whitespace()).collect(),
        TokenizeMode::Whitespace => text
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Dictionary matcher over head-entity names, built once per graph and mode.
#[derive(Debug, Clone)]
pub struct EntityMatcher<'kg> {
    kg: &'kg KnowledgeGraph,
    mode: TokenizeMode,
    heads: HashMap<String, &'kg str>,
    max_window: usize,
}

impl<'kg> EntityMatcher<'kg> {
    pub fn new(kg: &'kg KnowledgeGraph, mode: TokenizeMode) -> Self {
        let mut heads: HashMap<String, &'kg str> = HashMap::new();
        let mut max_window = 0;
        for head in kg.entities() {
            let key = match_key(head, mode);
            if key.is_empty() {
                continue;
            }
            max_window = max_window.max(mode.split(head).len());
            // Heads that collide after normalization resolve to the smallest
            // name so the result does not depend on file order.
            heads
                .entry(key)
                .and_modify(|h| {
                    if head < *h {
                        *h = head;
                    }
                })
                .or_insert(head);
        }
        EntityMatcher {
            kg,
            mode,
            heads,
            max_window,
        }
    }

    pub fn mode(&self) -> TokenizeMode {
        self.mode
    }

    fn window_key(&self, tokens: &[Token]) -> Option<String> {
        if tokens.iter().any(Token::is_special) {
            return None;
        }
        let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
        Some(match_key(&self.mode.join(&surfaces), self.mode))
    }

    /// Greedy longest match, left to right, non-overlapping.
    pub fn query(&self, tokens: &[Token], limits: QueryLimits) -> Vec<EntityMatch> {
        let mut matches = Vec::new();
        if self.heads.is_empty() || limits.max_triples_per_entity == 0 {
            return matches;
        }
        let n = tokens.len();
        let mut i = 0;
        while i < n && matches.len() < limits.max_entities_per_sentence {
            let longest = (1..=self.max_window.min(n - i)).rev().find_map(|len| {
                let key = self.window_key(&tokens[i..i + len])?;
                self.heads.get(&key).map(|head| (len, *head))
            });
            match longest {
                Some((len, head)) => {
                    let triples: Vec<Triple> = self
                        .kg
                        .triples_of(head)
                        .take(limits.max_triples_per_entity)
                        .cloned()
                        .collect();
                    matches.push(EntityMatch {
                        start: i,
                        end: i + len,
                        entity: head.to_string(),
                        triples,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        matches
    }
}

/// K-Query: locate head entities in a token sequence and fetch their triples.
pub fn k_query(tokens: &[Token], kg: &KnowledgeGraph, limits: QueryLimits, mode: TokenizeMode) -> Vec<EntityMatch> {
    EntityMatcher::new(kg, mode).query(tokens, limits)
}
