//! Dataset files.
//!
//! Classification: UTF-8 TSV, `text<TAB>label` (or `text<TAB>text_b<TAB>label`
//! for sentence pairs), `#` comments allowed.
//! Tagging: CoNLL style, `token<TAB>tag` per line, blank line between
//! sentences.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRecord {
    pub text: String,
    pub pair: Option<String>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRecord {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_classification<R: Read>(reader: R, source: &Path) -> Result<Vec<ClassRecord>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (text, pair, label) = match cols.as_slice() {
            [t, l] => (*t, None, *l),
            [t, p, l] => (*t, Some(p.to_string()), *l),
            _ => {
                return Err(parse_error(
                    source,
                    n + 1,
                    format!("expected 2 or 3 columns, found {}", cols.len()),
                ))
            }
        };
        if text.trim().is_empty() || label.trim().is_empty() {
            return Err(parse_error(source, n + 1, "empty text or label"));
        }
        out.push(ClassRecord {
            text: text.to_string(),
            pair,
            label: label.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn parse_conll<R: Read>(reader: R, source: &Path) -> Result<Vec<TagRecord>> {
    let mut out = Vec::new();
    let mut cur = TagRecord {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    TagRecord {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let Some((tok, tag)) = line.split_once('\t') else {
            return Err(parse_error(source, n + 1, "expected token<TAB>tag"));
        };
        if tok.is_empty() || tag.is_empty() || tag.contains('\t') {
            return Err(parse_error(source, n + 1, "expected token<TAB>tag"));
        }
        cur.tokens.push(tok.to_string());
        cur.tags.push(tag.to_string());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn load_classification(path: impl AsRef<Path>) -> Result<Vec<ClassRecord>> {
    let path = path.as_ref();
    parse_classification(open(path)?, path)
}

pub fn load_conll(path: impl AsRef<Path>) -> Result<Vec<TagRecord>> {
    let path = path.as_ref();
    parse_conll(open(path)?, path)
}

/// Sorted label inventory; a label's id is its rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        LabelSet {
            labels: set.into_iter().collect(),
        }
    }

    pub fn from_labels(labels: Vec<String>) -> Self {
        LabelSet { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Dataset(format!("unknown label `{label}`")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_rows() {
        let text = "# comment\ngood film\tpos\nbad\tfilm\tneg\n\n";
        let recs = parse_classification(text.as_bytes(), Path::new("d")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].pair.as_deref(), Some("film"));
        let err = parse_classification("only\n".as_bytes(), Path::new("d")).unwrap_err();
        assert!(err.to_string().contains("d:1"));
    }

    #[test]
    fn conll_sentences() {
        let text = "Tim\tB-PER\nCook\tI-PER\n\nBeijing\tB-LOC\n";
        let recs = parse_conll(text.as_bytes(), Path::new("c")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].tags, ["B-PER", "I-PER"]);
        assert!(parse_conll("Tim B-PER\n".as_bytes(), Path::new("c")).is_err());
    }

    #[test]
    fn labels_are_sorted() {
        let l = LabelSet::new(["pos", "neg", "pos"]);
        assert_eq!(l.labels(), ["neg", "pos"]);
        assert_eq!(l.id("pos").unwrap(), 1);
        assert!(l.id("meh").is_err());
    }
}
