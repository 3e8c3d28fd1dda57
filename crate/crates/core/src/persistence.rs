//! `.kbt` checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  b"KBTCKPT\0"
//! version      u32      currently 1
//! config       u64 × 6  vocab_size layers heads hidden ff max_seq_len
//!              f64      dropout
//!              u8       mask_after_scale
//! tokenizer    u8       0 = char, 1 = whitespace
//! head         u8       0 = classify, 1 = tag
//! converter    u32 len + bytes   reserved, empty when written here
//! vocabulary   u64 count, then per token: u32 len + UTF-8
//! labels       u64 count, then per label: u32 len + UTF-8
//! tensors      u64 count, then per tensor:
//!                u32 len + UTF-8 name, u64 rows, u64 cols, rows·cols × f64
//! checksum     32 bytes SHA-256 of everything above
//! ```
//!
//! Tensors are written in the model's visiting order, so equal models give
//! equal bytes.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::LabelSet;
use crate::error::{Error, Result};
use crate::layers::Parameters;
use crate::model::{HeadKind, KBert};
use crate::tensor::Matrix;
use crate::tokenizer::{TokenizeMode, Tokenizer, Vocabulary};
use crate::transformer::ModelConfig;

pub const MAGIC: &[u8; 8] = b"KBTCKPT\0";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Everything needed to run a trained model on raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: KBert,
    pub tokenizer: Tokenizer,
    pub labels: LabelSet,
}

impl Checkpoint {
    pub fn new(net: KBert, tokenizer: Tokenizer, labels: LabelSet) -> Result<Self> {
        if labels.len() != net.head.classes() {
            return Err(Error::Config(format!(
                "{} labels for a head with {} classes",
                labels.len(),
                net.head.classes()
            )));
        }
        if tokenizer.vocab().len() != net.config().vocab_size {
            return Err(Error::Config(format!(
                "vocabulary of {} for a model with vocab_size {}",
                tokenizer.vocab().len(),
                net.config().vocab_size
            )));
        }
        Ok(Checkpoint { net, tokenizer, labels })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn strings(&mut self, items: &[String]) {
        self.u64(items.len() as u64);
        for s in items {
            self.bytes(s.as_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Corrupt(format!("count {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corrupt("invalid UTF-8 string".into()))
    }
    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.usize()?;
        // Every string costs at least its 4-byte length prefix.
        if n > self.remaining() / 4 {
            return Err(Error::Corrupt(format!("string count {n} exceeds file size")));
        }
        (0..n).map(|_| self.string()).collect()
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Header fields and tensor inventory, without building a model.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub version: u32,
    pub config: ModelConfig,
    pub mode: TokenizeMode,
    pub head: HeadKind,
    pub converter: Vec<u8>,
    pub vocab: Vec<String>,
    pub labels: Vec<String>,
    /// `(name, rows, cols)` in file order.
    pub tensors: Vec<(String, usize, usize)>,
    pub checksum: [u8; CHECKSUM_LEN],
}

impl CheckpointInfo {
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|(_, r, c)| r * c).sum()
    }
}

impl fmt::Display for CheckpointInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "format       kbt v{}", self.version)?;
        writeln!(
            f,
            "config       vocab={} layers={} heads={} hidden={} ff={} max_seq_len={} dropout={} mask_after_scale={}",
            c.vocab_size, c.layers, c.heads, c.hidden, c.ff, c.max_seq_len, c.dropout, c.mask_after_scale
        )?;
        writeln!(f, "tokenizer    {}", self.mode)?;
        let head = match self.head {
            HeadKind::Classify => "classify",
            HeadKind::Tag => "tag",
        };
        writeln!(
            f,
            "head         {head} ({} labels: {})",
            self.labels.len(),
            self.labels.join(",")
        )?;
        writeln!(f, "vocabulary   {} tokens", self.vocab.len())?;
        writeln!(f, "converter    {} bytes", self.converter.len())?;
        writeln!(f, "parameters   {}", self.param_count())?;
        write!(f, "checksum     ")?;
        for b in &self.checksum {
            write!(f, "{b:02x}")?;
        }
        writeln!(f)?;
        writeln!(f, "tensors      {}", self.tensors.len())?;
        for (name, r, c) in &self.tensors {
            writeln!(f, "  {name:<40} {r:>6} x {c:<6}")?;
        }
        Ok(())
    }
}

fn mode_byte(mode: TokenizeMode) -> u8 {
    match mode {
        TokenizeMode::Char => 0,
        TokenizeMode::Whitespace => 1,
    }
}

fn head_byte(kind: HeadKind) -> u8 {
    match kind {
        HeadKind::Classify => 0,
        HeadKind::Tag => 1,
    }
}

/// Serializes a checkpoint. Fails on any non-finite parameter.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let c = ckpt.net.config();
    for v in [c.vocab_size, c.layers, c.heads, c.hidden, c.ff, c.max_seq_len] {
        w.u64(v as u64);
    }
    w.f64(c.dropout);
    w.u8(c.mask_after_scale as u8);
    w.u8(mode_byte(ckpt.tokenizer.mode()));
    w.u8(head_byte(ckpt.net.head.kind));
    w.bytes(&[]);
    w.strings(ckpt.tokenizer.vocab().tokens());
    w.strings(ckpt.labels.labels());
    let tensors = ckpt.net.named_tensors();
    w.u64(tensors.len() as u64);
    for (name, m) in tensors {
        if !m.is_finite() {
            return Err(Error::NonFiniteTensor(name));
        }
        w.bytes(name.as_bytes());
        w.u64(m.rows() as u64);
        w.u64(m.cols() as u64);
        for &x in m.as_slice() {
            w.f64(x);
        }
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

struct Parsed {
    info: CheckpointInfo,
    data: HashMap<String, Matrix>,
}

fn parse(bytes: &[u8], keep_data: bool) -> Result<Parsed> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < r.pos + CHECKSUM_LEN {
        return Err(Error::Corrupt("file too short for checksum".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Checksum);
    }
    let mut r = Reader { buf: body, pos: r.pos };

    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let dropout = r.f64()?;
    let mask_after_scale = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Corrupt(format!("bad mask flag {b}"))),
    };
    let config = ModelConfig {
        vocab_size: dims[0],
        layers: dims[1],
        heads: dims[2],
        hidden: dims[3],
        ff: dims[4],
        max_seq_len: dims[5],
        dropout,
        mask_after_scale,
    };
    let mode = match r.u8()? {
        0 => TokenizeMode::Char,
        1 => TokenizeMode::Whitespace,
        b => return Err(Error::Corrupt(format!("bad tokenizer mode {b}"))),
    };
    let head = match r.u8()? {
        0 => HeadKind::Classify,
        1 => HeadKind::Tag,
        b => return Err(Error::Corrupt(format!("bad head kind {b}"))),
    };
    let n = r.u32()? as usize;
    let converter = r.take(n)?.to_vec();
    let vocab = r.strings()?;
    let labels = r.strings()?;

    let count = r.usize()?;
    let mut tensors = Vec::new();
    let mut data = HashMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l <= r.remaining() / 8)
            .ok_or_else(|| Error::Corrupt(format!("tensor `{name}` larger than the file")))?;
        if keep_data {
            let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            if data
                .insert(name.clone(), Matrix::from_vec(rows, cols, values))
                .is_some()
            {
                return Err(Error::Corrupt(format!("duplicate tensor `{name}`")));
            }
        } else {
            r.take(len * 8)?;
        }
        tensors.push((name, rows, cols));
    }
    if r.remaining() != 0 {
        return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
    }
    let mut checksum = [0u8; CHECKSUM_LEN];
    checksum.copy_from_slice(sum);
    Ok(Parsed {
        info: CheckpointInfo {
            version,
            config,
            mode,
            head,
            converter,
            vocab,
            labels,
            tensors,
            checksum,
        },
        data,
    })
}

/// Reads header and inventory; verifies magic, version and checksum.
pub fn inspect_bytes(bytes: &[u8]) -> Result<CheckpointInfo> {
    Ok(parse(bytes, false)?.info)
}

/// Parameter count a header describes, or `None` on overflow.
fn implied_params(c: &ModelConfig, classes: usize) -> Option<usize> {
    let h = c.hidden;
    let linear = |i: usize, o: usize| i.checked_mul(o)?.checked_add(o);
    let block = [
        linear(h, h)?.checked_mul(4)?,
        h.checked_mul(4)?,
        linear(h, c.ff)?,
        linear(c.ff, h)?,
    ]
    .into_iter()
    .try_fold(0usize, |a, b| a.checked_add(b))?;
    let tables = c
        .vocab_size
        .checked_add(c.max_seq_len)?
        .checked_add(2)?
        .checked_mul(h)?;
    tables
        .checked_add(block.checked_mul(c.layers)?)?
        .checked_add(linear(h, classes)?)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let Parsed { info, mut data } = parse(bytes, true)?;
    info.config.validate()?;
    // Refuse to allocate a model larger than the payload before comparing
    // shapes one by one.
    let present: usize = data.values().map(|m| m.as_slice().len()).sum();
    match implied_params(&info.config, info.labels.len()) {
        Some(n) if n <= present.saturating_mul(4).saturating_add(1 << 16) => {}
        _ => return Err(Error::Corrupt("header dimensions exceed the tensor payload".into())),
    }
    let vocab = Vocabulary::from_tokens(info.vocab)?;
    let labels = LabelSet::from_labels(info.labels);
    let mut net = KBert::new(info.config, info.head, labels.len(), 0)?;
    let mut failure = None;
    net.visit_mut("", &mut |name, m| {
        if failure.is_some() {
            return;
        }
        match data.remove(&name) {
            None => failure = Some(Error::Corrupt(format!("missing tensor `{name}`"))),
            Some(t) if t.shape() != m.shape() => {
                failure = Some(Error::ShapeMismatch {
                    name,
                    expected: m.shape(),
                    found: t.shape(),
                })
            }
            Some(t) => *m = t,
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(name) = data.keys().min() {
        return Err(Error::Corrupt(format!("unexpected tensor `{name}`")));
    }
    Checkpoint::new(net, Tokenizer::new(vocab, info.mode), labels)
}

pub fn save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(ckpt)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn inspect(path: impl AsRef<Path>) -> Result<CheckpointInfo> {
    let path = path.as_ref();
    inspect_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
