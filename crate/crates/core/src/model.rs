//! The complete network: embedding tables, encoder stack and a task head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed_backward, embed_rows, EmbeddingTables};
use crate::error::{Error, Result};
use crate::inject::{FlatSequence, Segment, VisibleMatrix};
use crate::layers::{join, Linear, Parameters};
use crate::tensor::Matrix;
use crate::tokenizer::PAD_ID;
use crate::transformer::{encoder_backward, encoder_forward, Encoder, HiddenStates, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Reads the `[CLS]` row.
    Classify,
    /// Reads every sentence-token row of the trunk.
    Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub kind: HeadKind,
    pub proj: Linear,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(kind: HeadKind, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "a task head needs at least 2 classes, got {classes}"
            )));
        }
        Ok(TaskHead {
            kind,
            proj: Linear::new(hidden, classes, rng),
        })
    }

    pub fn classes(&self) -> usize {
        self.proj.outputs()
    }

    pub fn forward(&self, hidden: &Matrix, rows: &[usize]) -> Matrix {
        self.proj.forward(&hidden.select_rows(rows))
    }

    /// Returns `dL/dhidden` (zero on rows the head does not read).
    pub fn backward(&self, hidden: &Matrix, rows: &[usize], d_logits: &Matrix, grad: &mut TaskHead) -> Matrix {
        let d_sel = self.proj.backward(&hidden.select_rows(rows), d_logits, &mut grad.proj);
        let mut d = Matrix::zeros(hidden.rows(), hidden.cols());
        for (k, &r) in rows.iter().enumerate() {
            for (o, &x) in d.row_mut(r).iter_mut().zip(d_sel.row(k)) {
                *o += x;
            }
        }
        d
    }
}

impl Parameters for TaskHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.proj.visit(prefix, f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        self.proj.visit_mut(prefix, f);
    }
}

/// One sequence ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub segments: Vec<Segment>,
    pub mask: VisibleMatrix,
    /// Hard positions of the trunk's sentence tokens (no specials).
    pub word_rows: Vec<usize>,
}

impl ModelInput {
    pub fn from_flat(seq: &FlatSequence, mask: VisibleMatrix) -> Self {
        let word_rows = seq
            .tokens
            .iter()
            .filter(|t| t.is_trunk() && !t.token.is_special())
            .map(|t| t.hard_pos)
            .collect();
        ModelInput {
            ids: seq.ids(),
            positions: seq.soft_positions(),
            segments: seq.segments(),
            mask,
            word_rows,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends `[PAD]` rows up to `len`. Padding rows see only themselves
    /// and nobody sees them.
    pub fn padded(&self, len: usize) -> ModelInput {
        let extra = len.saturating_sub(self.len());
        let mut out = self.clone();
        out.ids.extend(std::iter::repeat_n(PAD_ID as usize, extra));
        out.positions.extend(std::iter::repeat_n(0, extra));
        out.segments.extend(std::iter::repeat_n(Segment::A, extra));
        out.mask = self.mask.padded(len.max(self.len()));
        out
    }

    /// Rows read by a head of the given kind.
    pub fn head_rows(&self, kind: HeadKind) -> Vec<usize> {
        match kind {
            HeadKind::Classify => vec![0],
            HeadKind::Tag => self.word_rows.clone(),
        }
    }
}

/// Embeddings + encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embeddings: EmbeddingTables,
    pub encoder: Encoder,
}

impl Model {
    /// Seeded initialization. The embedding tables equal
    /// `init_tables(config, seed)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = EmbeddingTables::new(&config, &mut rng);
        let encoder = Encoder::new(&config, &mut rng);
        Ok(Model {
            config,
            embeddings,
            encoder,
        })
    }

    pub fn embed(&self, input: &ModelInput) -> Result<Matrix> {
        embed_rows(&input.ids, &input.positions, &input.segments, &self.embeddings)
    }

    pub fn encode(&self, input: &ModelInput) -> Result<HiddenStates> {
        let h0 = self.embed(input)?;
        encoder_forward(&h0, &input.mask, &self.encoder, &self.config)
    }
}

impl Parameters for Model {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.embeddings.visit(&join(prefix, "embeddings"), f);
        self.encoder.visit(&join(prefix, "encoder"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        self.embeddings.visit_mut(&join(prefix, "embeddings"), f);
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
    }
}

/// Model plus task head: everything that is trained and checkpointed.
#[derive(Debug, Clone, PartialEq)]
pub struct KBert {
    pub model: Model,
    pub head: TaskHead,
}

/// Activations kept from a forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub states: HiddenStates,
    pub rows: Vec<usize>,
    pub logits: Matrix,
    dropout: Option<Matrix>,
}

impl KBert {
    pub fn new(config: ModelConfig, kind: HeadKind, classes: usize, seed: u64) -> Result<Self> {
        let model = Model::new(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4b42_4552_545f_4844);
        let head = TaskHead::new(kind, config.hidden, classes, &mut rng)?;
        Ok(KBert { model, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn forward(&self, input: &ModelInput) -> Result<ForwardPass> {
        self.forward_with_dropout(input, None::<&mut ChaCha8Rng>)
    }

    /// Forward pass; with an rng and a non-zero configured rate, applies
    /// inverted dropout to the embedding output.
    pub fn forward_with_dropout<R: Rng>(&self, input: &ModelInput, rng: Option<&mut R>) -> Result<ForwardPass> {
        let mut h0 = self.model.embed(input)?;
        let rate = self.model.config.dropout;
        let dropout = match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let m = Matrix::from_fn(h0.rows(), h0.cols(), |_, _| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                });
                for (x, &k) in h0.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *x *= k;
                }
                Some(m)
            }
            _ => None,
        };
        let states = encoder_forward(&h0, &input.mask, &self.model.encoder, &self.model.config)?;
        let rows = input.head_rows(self.head.kind);
        let logits = self.head.forward(states.last(), &rows);
        Ok(ForwardPass {
            states,
            rows,
            logits,
            dropout,
        })
    }

    pub fn logits(&self, input: &ModelInput) -> Result<Matrix> {
        Ok(self.forward(input)?.logits)
    }

    /// Accumulates gradients of a loss with `dL/dlogits = d_logits` into
    /// `grad`. Returns `dL/dh⁰`.
    pub fn backward(&self, input: &ModelInput, pass: &ForwardPass, d_logits: &Matrix, grad: &mut KBert) -> Matrix {
        let d_last = self
            .head
            .backward(pass.states.last(), &pass.rows, d_logits, &mut grad.head);
        let mut d_h0 = encoder_backward(
            &self.model.encoder,
            &pass.states,
            &d_last,
            &self.model.config,
            &mut grad.model.encoder,
        );
        let d_embed = match &pass.dropout {
            Some(m) => {
                for (d, &k) in d_h0.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *d *= k;
                }
                &d_h0
            }
            None => &d_h0,
        };
        embed_backward(
            &input.ids,
            &input.positions,
            &input.segments,
            d_embed,
            &mut grad.model.embeddings,
        );
        d_h0
    }
}

impl Parameters for KBert {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.model.visit(prefix, f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        self.model.visit_mut(prefix, f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
