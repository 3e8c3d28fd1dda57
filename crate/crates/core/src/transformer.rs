//! Mask-self-attention encoder.
//!
//! Each block computes, per head,
//!
//! ```text
//! Q, K, V = h·Wq + bq, h·Wk + bk, h·Wv + bv
//! S       = softmax((Q·Kᵀ + M) / √d_k)
//! out     = S·V
//! ```
//!
//! concatenates the heads, projects them, then applies the post-norm
//! residual recipe `x = LN(h + attn(h))`, `h' = LN(x + FFN(x))` with a GELU
//! feed-forward layer. The same visible matrix `M` is used at every layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inject::VisibleMatrix;
use crate::layers::{gelu, gelu_grad, join, LayerNorm, LayerNormCache, Linear, Parameters};
use crate::tensor::{softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Number of blocks (L).
    pub layers: usize,
    /// Attention heads per block (A).
    pub heads: usize,
    /// Hidden size (H).
    pub hidden: usize,
    /// Feed-forward inner size.
    pub ff: usize,
    /// Longest flattened sequence; also the number of position rows.
    pub max_seq_len: usize,
    /// Embedding dropout rate used during training.
    pub dropout: f64,
    /// Add the mask after the `1/√d_k` scaling instead of before it.
    pub mask_after_scale: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: L=2, A=2, H=64, d_ff=256, 64 positions.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            layers: 2,
            heads: 2,
            hidden: 64,
            ff: 256,
            max_seq_len: 64,
            dropout: 0.0,
            mask_after_scale: false,
        }
    }

    /// BERT-base shape (L=12, A=12, H=768).
    pub fn base(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            layers: 12,
            heads: 12,
            hidden: 768,
            ff: 3072,
            max_seq_len: 512,
            dropout: 0.0,
            mask_after_scale: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("layers", self.layers),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("ff", self.ff),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Trainable tensors of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

impl BlockParams {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let h = config.hidden;
        BlockParams {
            query: Linear::new(h, h, rng),
            key: Linear::new(h, h, rng),
            value: Linear::new(h, h, rng),
            output: Linear::new(h, h, rng),
            attn_norm: LayerNorm::new(h),
            ff_in: Linear::new(h, config.ff, rng),
            ff_out: Linear::new(config.ff, h, rng),
            ff_norm: LayerNorm::new(h),
        }
    }
}

impl Parameters for BlockParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
        self.attn_norm.visit(&join(prefix, "attn_norm"), f);
        self.ff_in.visit(&join(prefix, "ff_in"), f);
        self.ff_out.visit(&join(prefix, "ff_out"), f);
        self.ff_norm.visit(&join(prefix, "ff_norm"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
        self.attn_norm.visit_mut(&join(prefix, "attn_norm"), f);
        self.ff_in.visit_mut(&join(prefix, "ff_in"), f);
        self.ff_out.visit_mut(&join(prefix, "ff_out"), f);
        self.ff_norm.visit_mut(&join(prefix, "ff_norm"), f);
    }
}

/// Everything the attention reverse pass needs.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Post-softmax scores, one `n × n` matrix per head.
    pub scores: Vec<Matrix>,
    context: Matrix,
}

fn check_mask(h: &Matrix, mask: &VisibleMatrix, config: &ModelConfig) -> Result<()> {
    if h.cols() != config.hidden {
        return Err(Error::Dimension(format!(
            "hidden width {} but config says {}",
            h.cols(),
            config.hidden
        )));
    }
    if mask.len() != h.rows() {
        return Err(Error::Dimension(format!(
            "visible matrix is {0}x{0} for {1} rows",
            mask.len(),
            h.rows()
        )));
    }
    Ok(())
}

/// Multi-head mask-self-attention including the output projection.
/// Returns the projected output and the cache (which holds the scores).
pub fn mask_self_attention(
    h: &Matrix,
    mask: &VisibleMatrix,
    params: &BlockParams,
    config: &ModelConfig,
) -> Result<(Matrix, AttentionCache)> {
    check_mask(h, mask, config)?;
    let n = h.rows();
    let dk = config.head_dim();
    let scale = (dk as f64).sqrt();
    let q = params.query.forward(h);
    let k = params.key.forward(h);
    let v = params.value.forward(h);

    let mut context = Matrix::zeros(n, config.hidden);
    let mut scores = Vec::with_capacity(config.heads);
    for head in 0..config.heads {
        let off = head * dk;
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[off..off + dk];
            let mrow = mask.row(i);
            let srow = s.row_mut(i);
            for j in 0..n {
                let kj = &k.row(j)[off..off + dk];
                let dot = crate::tensor::dot(qi, kj);
                srow[j] = if config.mask_after_scale {
                    dot / scale + mrow[j]
                } else {
                    (dot + mrow[j]) / scale
                };
            }
            softmax_in_place(srow);
        }
        for i in 0..n {
            let srow = s.row(i);
            let crow = &mut context.row_mut(i)[off..off + dk];
            for (j, &p) in srow.iter().enumerate() {
                let vj = &v.row(j)[off..off + dk];
                for (c, &x) in crow.iter_mut().zip(vj) {
                    *c += p * x;
                }
            }
        }
        scores.push(s);
    }
    let out = params.output.forward(&context);
    Ok((
        out,
        AttentionCache {
            input: h.clone(),
            q,
            k,
            v,
            scores,
            context,
        },
    ))
}

/// Reverse pass of [`mask_self_attention`]. Accumulates into `grad` and
/// returns `dL/dh`.
pub fn mask_self_attention_backward(
    params: &BlockParams,
    cache: &AttentionCache,
    d_out: &Matrix,
    config: &ModelConfig,
    grad: &mut BlockParams,
) -> Matrix {
    let n = d_out.rows();
    let dk = config.head_dim();
    let scale = (dk as f64).sqrt();
    let d_context = params.output.backward(&cache.context, d_out, &mut grad.output);

    let mut dq = Matrix::zeros(n, config.hidden);
    let mut dk_m = Matrix::zeros(n, config.hidden);
    let mut dv = Matrix::zeros(n, config.hidden);
    let mut dp_row = vec![0.0; n];
    for (head, s) in cache.scores.iter().enumerate() {
        let off = head * dk;
        for i in 0..n {
            let dci = &d_context.row(i)[off..off + dk];
            let srow = s.row(i);
            // dS_ij = dC_i · V_j ; dV_j += S_ij dC_i
            for j in 0..n {
                let vj = &cache.v.row(j)[off..off + dk];
                dp_row[j] = crate::tensor::dot(dci, vj);
                let p = srow[j];
                if p != 0.0 {
                    for (d, &g) in dv.row_mut(j)[off..off + dk].iter_mut().zip(dci) {
                        *d += p * g;
                    }
                }
            }
            let inner: f64 = srow.iter().zip(&dp_row).map(|(p, d)| p * d).sum();
            let qi = &cache.q.row(i)[off..off + dk];
            for j in 0..n {
                let dz = srow[j] * (dp_row[j] - inner) / scale;
                if dz == 0.0 {
                    continue;
                }
                let kj = &cache.k.row(j)[off..off + dk];
                for (d, &x) in dq.row_mut(i)[off..off + dk].iter_mut().zip(kj) {
                    *d += dz * x;
                }
                for (d, &x) in dk_m.row_mut(j)[off..off + dk].iter_mut().zip(qi) {
                    *d += dz * x;
                }
            }
        }
    }
    let mut dh = params.query.backward(&cache.input, &dq, &mut grad.query);
    dh.add_assign(&params.key.backward(&cache.input, &dk_m, &mut grad.key));
    dh.add_assign(&params.value.backward(&cache.input, &dv, &mut grad.value));
    dh
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub attention: AttentionCache,
    attn_norm: LayerNormCache,
    normed: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    ff_norm: LayerNormCache,
}

pub fn block_forward(
    h: &Matrix,
    mask: &VisibleMatrix,
    params: &BlockParams,
    config: &ModelConfig,
) -> Result<(Matrix, BlockCache)> {
    let (attn, attention) = mask_self_attention(h, mask, params, config)?;
    let (normed, attn_norm) = params.attn_norm.forward(&h.add(&attn));
    let ff_pre = params.ff_in.forward(&normed);
    let ff_act = ff_pre.map(gelu);
    let ff = params.ff_out.forward(&ff_act);
    let (out, ff_norm) = params.ff_norm.forward(&normed.add(&ff));
    Ok((
        out,
        BlockCache {
            attention,
            attn_norm,
            normed,
            ff_pre,
            ff_act,
            ff_norm,
        },
    ))
}

pub fn block_backward(
    params: &BlockParams,
    cache: &BlockCache,
    d_out: &Matrix,
    config: &ModelConfig,
    grad: &mut BlockParams,
) -> Matrix {
    let d_res2 = params.ff_norm.backward(&cache.ff_norm, d_out, &mut grad.ff_norm);
    let d_act = params.ff_out.backward(&cache.ff_act, &d_res2, &mut grad.ff_out);
    let mut d_pre = d_act;
    for (d, &x) in d_pre.as_mut_slice().iter_mut().zip(cache.ff_pre.as_slice()) {
        *d *= gelu_grad(x);
    }
    let mut d_normed = d_res2;
    d_normed.add_assign(&params.ff_in.backward(&cache.normed, &d_pre, &mut grad.ff_in));
    let d_res1 = params
        .attn_norm
        .backward(&cache.attn_norm, &d_normed, &mut grad.attn_norm);
    let mut dh = mask_self_attention_backward(params, &cache.attention, &d_res1, config, grad);
    dh.add_assign(&d_res1);
    dh
}

/// The stack of `L` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub blocks: Vec<BlockParams>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        Encoder {
            blocks: (0..config.layers).map(|_| BlockParams::new(config, rng)).collect(),
        }
    }
}

impl Parameters for Encoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.blocks.visit(&join(prefix, "blocks"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        self.blocks.visit_mut(&join(prefix, "blocks"), f);
    }
}

/// Per-layer hidden states `h⁰..hᴸ` plus the caches of each block.
#[derive(Debug, Clone)]
pub struct HiddenStates {
    pub hidden: Vec<Matrix>,
    pub blocks: Vec<BlockCache>,
}

impl HiddenStates {
    pub fn last(&self) -> &Matrix {
        self.hidden.last().expect("at least h0")
    }

    /// Attention scores of `layer` (1-based, as `h^layer` is its output)
    /// and `head`.
    pub fn scores(&self, layer: usize, head: usize) -> Option<&Matrix> {
        self.blocks
            .get(layer.checked_sub(1)?)
            .and_then(|b| b.attention.scores.get(head))
    }
}

/// Runs every block with the same visible matrix.
pub fn encoder_forward(
    h0: &Matrix,
    mask: &VisibleMatrix,
    encoder: &Encoder,
    config: &ModelConfig,
) -> Result<HiddenStates> {
    if encoder.blocks.len() != config.layers {
        return Err(Error::Dimension(format!(
            "{} blocks for a {}-layer config",
            encoder.blocks.len(),
            config.layers
        )));
    }
    let mut hidden = vec![h0.clone()];
    let mut blocks = Vec::with_capacity(config.layers);
    for (layer, params) in encoder.blocks.iter().enumerate() {
        let (out, cache) = block_forward(hidden.last().unwrap(), mask, params, config)?;
        if !out.is_finite() {
            return Err(Error::NumericOverflow { layer: layer + 1 });
        }
        hidden.push(out);
        blocks.push(cache);
    }
    Ok(HiddenStates { hidden, blocks })
}

/// Reverse pass through the whole stack. Accumulates parameter gradients
/// into `grad` and returns `dL/dh⁰`.
pub fn encoder_backward(
    encoder: &Encoder,
    states: &HiddenStates,
    d_last: &Matrix,
    config: &ModelConfig,
    grad: &mut Encoder,
) -> Matrix {
    let mut d = d_last.clone();
    for (layer, params) in encoder.blocks.iter().enumerate().rev() {
        d = block_backward(params, &states.blocks[layer], &d, config, &mut grad.blocks[layer]);
    }
    d
}
