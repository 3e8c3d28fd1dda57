//! Fine-tuning loop: padded mini-batches, cross-entropy, Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassRecord, LabelSet, TagRecord};
use crate::error::{Error, Result};
use crate::layers::{cross_entropy, Parameters};
use crate::metrics::{accuracy, evaluate_ner, Prf};
use crate::model::{HeadKind, KBert, ModelInput};
use crate::pipeline::{Pipeline, Switches};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub switches: Switches,
    /// Update only the task head.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 3,
            seed: 0,
            switches: Switches::full(),
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction; β = (0.9, 0.999), ε = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: P,
    v: P,
}

impl<P: Parameters + Clone> Adam<P> {
    pub fn new(params: &P, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update of every tensor whose name passes `trainable`.
    pub fn step(&mut self, params: &mut P, grads: &P, trainable: impl Fn(&str) -> bool) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let grads = grads.named_tensors();
        let ps = params.named_tensors_mut();
        let ms = self.m.named_tensors_mut();
        let vs = self.v.named_tensors_mut();
        for ((((name, p), (_, g)), (_, m)), (_, v)) in ps.into_iter().zip(grads).zip(ms).zip(vs) {
            if !trainable(&name) {
                continue;
            }
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((p, &g), (m, v)) in it {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// One encoded training or evaluation example. `targets` line up with the
/// rows the head reads (`[CLS]` for classification, sentence tokens for
/// tagging).
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub input: ModelInput,
    pub targets: Vec<Option<usize>>,
}

pub fn prepare_classification(
    pipeline: &Pipeline<'_>,
    records: &[ClassRecord],
    labels: &LabelSet,
) -> Result<Vec<PreparedExample>> {
    records
        .iter()
        .map(|r| {
            let enc = pipeline.encode_text(&r.text, r.pair.as_deref())?;
            Ok(PreparedExample {
                input: enc.input,
                targets: vec![Some(labels.id(&r.label)?)],
            })
        })
        .collect()
}

/// Tag targets for sentence tokens; tokens cut off by the length limit are
/// dropped along with their tags.
pub fn prepare_tagging(
    pipeline: &Pipeline<'_>,
    records: &[TagRecord],
    labels: &LabelSet,
) -> Result<Vec<PreparedExample>> {
    records
        .iter()
        .map(|r| {
            let enc = pipeline.encode_surfaces(&r.tokens)?;
            let targets = r
                .tags
                .iter()
                .take(enc.input.word_rows.len())
                .map(|t| labels.id(t).map(Some))
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedExample {
                input: enc.input,
                targets,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    /// One JSON object per epoch, newline separated.
    pub fn json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("metrics serialize") + "\n")
            .collect()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax class per head row.
pub fn predict(net: &KBert, input: &ModelInput) -> Result<Vec<usize>> {
    let logits = net.logits(input)?;
    Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
}

/// Loss, row accuracy, and (for tagging) exact-span P/R/F1.
pub fn evaluate(net: &KBert, examples: &[PreparedExample], labels: &LabelSet) -> Result<EvalMetrics> {
    let mut loss = 0.0;
    let mut pred_all = Vec::new();
    let mut gold_all = Vec::new();
    let mut pred_tags = Vec::new();
    let mut gold_tags = Vec::new();
    for ex in examples {
        let logits = net.logits(&ex.input)?;
        loss += cross_entropy(&logits, &ex.targets).0;
        let mut p_seq = Vec::new();
        let mut g_seq = Vec::new();
        for (i, t) in ex.targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let p = argmax(logits.row(i));
            pred_all.push(p);
            gold_all.push(t);
            p_seq.push(labels.name(p).to_string());
            g_seq.push(labels.name(t).to_string());
        }
        pred_tags.push(p_seq);
        gold_tags.push(g_seq);
    }
    let spans = match net.head.kind {
        HeadKind::Tag => Some(evaluate_ner(&pred_tags, &gold_tags)?),
        HeadKind::Classify => None,
    };
    Ok(EvalMetrics {
        loss: loss / examples.len().max(1) as f64,
        accuracy: accuracy(&pred_all, &gold_all),
        spans,
    })
}

/// Fine-tunes `net` in place and reports per-epoch metrics on `dev`.
/// Deterministic for a given seed.
pub fn train(
    net: &mut KBert,
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
    labels: &LabelSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Dataset("train and dev splits must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(net, config.learning_rate);
    let mut grads = net.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let frozen = config.freeze_encoder;
    let trainable = |name: &str| !frozen || name.starts_with("head.");

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            grads.visit_mut("", &mut |_, m| m.fill(0.0));
            let width = batch.iter().map(|&i| train_set[i].input.len()).max().unwrap_or(0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_set[i];
                let input = if ex.input.len() < width {
                    ex.input.padded(width)
                } else {
                    ex.input.clone()
                };
                let pass = net.forward_with_dropout(&input, Some(&mut rng))?;
                let (loss, mut d_logits) = cross_entropy(&pass.logits, &ex.targets);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        step,
                        detail: format!("example {i}, logits finite: {}", pass.logits.is_finite()),
                    });
                }
                total += loss;
                d_logits.scale(scale);
                net.backward(&input, &pass, &d_logits, &mut grads);
            }
            adam.step(net, &grads, trainable);
        }
        let dev = evaluate(net, dev_set, labels)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss: total / train_set.len() as f64,
            dev,
        });
    }
    Ok(TrainReport { epochs })
}

/// Final-layer `[CLS]` features, e.g. for fitting a separate classifier.
pub fn cls_features(net: &KBert, examples: &[PreparedExample]) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(examples.len());
    for ex in examples {
        let states = net.model.encode(&ex.input)?;
        rows.push(states.last().row(0).to_vec());
    }
    Ok(Matrix::from_rows(&rows))
}
