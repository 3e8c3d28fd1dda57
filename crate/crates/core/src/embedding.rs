//! Token + soft-position + segment embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inject::{FlatSequence, Segment};
use crate::layers::{join, Parameters, INIT_STD};
use crate::tensor::Matrix;
use crate::transformer::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    /// `|V| × H`
    pub token: Matrix,
    /// `max_seq_len × H`, indexed by soft position.
    pub position: Matrix,
    /// `2 × H`
    pub segment: Matrix,
}

impl EmbeddingTables {
    pub fn new<R: rand::Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        EmbeddingTables {
            token: Matrix::random_normal(config.vocab_size, config.hidden, INIT_STD, rng),
            position: Matrix::random_normal(config.max_seq_len, config.hidden, INIT_STD, rng),
            segment: Matrix::random_normal(2, config.hidden, INIT_STD, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.token.cols()
    }
}

/// Seeded `N(0, 0.02²)` tables.
pub fn init_tables(config: &ModelConfig, seed: u64) -> EmbeddingTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingTables::new(config, &mut rng)
}

impl Parameters for EmbeddingTables {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "token"), &self.token);
        f(join(prefix, "position"), &self.position);
        f(join(prefix, "segment"), &self.segment);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        f(join(prefix, "token"), &mut self.token);
        f(join(prefix, "position"), &mut self.position);
        f(join(prefix, "segment"), &mut self.segment);
    }
}

/// Row `i` is `token[ids[i]] + position[positions[i]] + segment[segments[i]]`.
pub fn embed_rows(
    ids: &[usize],
    positions: &[usize],
    segments: &[Segment],
    tables: &EmbeddingTables,
) -> Result<Matrix> {
    let n = ids.len();
    assert!(positions.len() == n && segments.len() == n, "ragged embedding input");
    let h = tables.hidden();
    let mut out = Matrix::zeros(n, h);
    for i in 0..n {
        let pos = positions[i];
        if pos >= tables.position.rows() {
            return Err(Error::PositionOverflow {
                position: pos,
                capacity: tables.position.rows(),
            });
        }
        if ids[i] >= tables.token.rows() {
            return Err(Error::Dimension(format!(
                "token id {} outside a vocabulary of {}",
                ids[i],
                tables.token.rows()
            )));
        }
        let t = tables.token.row(ids[i]);
        let p = tables.position.row(pos);
        let s = tables.segment.row(segments[i].index());
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = t[j] + p[j] + s[j];
        }
    }
    Ok(out)
}

pub fn embed(seq: &FlatSequence, tables: &EmbeddingTables) -> Result<Matrix> {
    embed_rows(&seq.ids(), &seq.soft_positions(), &seq.segments(), tables)
}

/// Scatters `d_rows` back into the three tables.
pub fn embed_backward(
    ids: &[usize],
    positions: &[usize],
    segments: &[Segment],
    d_rows: &Matrix,
    grad: &mut EmbeddingTables,
) {
    for i in 0..ids.len() {
        let d = d_rows.row(i);
        for (g, &x) in grad.token.row_mut(ids[i]).iter_mut().zip(d) {
            *g += x;
        }
        for (g, &x) in grad.position.row_mut(positions[i]).iter_mut().zip(d) {
            *g += x;
        }
        for (g, &x) in grad.segment.row_mut(segments[i].index()).iter_mut().zip(d) {
            *g += x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(h: usize) -> ModelConfig {
        ModelConfig {
            hidden: h,
            heads: 1,
            ..ModelConfig::desk(20)
        }
    }

    #[test]
    fn seeded_tables_are_reproducible() {
        let a = init_tables(&cfg(4), 11);
        let b = init_tables(&cfg(4), 11);
        assert_eq!(a, b);
        assert_ne!(a, init_tables(&cfg(4), 12));
    }

    #[test]
    fn init_mean_is_near_zero() {
        // 20·4 + 64·4 + 2·4 = 344 entries per table set; draw enough sets.
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut seed = 0;
        while count < 100_000 {
            let t = init_tables(&cfg(4), seed);
            t.visit("", &mut |_, m| {
                sum += m.as_slice().iter().sum::<f64>();
                count += m.as_slice().len();
            });
            seed += 1;
        }
        let mean = sum / count as f64;
        let sigma = INIT_STD / (count as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn hard_position_does_not_matter() {
        let t = init_tables(&cfg(4), 1);
        let rows = embed_rows(&[5, 5], &[3, 3], &[Segment::A, Segment::A], &t).unwrap();
        assert_eq!(rows.row(0), rows.row(1));
    }

    #[test]
    fn position_overflow() {
        let t = init_tables(&cfg(4), 1);
        let err = embed_rows(&[5], &[64], &[Segment::A], &t).unwrap_err();
        assert!(err.to_string().starts_with("position overflow"));
    }
}
