//! Parameterized building blocks with hand-written reverse passes.

use rand::Rng;

use crate::tensor::Matrix;

/// Standard deviation of every randomly initialized weight.
pub const INIT_STD: f64 = 0.02;

/// Layer-norm variance epsilon (BERT value).
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// A tree of named trainable tensors.
///
/// Gradients and optimizer moments reuse the same types, so anything that
/// walks parameters can walk gradients in the same order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix));

    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, m| out.push((name, m)));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |name, m| out.push((name, m)));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, m| n += m.as_slice().len());
        n
    }

    /// Same structure, every entry zero.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, m| m.fill(0.0));
        z
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, m| ok &= m.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// `y = x · weight + bias`, weight stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            weight: Matrix::random_normal(inputs, outputs, INIT_STD, rng),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Matrix::zeros(inputs, outputs),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        y.add_row_vector(&self.bias);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        grad.weight.add_assign(&x.t_matmul(dy));
        grad.bias.add_assign(&dy.column_sums());
        dy.matmul_t(&self.weight)
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm {
            gain: Matrix::filled(1, width, 1.0),
            bias: Matrix::zeros(1, width),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let (n, h) = x.shape();
        let mut normalized = Matrix::zeros(n, h);
        let mut y = Matrix::zeros(n, h);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..h {
                let xhat = (row[j] - mean) * inv;
                normalized.set(i, j, xhat);
                y.set(i, j, xhat * self.gain.get(0, j) + self.bias.get(0, j));
            }
        }
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let (n, h) = dy.shape();
        let mut dx = Matrix::zeros(n, h);
        let mut dxhat = vec![0.0; h];
        for i in 0..n {
            let xhat = cache.normalized.row(i);
            let dyr = dy.row(i);
            for j in 0..h {
                grad.gain.as_mut_slice()[j] += dyr[j] * xhat[j];
                grad.bias.as_mut_slice()[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gain.get(0, j);
            }
            let mean_d = dxhat.iter().sum::<f64>() / h as f64;
            let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / h as f64;
            let inv = cache.inv_std[i];
            for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
                *out = inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "gain"), &self.gain);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        f(join(prefix, "gain"), &mut self.gain);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Exact (erf) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Mean softmax cross-entropy over rows, and its gradient w.r.t. the logits.
/// Rows whose target is `None` are skipped.
pub fn cross_entropy(logits: &Matrix, targets: &[Option<usize>]) -> (f64, Matrix) {
    assert_eq!(logits.rows(), targets.len());
    let counted = targets.iter().filter(|t| t.is_some()).count().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (i, target) in targets.iter().enumerate() {
        let Some(target) = *target else { continue };
        let mut p = logits.row(i).to_vec();
        crate::tensor::softmax_in_place(&mut p);
        // NaN must survive so callers can detect it; `max` would drop it.
        let pt = p[target];
        loss -= if pt.is_nan() {
            pt
        } else {
            pt.max(f64::MIN_POSITIVE).ln()
        };
        let g = grad.row_mut(i);
        for (c, (gc, pc)) in g.iter_mut().zip(&p).enumerate() {
            *gc = (pc - if c == target { 1.0 } else { 0.0 }) / counted;
        }
    }
    (loss / counted, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let e = 1e-6;
        (f(x + e) - f(x - e)) / (2.0 * e)
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -0.7, 0.0, 0.3, 2.5] {
            assert!((gelu_grad(x) - numeric(gelu, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::new(4);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let (y, _) = ln.forward(&x);
        let mean: f64 = y.row(0).iter().sum::<f64>() / 4.0;
        let var: f64 = y.row(0).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = Matrix::zeros(2, 4);
        let (loss, grad) = cross_entropy(&logits, &[Some(1), None]);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(grad.row(1), &[0.0; 4]);
        assert!((grad.get(0, 1) + 0.75).abs() < 1e-12);
    }
}
