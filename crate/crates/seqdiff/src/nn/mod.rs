//! Minimal neural-network building blocks with hand-derived backward
//! passes: dense layers, 3x3 same-padding convolutions, pre-norm
//! transformer blocks, and an adaptive moment optimizer.
//!
//! All trainable values of a model live in one flat `f64` buffer; layers
//! hold index ranges into it. The flat layout keeps the optimizer,
//! checkpoint serialization, and finite-difference gradient checks
//! trivial, at the cost of a little indexing boilerplate.

pub mod adam;
pub mod attention;
pub mod conv;

use std::ops::Range;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;

pub use adam::Adam;

/// Flat parameter buffer shared by all layers of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mat(&self, range: &Range<usize>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.data[range.clone()])
            .expect("parameter range matches matrix shape")
    }

    pub fn vec(&self, range: &Range<usize>) -> &[f64] {
        &self.data[range.clone()]
    }

    /// Fills a range with uniform draws in `(-limit, limit)`.
    pub fn init_uniform(&mut self, range: &Range<usize>, limit: f64, rng: &mut impl Rng) {
        for v in &mut self.data[range.clone()] {
            *v = rng.random_range(-limit..limit);
        }
    }

    pub fn fill(&mut self, range: &Range<usize>, value: f64) {
        for v in &mut self.data[range.clone()] {
            *v = value;
        }
    }
}

/// Allocates consecutive parameter ranges while a model is being laid out.
#[derive(Debug, Default)]
pub struct ParamBuilder {
    len: usize,
}

impl ParamBuilder {
    pub fn new() -> Self {
        Self { len: 0 }
    }

    pub fn alloc(&mut self, len: usize) -> Range<usize> {
        let start = self.len;
        self.len += len;
        start..self.len
    }

    pub fn total(&self) -> usize {
        self.len
    }
}

/// Gradient buffer matching a [`Params`] layout.
pub type Grad = Vec<f64>;

pub fn grad_mat_mut(grad: &mut Grad, range: &Range<usize>, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut grad[range.clone()])
        .expect("gradient range matches matrix shape")
}

pub fn add_into(grad: &mut Grad, range: &Range<usize>, values: &Array2<f64>) {
    for (g, v) in grad[range.clone()].iter_mut().zip(values.iter()) {
        *g += v;
    }
}

/// `silu(x) = x * sigmoid(x)`, a smooth activation whose derivative is
/// well-behaved for finite-difference checks.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A dense layer `y = x W + b` with `x` of shape `(n, in_dim)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn layout(builder: &mut ParamBuilder, in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: builder.alloc(in_dim * out_dim),
            b: builder.alloc(out_dim),
            in_dim,
            out_dim,
        }
    }

    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        let limit = (1.0 / self.in_dim as f64).sqrt();
        params.init_uniform(&self.w, limit, rng);
        params.fill(&self.b, 0.0);
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> Array2<f64> {
        let w = params.mat(&self.w, self.in_dim, self.out_dim);
        let mut y = x.dot(&w);
        let b = params.vec(&self.b);
        for mut row in y.rows_mut() {
            for (v, bias) in row.iter_mut().zip(b.iter()) {
                *v += bias;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        params: &Params,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        grad: &mut Grad,
    ) -> Array2<f64> {
        let dw = x.t().dot(dy);
        add_into(grad, &self.w, &dw);
        for (i, gb) in grad[self.b.clone()].iter_mut().enumerate() {
            *gb += dy.column(i).sum();
        }
        let w = params.mat(&self.w, self.in_dim, self.out_dim);
        dy.dot(&w.t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut builder = ParamBuilder::new();
        let layer = Linear::layout(&mut builder, 3, 2);
        let mut params = Params::zeros(builder.total());
        let mut rng = rng_from_seed(1);
        layer.init(&mut params, &mut rng);

        let x = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let loss = |p: &Params| -> f64 {
            let y = layer.forward(p, &x);
            y.iter().map(|v| v * v).sum()
        };

        let y = layer.forward(&params, &x);
        let dy = y.mapv(|v| 2.0 * v);
        let mut grad = vec![0.0; params.len()];
        let dx = layer.backward(&params, &x, &dy, &mut grad);

        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p.data[i] += h;
            let up = loss(&p);
            p.data[i] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }

        // Spot-check one input coordinate as well.
        let mut x2 = x.clone();
        x2[[0, 0]] += h;
        let up = {
            let y = layer.forward(&params, &x2);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        x2[[0, 0]] -= 2.0 * h;
        let down = {
            let y = layer.forward(&params, &x2);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let fd = (up - down) / (2.0 * h);
        assert!((fd - dx[[0, 0]]).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn silu_derivative_is_consistent() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_prime(x)).abs() < 1e-9);
        }
    }
}
