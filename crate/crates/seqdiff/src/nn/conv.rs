//! 3x3 same-padding convolution over `(channels, height, width)` tensors.
//!
//! Forward and backward both route through an im2col matrix so the heavy
//! lifting is a single dense matmul.

use std::ops::Range;

use ndarray::{Array2, Array3};
use rand::Rng;

use super::{add_into, Grad, ParamBuilder, Params};

const K: usize = 3;
const KK: usize = K * K;

/// 3x3 convolution, stride 1, zero padding 1 (shape preserving).
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv3x3 {
    pub fn layout(builder: &mut ParamBuilder, c_in: usize, c_out: usize) -> Self {
        Self {
            w: builder.alloc(c_out * c_in * KK),
            b: builder.alloc(c_out),
            c_in,
            c_out,
        }
    }

    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        let limit = (1.0 / (self.c_in * KK) as f64).sqrt();
        params.init_uniform(&self.w, limit, rng);
        params.fill(&self.b, 0.0);
    }

    /// Unfolds the padded input into a `(c_in * 9, h * w)` patch matrix.
    pub fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (c, h, w) = x.dim();
        debug_assert_eq!(c, self.c_in);
        let mut cols = Array2::zeros((c * KK, h * w));
        for ci in 0..c {
            for (off, (dy, dx)) in offsets().enumerate() {
                let row = ci * KK + off;
                for r in 0..h {
                    let rr = r as isize + dy;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for col in 0..w {
                        let cc = col as isize + dx;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        cols[[row, r * w + col]] = x[[ci, rr as usize, cc as usize]];
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, h: usize, w: usize) -> Array3<f64> {
        let mut dx = Array3::zeros((self.c_in, h, w));
        for ci in 0..self.c_in {
            for (off, (dy, dx_off)) in offsets().enumerate() {
                let row = ci * KK + off;
                for r in 0..h {
                    let rr = r as isize + dy;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for col in 0..w {
                        let cc = col as isize + dx_off;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        dx[[ci, rr as usize, cc as usize]] += dcols[[row, r * w + col]];
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, params: &Params, x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let (_, h, w) = x.dim();
        let cols = self.im2col(x);
        let weights = params.mat(&self.w, self.c_out, self.c_in * KK);
        let mut out = weights.dot(&cols);
        let bias = params.vec(&self.b);
        for (mut row, b) in out.rows_mut().into_iter().zip(bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let out = out.into_shape_with_order((self.c_out, h, w)).expect("conv output shape");
        (out, cols)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    /// `cols` is the im2col cache from the forward pass.
    pub fn backward(
        &self,
        params: &Params,
        cols: &Array2<f64>,
        dout: &Array3<f64>,
        grad: &mut Grad,
    ) -> Array3<f64> {
        let (c_out, h, w) = dout.dim();
        debug_assert_eq!(c_out, self.c_out);
        let dout_mat = dout
            .view()
            .into_shape_with_order((c_out, h * w))
            .expect("contiguous gradient")
            .to_owned();
        let dw = dout_mat.dot(&cols.t());
        add_into(grad, &self.w, &dw);
        for (i, gb) in grad[self.b.clone()].iter_mut().enumerate() {
            *gb += dout_mat.row(i).sum();
        }
        let weights = params.mat(&self.w, self.c_out, self.c_in * KK);
        let dcols = weights.t().dot(&dout_mat);
        self.col2im(&dcols, h, w)
    }
}

fn offsets() -> impl Iterator<Item = (isize, isize)> {
    (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dy, dx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn forward_matches_direct_convolution() {
        let mut builder = ParamBuilder::new();
        let conv = Conv3x3::layout(&mut builder, 2, 3);
        let mut params = Params::zeros(builder.total());
        let mut rng = rng_from_seed(3);
        conv.init(&mut params, &mut rng);
        params.init_uniform(&conv.b, 0.5, &mut rng);

        let x = Array3::from_shape_simple_fn((2, 4, 5), || rng.random_range(-1.0..1.0));
        let (out, _) = conv.forward(&params, &x);

        // Direct nested-loop reference.
        let wmat = params.mat(&conv.w, 3, 2 * KK).to_owned();
        let bias = params.vec(&conv.b).to_vec();
        for co in 0..3 {
            for r in 0..4 {
                for c in 0..5 {
                    let mut acc = bias[co];
                    for ci in 0..2 {
                        for (off, (dy, dx)) in offsets().enumerate() {
                            let rr = r as isize + dy;
                            let cc = c as isize + dx;
                            if rr < 0 || rr >= 4 || cc < 0 || cc >= 5 {
                                continue;
                            }
                            acc += wmat[[co, ci * KK + off]] * x[[ci, rr as usize, cc as usize]];
                        }
                    }
                    assert!((out[[co, r, c]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut builder = ParamBuilder::new();
        let conv = Conv3x3::layout(&mut builder, 2, 2);
        let mut params = Params::zeros(builder.total());
        let mut rng = rng_from_seed(4);
        conv.init(&mut params, &mut rng);

        let x = Array3::from_shape_simple_fn((2, 3, 3), || rng.random_range(-1.0..1.0));
        let loss = |p: &Params, input: &Array3<f64>| -> f64 {
            let (y, _) = conv.forward(p, input);
            y.iter().map(|v| v * v).sum()
        };

        let (y, cols) = conv.forward(&params, &x);
        let dy = y.mapv(|v| 2.0 * v);
        let mut grad = vec![0.0; params.len()];
        let dx = conv.backward(&params, &cols, &dy, &mut grad);

        let h = 1e-6;
        for i in (0..params.len()).step_by(3) {
            let mut p = params.clone();
            p.data[i] += h;
            let up = loss(&p, &x);
            p.data[i] -= 2.0 * h;
            let down = loss(&p, &x);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}");
        }
        for idx in [(0, 0, 0), (1, 2, 1), (0, 1, 2)] {
            let mut x2 = x.clone();
            x2[idx] += h;
            let up = loss(&params, &x2);
            x2[idx] -= 2.0 * h;
            let down = loss(&params, &x2);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "input {idx:?}");
        }
    }
}
