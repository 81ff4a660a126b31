//! 2-D convolution (cross-correlation, no filter flip) over [`Tensor4`].
//!
//! Both passes lower each batch element to an im2col matrix and run a
//! single GEMM. Batch elements are processed in parallel, but gradient
//! reductions over the batch always happen in a fixed chunk order so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Batch elements per reduction chunk. Fixed so that floating-point
/// summation order is independent of the thread pool.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: usize,
    /// Zero padding added on every border.
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            stride: 1,
            padding: 0,
        }
    }
}

/// Filter bank of one convolutional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// Shape `(out_maps, in_maps, kh, kw)`.
    pub filters: Tensor4,
    pub bias: Vec<f64>,
    pub geometry: ConvGeometry,
}

impl ConvParams {
    pub fn new(filters: Tensor4, bias: Vec<f64>, geometry: ConvGeometry) -> Result<Self> {
        let p = ConvParams {
            filters,
            bias,
            geometry,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.filters.shape();
        if self.bias.len() != fs.n {
            return Err(Error::dim(
                "ConvParams",
                format!("bias length {} != out_maps {}", self.bias.len(), fs.n),
            ));
        }
        if self.geometry.stride == 0 {
            return Err(Error::InvalidArgument("conv stride must be positive".into()));
        }
        if fs.h == 0 || fs.w == 0 || fs.c == 0 || fs.n == 0 {
            return Err(Error::dim("ConvParams", format!("empty filter bank {fs}")));
        }
        Ok(())
    }

    pub fn out_maps(&self) -> usize {
        self.filters.shape().n
    }

    pub fn in_maps(&self) -> usize {
        self.filters.shape().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.filters.shape();
        (s.h, s.w)
    }

    /// Output shape for an input of `input` shape.
    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        conv_output_shape(input, self.filters.shape(), self.geometry)
    }
}

pub fn conv_output_shape(input: Shape4, filters: Shape4, geom: ConvGeometry) -> Result<Shape4> {
    if input.c != filters.c {
        return Err(Error::dim(
            "conv2d",
            format!("input has {} maps, filters expect {}", input.c, filters.c),
        ));
    }
    let (ph, pw) = (input.h + 2 * geom.padding, input.w + 2 * geom.padding);
    if ph < filters.h || pw < filters.w {
        return Err(Error::dim(
            "conv2d",
            format!(
                "padded input {ph}x{pw} smaller than kernel {}x{}",
                filters.h, filters.w
            ),
        ));
    }
    Ok(Shape4::new(
        input.n,
        filters.n,
        (ph - filters.h) / geom.stride + 1,
        (pw - filters.w) / geom.stride + 1,
    ))
}

struct Lowering {
    in_shape: Shape4,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Lowering {
    fn new(input: Shape4, filters: Shape4, geom: ConvGeometry) -> Result<(Self, Shape4)> {
        let out = conv_output_shape(input, filters, geom)?;
        Ok((
            Lowering {
                in_shape: input,
                kh: filters.h,
                kw: filters.w,
                oh: out.h,
                ow: out.w,
                stride: geom.stride,
                pad: geom.padding,
            },
            out,
        ))
    }

    fn rows(&self) -> usize {
        self.in_shape.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for kernel tap (ky, kx) at output (oy, ox), if inside the image.
    #[inline]
    fn source(&self, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.in_shape.h && x < self.in_shape.w).then_some((y, x))
    }

    fn im2col(&self, item: &[f64], col: &mut [f64]) {
        let (h, w) = (self.in_shape.h, self.in_shape.w);
        let p = self.cols();
        let mut row = 0;
        for c in 0..self.in_shape.c {
            let plane = &item[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match self.source(ky, kx, oy, ox) {
                                Some((y, x)) => plane[y * w + x],
                                None => 0.0,
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], item: &mut [f64]) {
        let (h, w) = (self.in_shape.h, self.in_shape.w);
        let p = self.cols();
        let mut row = 0;
        for c in 0..self.in_shape.c {
            let plane = &mut item[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some((y, x)) = self.source(ky, kx, oy, ox) {
                                plane[y * w + x] += src[oy * self.ow + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `c (m x n) = beta * c + a (m x k) * b (k x n)`, all row-major unless strides say otherwise.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover every index reachable through the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv2d_forward(input: &Tensor4, params: &ConvParams) -> Result<Tensor4> {
    params.validate()?;
    let (low, out_shape) = Lowering::new(input.shape(), params.filters.shape(), params.geometry)?;
    let (o, k, p) = (params.out_maps(), low.rows(), low.cols());
    let mut out = Tensor4::zeros(out_shape);
    let in_len = input.shape().item_len();
    out.data_mut()
        .par_chunks_mut(o * p)
        .zip(input.data().par_chunks(in_len))
        .for_each_init(
            || vec![0.0; k * p],
            |col, (dst, item)| {
                low.im2col(item, col);
                for (oc, row) in dst.chunks_mut(p).enumerate() {
                    row.fill(params.bias[oc]);
                }
                let wk = k as isize;
                gemm(o, k, p, params.filters.data(), (wk, 1), col, (p as isize, 1), 1.0, dst);
            },
        );
    Ok(out)
}

/// Gradients of one convolutional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub filters: Tensor4,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    input: &Tensor4,
    params: &ConvParams,
    grad_output: &Tensor4,
) -> Result<ConvGrads> {
    params.validate()?;
    let (low, out_shape) = Lowering::new(input.shape(), params.filters.shape(), params.geometry)?;
    grad_output.expect_shape("conv2d_backward", out_shape)?;
    let (o, k, p) = (params.out_maps(), low.rows(), low.cols());
    let in_len = input.shape().item_len();
    let mut grad_input = Tensor4::zeros(input.shape());

    let partials: Vec<(Vec<f64>, Vec<f64>)> = grad_input
        .data_mut()
        .par_chunks_mut(in_len * REDUCE_CHUNK)
        .zip(input.data().par_chunks(in_len * REDUCE_CHUNK))
        .zip(grad_output.data().par_chunks(o * p * REDUCE_CHUNK))
        .map(|((gi_chunk, in_chunk), go_chunk)| {
            let mut gw = vec![0.0; o * k];
            let mut gb = vec![0.0; o];
            let mut col = vec![0.0; k * p];
            for ((gi, item), go) in gi_chunk
                .chunks_mut(in_len)
                .zip(in_chunk.chunks(in_len))
                .zip(go_chunk.chunks(o * p))
            {
                low.im2col(item, &mut col);
                // gw += go (o x p) * col^T (p x k)
                gemm(o, p, k, go, (p as isize, 1), &col, (1, p as isize), 1.0, &mut gw);
                for (b, row) in gb.iter_mut().zip(go.chunks(p)) {
                    *b += row.iter().sum::<f64>();
                }
                // dcol = W^T (k x o) * go (o x p)
                gemm(
                    k,
                    o,
                    p,
                    params.filters.data(),
                    (1, k as isize),
                    go,
                    (p as isize, 1),
                    0.0,
                    &mut col,
                );
                low.col2im(&col, gi);
            }
            (gw, gb)
        })
        .collect();

    let mut gw = vec![0.0; o * k];
    let mut gb = vec![0.0; o];
    for (pw, pb) in partials {
        gw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    Ok(ConvGrads {
        input: grad_input,
        filters: Tensor4::from_vec(params.filters.shape(), gw)?,
        bias: gb,
    })
}

/// Adjoint of [`conv2d_forward`] without the bias term: maps a feature map of
/// the layer's output shape back to its input shape through the transposed
/// filters.
pub fn conv2d_transpose(feature: &Tensor4, params: &ConvParams, input_hw: (usize, usize)) -> Result<Tensor4> {
    let fs = feature.shape();
    let input = Shape4::new(fs.n, params.in_maps(), input_hw.0, input_hw.1);
    let (low, out_shape) = Lowering::new(input, params.filters.shape(), params.geometry)?;
    feature.expect_shape("conv2d_transpose", out_shape)?;
    let (o, k, p) = (params.out_maps(), low.rows(), low.cols());
    let mut out = Tensor4::zeros(input);
    out.data_mut()
        .par_chunks_mut(input.item_len())
        .zip(feature.data().par_chunks(o * p))
        .for_each_init(
            || vec![0.0; k * p],
            |col, (dst, go)| {
                gemm(k, o, p, params.filters.data(), (1, k as isize), go, (p as isize, 1), 0.0, col);
                low.col2im(col, dst);
            },
        );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{max_rel_error, random_tensor, Lcg};

    /// Direct loop-nest convolution, written independently of the im2col path.
    fn naive_conv(input: &Tensor4, p: &ConvParams) -> Tensor4 {
        let s = input.shape();
        let f = p.filters.shape();
        let g = p.geometry;
        let oh = (s.h + 2 * g.padding - f.h) / g.stride + 1;
        let ow = (s.w + 2 * g.padding - f.w) / g.stride + 1;
        Tensor4::from_fn(Shape4::new(s.n, f.n, oh, ow), |n, o, y, x| {
            let mut acc = p.bias[o];
            for c in 0..f.c {
                for ky in 0..f.h {
                    for kx in 0..f.w {
                        let iy = (y * g.stride + ky) as isize - g.padding as isize;
                        let ix = (x * g.stride + kx) as isize - g.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                            acc += p.filters.at(o, c, ky, kx) * input.at(n, c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn random_params(rng: &mut Lcg, o: usize, c: usize, k: usize, geometry: ConvGeometry) -> ConvParams {
        ConvParams::new(
            random_tensor(rng, Shape4::new(o, c, k, k), 1.0),
            (0..o).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            geometry,
        )
        .unwrap()
    }

    #[test]
    fn all_ones_sum() {
        let x = Tensor4::filled(Shape4::new(1, 1, 3, 3), 1.0);
        let p = ConvParams::new(x.clone(), vec![0.0], ConvGeometry::default()).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn delta_filter_crops_center() {
        let mut rng = Lcg::new(3);
        let x = random_tensor(&mut rng, Shape4::new(2, 1, 6, 7), 1.0);
        let mut f = Tensor4::zeros(Shape4::new(1, 1, 3, 3));
        *f.at_mut(0, 0, 1, 1) = 1.0;
        let p = ConvParams::new(f, vec![0.0], ConvGeometry::default()).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape4::new(2, 1, 4, 5));
        for n in 0..2 {
            for r in 0..4 {
                for c in 0..5 {
                    assert_eq!(y.at(n, 0, r, c), x.at(n, 0, r + 1, c + 1));
                }
            }
        }
    }

    #[test]
    fn matches_loop_nest_oracle() {
        let mut rng = Lcg::new(11);
        let x = random_tensor(&mut rng, Shape4::new(1, 2, 8, 8), 1.0);
        let p = random_params(&mut rng, 3, 2, 5, ConvGeometry::default());
        let fast = conv2d_forward(&x, &p).unwrap();
        let slow = naive_conv(&x, &p);
        assert_eq!(fast.shape(), Shape4::new(1, 3, 4, 4));
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn padded_and_strided_match_oracle() {
        let mut rng = Lcg::new(12);
        for &(stride, padding) in &[(1, 2), (2, 0), (2, 1), (3, 2)] {
            let x = random_tensor(&mut rng, Shape4::new(3, 2, 9, 7), 1.0);
            let p = random_params(&mut rng, 4, 2, 3, ConvGeometry { stride, padding });
            let fast = conv2d_forward(&x, &p).unwrap();
            let slow = naive_conv(&x, &p);
            assert_eq!(fast.shape(), slow.shape());
            assert!(max_rel_error(fast.data(), slow.data()) < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let x = Tensor4::zeros(Shape4::new(1, 2, 4, 4));
        let p = ConvParams::new(Tensor4::zeros(Shape4::new(1, 3, 3, 3)), vec![0.0], ConvGeometry::default()).unwrap();
        assert!(matches!(conv2d_forward(&x, &p), Err(Error::Dimension { .. })));
        let p = ConvParams::new(Tensor4::zeros(Shape4::new(1, 2, 5, 5)), vec![0.0], ConvGeometry::default()).unwrap();
        assert!(conv2d_forward(&x, &p).is_err());
        assert!(ConvParams::new(Tensor4::zeros(Shape4::new(2, 2, 3, 3)), vec![0.0], ConvGeometry::default()).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Lcg::new(5);
        let x = random_tensor(&mut rng, Shape4::new(2, 2, 6, 6), 1.0);
        let p = random_params(&mut rng, 3, 2, 3, ConvGeometry::default());
        let go = Tensor4::zeros(p.output_shape(x.shape()).unwrap());
        let g = conv2d_backward(&x, &p, &go).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.filters.max_abs(), 0.0);
        assert!(g.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn ones_backward() {
        let x = Tensor4::filled(Shape4::new(1, 1, 3, 3), 1.0);
        let p = ConvParams::new(x.clone(), vec![0.0], ConvGeometry::default()).unwrap();
        let go = Tensor4::filled(Shape4::new(1, 1, 1, 1), 1.0);
        let g = conv2d_backward(&x, &p, &go).unwrap();
        assert!(g.filters.data().iter().all(|&v| v == 1.0));
        assert_eq!(g.bias, vec![1.0]);
        assert!(g.input.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let x = Tensor4::zeros(Shape4::new(1, 1, 4, 4));
        let p = ConvParams::new(Tensor4::zeros(Shape4::new(1, 1, 3, 3)), vec![0.0], ConvGeometry::default()).unwrap();
        let go = Tensor4::zeros(Shape4::new(1, 1, 3, 3));
        assert!(conv2d_backward(&x, &p, &go).is_err());
    }

    #[test]
    fn linear_in_input_without_bias() {
        let mut rng = Lcg::new(8);
        let mut p = random_params(&mut rng, 2, 2, 3, ConvGeometry { stride: 1, padding: 1 });
        p.bias.iter_mut().for_each(|b| *b = 0.0);
        let s = Shape4::new(2, 2, 5, 6);
        let x = random_tensor(&mut rng, s, 1.0);
        let y = random_tensor(&mut rng, s, 1.0);
        let (a, b) = (0.7, -1.3);
        let mut mix = x.scale(a);
        mix.add_scaled(&y, b).unwrap();
        let lhs = conv2d_forward(&mix, &p).unwrap();
        let mut rhs = conv2d_forward(&x, &p).unwrap().scale(a);
        rhs.add_scaled(&conv2d_forward(&y, &p).unwrap(), b).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn transpose_equals_backward_input_gradient() {
        let mut rng = Lcg::new(21);
        let x = random_tensor(&mut rng, Shape4::new(2, 3, 7, 7), 1.0);
        let p = random_params(&mut rng, 4, 3, 3, ConvGeometry { stride: 2, padding: 1 });
        let go = random_tensor(&mut rng, p.output_shape(x.shape()).unwrap(), 1.0);
        let g = conv2d_backward(&x, &p, &go).unwrap();
        let t = conv2d_transpose(&go, &p, (7, 7)).unwrap();
        assert!(max_rel_error(g.input.data(), t.data()) < 1e-14);
    }
}
