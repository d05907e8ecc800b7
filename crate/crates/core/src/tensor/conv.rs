//! 2-D cross-correlation via im2col + GEMM.

use super::{check_finite, Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], bias: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let shape_err = |detail: String| TensorError::Shape { op: "conv2d", detail };
        if input.len() != 3 || kernel.len() != 4 {
            return Err(shape_err(format!(
                "expected input [C,H,W] and kernel [O,C,kh,kw], got {input:?} and {kernel:?}"
            )));
        }
        if stride == 0 {
            return Err(TensorError::Argument {
                op: "conv2d",
                detail: "stride must be at least 1".into(),
            });
        }
        let (c_in, h, w) = (input[0], input[1], input[2]);
        let (c_out, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != c_in {
            return Err(shape_err(format!(
                "kernel expects {kc} input channels, input has {c_in}"
            )));
        }
        if bias != [c_out] {
            return Err(shape_err(format!("bias shape {bias:?} does not match {c_out} outputs")));
        }
        let out_dim = |n: usize, k: usize| -> Result<usize> {
            let padded = n + 2 * padding;
            if padded < k || !(padded - k).is_multiple_of(stride) {
                return Err(shape_err(format!(
                    "extent {n} with padding {padding}, kernel {k}, stride {stride} gives a non-integer output size"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            out_h: out_dim(h, kh)?,
            out_w: out_dim(w, kw)?,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate read by output position `o` at kernel tap `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < n).then_some(pos as usize)
    }
}

/// `c = a · b + beta · c` for row-major `a` (m×k) and `b` (k×n), with optional transposes.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above bound every index the strides can reach.
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

pub(crate) fn im2col(g: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let ncols = g.cols();
    let mut cols = vec![0.0; g.rows() * ncols];
    for ci in 0..g.c_in {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.h) else { continue };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.w) {
                            dst[oy * g.out_w + ox] = plane[iy * g.w + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(g: &ConvGeometry, cols: &[f64]) -> Vec<f64> {
    let ncols = g.cols();
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    for ci in 0..g.c_in {
        let plane = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.h) else { continue };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.w) {
                            plane[iy * g.w + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward pass; also returns the im2col buffer reused by the backward pass.
pub(crate) fn forward(g: &ConvGeometry, input: &[f64], kernel: &[f64], bias: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cols = im2col(g, input);
    let n = g.cols();
    let mut out = Vec::with_capacity(g.c_out * n);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, n));
    }
    gemm(g.c_out, g.rows(), n, kernel, false, &cols, false, 1.0, &mut out);
    check_finite("conv2d", &out)?;
    Ok((out, cols))
}

pub(crate) struct ConvGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn backward(g: &ConvGeometry, cols: &[f64], kernel: &[f64], grad_out: &[f64]) -> ConvGrads {
    let n = g.cols();
    let r = g.rows();
    let mut grad_kernel = vec![0.0; g.c_out * r];
    gemm(g.c_out, n, r, grad_out, false, cols, true, 0.0, &mut grad_kernel);
    let grad_bias = grad_out.chunks(n).map(|row| row.iter().sum()).collect();
    let mut grad_cols = vec![0.0; r * n];
    gemm(r, g.c_out, n, kernel, true, grad_out, false, 0.0, &mut grad_cols);
    ConvGrads {
        input: col2im(g, &grad_cols),
        kernel: grad_kernel,
        bias: grad_bias,
    }
}

/// Off-tape convolution of `input` [C_in,H,W] with `kernel` [C_out,C_in,kh,kw].
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), bias.shape(), stride, padding)?;
    let (out, _) = forward(&g, input.data(), kernel.data(), bias.data())?;
    Tensor::new(vec![g.c_out, g.out_h, g.out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d_forward(&x, &k, &b, 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn unit_pointwise_kernel_is_identity() {
        let x = Tensor::from_fn(&[1, 4, 5], |i| (i as f64 * 0.37).sin());
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_bad_geometry() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let b = Tensor::zeros(&[1]);
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 3, 3, 3]), &b, 1, 1).is_err());
        // (4 + 0 - 3) / 2 is not an integer
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 3, 3]), &b, 2, 0).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 3, 3]), &b, 0, 1).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2]), 1, 1).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 5, 5]), &b, 1, 0).is_err());
    }

    #[test]
    fn strided_output_size() {
        let x = Tensor::full(&[1, 5, 5], 1.0);
        let k = Tensor::full(&[2, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[2]), 2, 0).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }
}
