//! Stride-1 "same" 2D cross-correlation, computed as im2col + GEMM over
//! bands of output rows so the column buffer stays cache-sized.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{LayerGrad, Tensor, TensorError};

/// Target number of output pixels per im2col band.
const BAND_PIXELS: usize = 512;

/// Leading and trailing zero padding that keeps the output the input's size.
/// Even kernels pad one extra row/column on the leading side (k=10: 5 then 4).
pub fn same_padding(k: usize) -> (usize, usize) {
    (k / 2, (k - 1) / 2)
}

struct Geometry {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
}

impl Geometry {
    fn check(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<Self, TensorError> {
        input.expect_rank("conv2d", 3)?;
        weights.expect_rank("conv2d", 4)?;
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let ws = weights.shape();
        let (c_out, k) = (ws[0], ws[2]);
        if ws[1] != c_in || ws[3] != k || k == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![c_out, c_in, k, k],
                got: ws.to_vec(),
            });
        }
        if let Some(b) = bias {
            b.expect_shape("conv2d bias", &[c_out])?;
        }
        Ok(Self {
            c_in,
            c_out,
            h,
            w,
            k,
            pad: same_padding(k).0,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn band_rows(&self) -> usize {
        (BAND_PIXELS / self.w).clamp(1, self.h)
    }

    /// Fills `cols` (`[patch_len, rows * w]`) for output rows `y0..y0+rows`.
    fn im2col(&self, input: &[f32], y0: usize, rows: usize, cols: &mut [f32]) {
        let (h, w, k) = (self.h as isize, self.w, self.k);
        let p = rows * w;
        for c in 0..self.c_in {
            let plane = &input[c * self.h * w..(c + 1) * self.h * w];
            for dy in 0..k {
                for dx in 0..k {
                    let r = (c * k + dy) * k + dx;
                    let dst_row = &mut cols[r * p..(r + 1) * p];
                    let shift = dx as isize - self.pad as isize;
                    let (x_lo, x_hi) = valid_range(w, shift);
                    for (ry, dst) in dst_row.chunks_exact_mut(w).enumerate() {
                        let iy = (y0 + ry) as isize + dy as isize - self.pad as isize;
                        if iy < 0 || iy >= h || x_lo >= x_hi {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        dst[..x_lo].fill(0.0);
                        dst[x_hi..].fill(0.0);
                        let s0 = (x_lo as isize + shift) as usize;
                        dst[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                    }
                }
            }
        }
    }

    /// Scatters column gradients back onto the input gradient.
    fn col2im(&self, dcols: &[f32], y0: usize, rows: usize, dinput: &mut [f32]) {
        let (h, w, k) = (self.h as isize, self.w, self.k);
        let p = rows * w;
        for c in 0..self.c_in {
            let plane = &mut dinput[c * self.h * w..(c + 1) * self.h * w];
            for dy in 0..k {
                for dx in 0..k {
                    let r = (c * k + dy) * k + dx;
                    let src_row = &dcols[r * p..(r + 1) * p];
                    let shift = dx as isize - self.pad as isize;
                    let (x_lo, x_hi) = valid_range(w, shift);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for (ry, src) in src_row.chunks_exact(w).enumerate() {
                        let iy = (y0 + ry) as isize + dy as isize - self.pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let s0 = (x_lo as isize + shift) as usize;
                        let dst = &mut plane[iy as usize * w + s0..iy as usize * w + s0 + (x_hi - x_lo)];
                        for (d, s) in dst.iter_mut().zip(&src[x_lo..x_hi]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `x` whose source column `x + shift` lies inside `0..w`.
fn valid_range(w: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
    (lo.min(w), hi)
}

/// `c = alpha * a * b + beta * c` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `input [C_in,H,W]`, `weights [C_out,C_in,k,k]`, `bias [C_out]` → `[C_out,H,W]`.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    let g = Geometry::check(input, weights, Some(bias))?;
    let hw = g.h * g.w;
    let mut out = vec![0.0f32; g.c_out * hw];
    for (o, plane) in out.chunks_exact_mut(hw).enumerate() {
        plane.fill(bias.data()[o]);
    }
    let kk = g.patch_len();
    let band = g.band_rows();
    let mut cols = vec![0.0f32; kk * band * g.w];
    let mut y0 = 0;
    while y0 < g.h {
        let rows = band.min(g.h - y0);
        let p = rows * g.w;
        g.im2col(input.data(), y0, rows, &mut cols[..kk * p]);
        gemm(
            g.c_out,
            kk,
            p,
            weights.data(),
            (kk, 1),
            &cols[..kk * p],
            (p, 1),
            1.0,
            &mut out[y0 * g.w..],
            hw,
        );
        y0 += rows;
    }
    Tensor::new(vec![g.c_out, g.h, g.w], out)
}

/// Gradients of the forward map. The input gradient is skipped (returned as
/// zeros) when `with_input_grad` is false, which the first layer uses.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
    with_input_grad: bool,
) -> Result<LayerGrad, TensorError> {
    let g = Geometry::check(input, weights, None)?;
    upstream.expect_shape("conv2d_backward", &[g.c_out, g.h, g.w])?;
    let hw = g.h * g.w;
    let kk = g.patch_len();
    let band = g.band_rows();
    let mut cols = vec![0.0f32; kk * band * g.w];
    let mut dcols = if with_input_grad {
        vec![0.0f32; kk * band * g.w]
    } else {
        Vec::new()
    };
    let mut dw = vec![0.0f32; g.c_out * kk];
    let mut dinput = vec![0.0f32; g.c_in * hw];
    let up = upstream.data();

    let mut y0 = 0;
    while y0 < g.h {
        let rows = band.min(g.h - y0);
        let p = rows * g.w;
        let up_band = &up[y0 * g.w..];
        g.im2col(input.data(), y0, rows, &mut cols[..kk * p]);
        // dW[O,K] += dOut[O,P] * cols[K,P]^T
        gemm(g.c_out, p, kk, up_band, (hw, 1), &cols[..kk * p], (1, p), 1.0, &mut dw, kk);
        if with_input_grad {
            // dcols[K,P] = W[O,K]^T * dOut[O,P]
            gemm(kk, g.c_out, p, weights.data(), (1, kk), up_band, (hw, 1), 0.0, &mut dcols[..kk * p], p);
            g.col2im(&dcols[..kk * p], y0, rows, &mut dinput);
        }
        y0 += rows;
    }

    let db: Vec<f32> = up.chunks_exact(hw).map(|plane| plane.iter().sum()).collect();
    let mut param_grads = BTreeMap::new();
    param_grads.insert("weight".to_string(), Tensor::new(weights.shape().to_vec(), dw)?);
    param_grads.insert("bias".to_string(), Tensor::new(vec![g.c_out], db)?);
    Ok(LayerGrad {
        input_grad: Tensor::new(input.shape().to_vec(), dinput)?,
        param_grads,
    })
}
