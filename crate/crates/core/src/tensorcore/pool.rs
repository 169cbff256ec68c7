use alloc::vec;
use alloc::vec::Vec;

use super::{Tensor, TensorError};

/// Pooled map plus the flat input index each output was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2 over `[C,H,W]`; odd trailing rows/columns are
/// dropped. Ties resolve to the first maximal element in row-major order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<MaxPoolOutput, TensorError> {
    input.expect_rank("maxpool2x2", 3)?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(TensorError::Invalid(alloc::format!(
            "maxpool2x2 needs at least 2x2 spatial extent, got {h}x{w}"
        )));
    }
    let x = input.data();
    let mut out = vec![0.0f32; c * oh * ow];
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    Ok(MaxPoolOutput {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each upstream gradient to its window's argmax.
pub fn maxpool2x2_backward(
    input_shape: &[usize],
    forward: &MaxPoolOutput,
    upstream: &Tensor,
) -> Result<Tensor, TensorError> {
    upstream.expect_shape("maxpool2x2_backward", forward.output.shape())?;
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&src, &u) in forward.argmax.iter().zip(upstream.data()) {
        g[src] += u;
    }
    Ok(grad)
}
