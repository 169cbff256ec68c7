use super::{Tensor, TensorError};

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gates `upstream` by the sign of the forward output (or input; either works
/// since the ReLU preserves positivity).
pub fn relu_backward(output: &Tensor, upstream: &Tensor) -> Result<Tensor, TensorError> {
    upstream.expect_shape("relu_backward", output.shape())?;
    let mut grad = upstream.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad)
}
