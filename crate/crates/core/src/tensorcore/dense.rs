use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;

use super::{LayerGrad, Tensor, TensorError};

/// `weights [out, in]`, `bias [out]`, `input [in]` → `W x + b`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    weights.expect_rank("dense", 2)?;
    let (n_out, n_in) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape("dense input", &[n_in])?;
    bias.expect_shape("dense bias", &[n_out])?;
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n_in)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
        .collect();
    Tensor::new(vec![n_out], out)
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<LayerGrad, TensorError> {
    weights.expect_rank("dense", 2)?;
    let (n_out, n_in) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape("dense input", &[n_in])?;
    upstream.expect_shape("dense upstream", &[n_out])?;
    let (x, g) = (input.data(), upstream.data());
    let mut dw = vec![0.0f32; n_out * n_in];
    let mut dx = vec![0.0f32; n_in];
    for (o, (row, wrow)) in dw.chunks_exact_mut(n_in).zip(weights.data().chunks_exact(n_in)).enumerate() {
        let go = g[o];
        for i in 0..n_in {
            row[i] = go * x[i];
            dx[i] += wrow[i] * go;
        }
    }
    let mut param_grads = BTreeMap::new();
    param_grads.insert("weight".to_string(), Tensor::new(vec![n_out, n_in], dw)?);
    param_grads.insert("bias".to_string(), upstream.clone());
    Ok(LayerGrad {
        input_grad: Tensor::new(vec![n_in], dx)?,
        param_grads,
    })
}
