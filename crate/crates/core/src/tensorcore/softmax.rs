//! Spatial softmax: each channel's activation map becomes a probability map
//! whose expected pixel coordinate is the channel's feature point.

use alloc::vec;
use alloc::vec::Vec;

use super::{LayerGrad, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSoftmaxOutput {
    /// `[2C]` as `(x_0, y_0, x_1, y_1, ...)`.
    pub points: Tensor,
    /// Per-channel probability maps, `[C,H,W]`.
    pub probs: Tensor,
}

/// Pixel coordinate of index `i` along an axis of length `n`, mapped to
/// `[-1, 1]`. A length-1 axis maps to 0.
pub fn axis_coord(i: usize, n: usize) -> f32 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f32 / (n - 1) as f32
    }
}

pub fn spatial_softmax_forward(input: &Tensor) -> Result<SpatialSoftmaxOutput, TensorError> {
    input.expect_rank("spatial_softmax", 3)?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h == 0 || w == 0 {
        return Err(TensorError::Invalid("spatial_softmax on an empty map".into()));
    }
    let xs: Vec<f32> = (0..w).map(|j| axis_coord(j, w)).collect();
    let ys: Vec<f32> = (0..h).map(|i| axis_coord(i, h)).collect();
    let mut probs = vec![0.0f32; c * h * w];
    let mut points = vec![0.0f32; 2 * c];
    for ch in 0..c {
        let a = &input.data()[ch * h * w..(ch + 1) * h * w];
        let p = &mut probs[ch * h * w..(ch + 1) * h * w];
        let max = a.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for (pv, &av) in p.iter_mut().zip(a) {
            *pv = libm::expf(av - max);
            sum += *pv;
        }
        let inv = 1.0 / sum;
        let (mut ex, mut ey) = (0.0f32, 0.0f32);
        for i in 0..h {
            for j in 0..w {
                let s = &mut p[i * w + j];
                *s *= inv;
                ex += *s * xs[j];
                ey += *s * ys[i];
            }
        }
        points[2 * ch] = ex.clamp(-1.0, 1.0);
        points[2 * ch + 1] = ey.clamp(-1.0, 1.0);
    }
    Ok(SpatialSoftmaxOutput {
        points: Tensor::new(vec![2 * c], points)?,
        probs: Tensor::new(vec![c, h, w], probs)?,
    })
}

/// d a_ij = s_ij * (g_x (x_j - E[x]) + g_y (y_i - E[y])).
pub fn spatial_softmax_backward(
    forward: &SpatialSoftmaxOutput,
    upstream: &Tensor,
) -> Result<LayerGrad, TensorError> {
    upstream.expect_shape("spatial_softmax_backward", forward.points.shape())?;
    let shape = forward.probs.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut grad = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let p = &forward.probs.data()[ch * h * w..(ch + 1) * h * w];
        let (gx, gy) = (upstream.data()[2 * ch], upstream.data()[2 * ch + 1]);
        // Recompute the unclamped expectations for the Jacobian.
        let (mut ex, mut ey) = (0.0f32, 0.0f32);
        for i in 0..h {
            for j in 0..w {
                ex += p[i * w + j] * axis_coord(j, w);
                ey += p[i * w + j] * axis_coord(i, h);
            }
        }
        let g = &mut grad[ch * h * w..(ch + 1) * h * w];
        for i in 0..h {
            let dy = axis_coord(i, h) - ey;
            for j in 0..w {
                let dx = axis_coord(j, w) - ex;
                g[i * w + j] = p[i * w + j] * (gx * dx + gy * dy);
            }
        }
    }
    Ok(LayerGrad::input_only(Tensor::new(shape.to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_map_is_centred() {
        let y = spatial_softmax_forward(&Tensor::filled(&[2, 5, 7], 0.3)).unwrap();
        for v in y.points.data() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn saturated_corner() {
        let mut x = Tensor::zeros(&[1, 8, 8]);
        x.data_mut()[0] = 50.0;
        let y = spatial_softmax_forward(&x).unwrap();
        assert!((y.points.data()[0] + 1.0).abs() < 1e-4);
        assert!((y.points.data()[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn degenerate_axis() {
        let y = spatial_softmax_forward(&Tensor::filled(&[1, 1, 1], 42.0)).unwrap();
        assert_eq!(y.points.data(), &[0.0, 0.0]);
    }

    #[test]
    fn uniform_input_symmetric_upstream_is_antisymmetric() {
        let fw = spatial_softmax_forward(&Tensor::filled(&[1, 4, 4], 1.0)).unwrap();
        let g = spatial_softmax_backward(&fw, &Tensor::from_vec(alloc::vec![1.0, 1.0])).unwrap();
        let d = g.input_grad.data();
        assert!(d.iter().sum::<f32>().abs() < 1e-6);
        // Point reflection through the map centre flips the sign.
        for i in 0..16 {
            assert!((d[i] + d[15 - i]).abs() < 1e-6);
        }
        assert!(d[15] > 0.0);
    }

    #[test]
    fn zero_upstream() {
        let fw = spatial_softmax_forward(&Tensor::filled(&[2, 3, 3], 0.5)).unwrap();
        let g = spatial_softmax_backward(&fw, &Tensor::zeros(&[4])).unwrap();
        assert!(g.input_grad.data().iter().all(|&v| v == 0.0));
    }
}
