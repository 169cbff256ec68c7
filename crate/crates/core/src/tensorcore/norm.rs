use core::sync::atomic::{AtomicU64, Ordering};

use super::{Tensor, TensorError};

/// Inputs with a norm at or below this are passed through unchanged.
pub const L2_EPSILON: f32 = 1e-8;

static GUARD_HITS: AtomicU64 = AtomicU64::new(0);

/// How many times the near-zero guard has fired in this process.
pub fn l2_guard_hits() -> u64 {
    GUARD_HITS.load(Ordering::Relaxed)
}

fn norm(v: &[f32]) -> f32 {
    libm::sqrtf(v.iter().map(|x| x * x).sum())
}

pub fn l2_normalize_forward(v: &Tensor) -> Tensor {
    let n = norm(v.data());
    if n <= L2_EPSILON {
        GUARD_HITS.fetch_add(1, Ordering::Relaxed);
        return v.clone();
    }
    let mut out = v.clone();
    out.data_mut().iter_mut().for_each(|x| *x /= n);
    out
}

/// Jacobian of `v / |v|` applied to `upstream`: `(g - y (y . g)) / |v|`.
pub fn l2_normalize_backward(v: &Tensor, upstream: &Tensor) -> Result<Tensor, TensorError> {
    upstream.expect_shape("l2_normalize_backward", v.shape())?;
    let n = norm(v.data());
    if n <= L2_EPSILON {
        return Ok(upstream.clone());
    }
    let dot: f32 = v.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum::<f32>() / n;
    let mut g = upstream.clone();
    for (gi, &vi) in g.data_mut().iter_mut().zip(v.data()) {
        *gi = (*gi - vi / n * dot) / n;
    }
    Ok(g)
}
