//! Independent reference implementations shared by the property suites and
//! the acceptance run: a float64 shadow network with central differences, a
//! chi-square check of the triplet sampler and a brute-force nearest-neighbor
//! scan.
#![allow(dead_code)]

use phasekit_core::embedder::{embed, embed_backward, init_params};
use phasekit_core::policy::Policy;
use phasekit_core::sampler::{sample_triplet, SamplingStrategy};
use phasekit_core::tensorcore::*;
use phasekit_core::{seed, EmbedderConfig, EmbedderParams, Embedding, Tensor, PHASES};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// ------------------------------------------------------------ f64 layers

pub fn conv_ref(x: &[f64], (c_in, h, w): (usize, usize, usize), wt: &[f64], c_out: usize, k: usize, b: &[f64]) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = b[o];
                for c in 0..c_in {
                    for dy in 0..k {
                        for dx in 0..k {
                            let iy = y as isize + dy as isize - pad;
                            let ix = xx as isize + dx as isize - pad;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += wt[((o * c_in + c) * k + dy) * k + dx] * x[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn relu_ref(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn maxpool_ref(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    out
}

fn coord(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

pub fn softmax_ref(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * c);
    for ch in 0..c {
        let a = &x[ch * h * w..(ch + 1) * h * w];
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let (mut ex, mut ey) = (0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                let s = e[i * w + j] / z;
                ex += s * coord(j, w);
                ey += s * coord(i, h);
            }
        }
        out.push(ex);
        out.push(ey);
    }
    out
}

pub fn dense_ref(x: &[f64], wt: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + x.iter().enumerate().map(|(i, &xi)| wt[o * x.len() + i] * xi).sum::<f64>())
        .collect()
}

pub fn l2_ref(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Parameters of the float64 shadow network, in `EmbedderParams::tensors` order.
pub fn params_f64(p: &EmbedderParams) -> Vec<Vec<f64>> {
    p.tensors().iter().map(|t| to64(t.data())).collect()
}

pub fn to64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Float64 forward pass of the embedder on an `[S, S, C]` image.
pub fn embed_ref(config: &EmbedderConfig, params: &[Vec<f64>], image: &[f64]) -> Vec<f64> {
    let (s, c) = (config.input_size, config.in_channels);
    let mut x = vec![0.0; s * s * c];
    for p in 0..s * s {
        for ch in 0..c {
            x[ch * s * s + p] = image[p * c + ch];
        }
    }
    let (mut ch, mut side) = (c, s);
    for (l, &c_out) in config.conv_channels.iter().enumerate() {
        let k = if l == 0 { config.first_kernel } else { config.other_kernels };
        x = relu_ref(&conv_ref(&x, (ch, side, side), &params[2 * l], c_out, k, &params[2 * l + 1]));
        ch = c_out;
        if config.pool_after.contains(&(l + 1)) {
            x = maxpool_ref(&x, (ch, side, side));
            side /= 2;
        }
    }
    let feats = softmax_ref(&x, (ch, side, side));
    let n = config.conv_channels.len();
    l2_ref(&dense_ref(&feats, &params[2 * n], &params[2 * n + 1]))
}

// ------------------------------------------------------------ differences

/// Central difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)` in the Euclidean norm.
pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a as f64 - n).powi(2);
        na += (a as f64).powi(2);
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub const LAYER_STEP: f64 = 1e-3;
/// The end-to-end check crosses many ReLU/max-pool kinks, so it uses a finer step.
pub const NETWORK_STEP: f64 = 1e-6;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero by `gap`, so a step never crosses the ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v = rng.random_range(gap..1.0f32);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn tensor(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Worst relative error over `instances` random cases, per gradient checked.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

impl GradCheck {
    fn new(name: &'static str) -> Self {
        GradCheck { name, instances: 0, worst: 0.0 }
    }

    fn record(&mut self, e: f64) {
        self.worst = self.worst.max(e);
    }
}

pub fn check_conv(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("conv2d");
    let mut rng = seed::rng(seed_value, "conv", 0);
    for _ in 0..instances {
        let (c_in, c_out) = (rng.random_range(1..4), rng.random_range(1..4));
        let (h, w) = (rng.random_range(1..7), rng.random_range(1..7));
        let k = [1usize, 2, 3, 4, 5, 10][rng.random_range(0..6)];
        let x = uniform(&mut rng, c_in * h * w, -1.0, 1.0);
        let wt = uniform(&mut rng, c_out * c_in * k * k, -1.0, 1.0);
        let b = uniform(&mut rng, c_out, -1.0, 1.0);
        let up = uniform(&mut rng, c_out * h * w, -1.0, 1.0);
        let (xt, wtt, bt) = (tensor(&[c_in, h, w], x.clone()), tensor(&[c_out, c_in, k, k], wt.clone()), tensor(&[c_out], b.clone()));
        let grads = conv2d_backward(&xt, &wtt, &tensor(&[c_out, h, w], up.clone()), true).unwrap();
        let (x64, w64, b64, u64_) = (to64(&x), to64(&wt), to64(&b), to64(&up));
        let fwd = conv2d_forward(&xt, &wtt, &bt).unwrap();
        let reference = conv_ref(&x64, (c_in, h, w), &w64, c_out, k, &b64);
        g.record(rel_err(fwd.data(), &reference));
        let nx = numeric_grad(&x64, LAYER_STEP, |v| dot(&conv_ref(v, (c_in, h, w), &w64, c_out, k, &b64), &u64_));
        let nw = numeric_grad(&w64, LAYER_STEP, |v| dot(&conv_ref(&x64, (c_in, h, w), v, c_out, k, &b64), &u64_));
        let nb = numeric_grad(&b64, LAYER_STEP, |v| dot(&conv_ref(&x64, (c_in, h, w), &w64, c_out, k, v), &u64_));
        g.record(rel_err(grads.input_grad.data(), &nx));
        g.record(rel_err(grads.param_grads["weight"].data(), &nw));
        g.record(rel_err(grads.param_grads["bias"].data(), &nb));
        g.instances += 1;
    }
    g
}

pub fn check_relu(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("relu");
    let mut rng = seed::rng(seed_value, "relu", 0);
    for _ in 0..instances {
        let n = rng.random_range(1..40);
        let x = away_from_zero(&mut rng, n, 0.01);
        let up = uniform(&mut rng, n, -1.0, 1.0);
        let y = relu_forward(&tensor(&[n], x.clone()));
        let grad = relu_backward(&y, &tensor(&[n], up.clone())).unwrap();
        let u = to64(&up);
        g.record(rel_err(y.data(), &relu_ref(&to64(&x))));
        g.record(rel_err(grad.data(), &numeric_grad(&to64(&x), LAYER_STEP, |v| dot(&relu_ref(v), &u))));
        g.instances += 1;
    }
    g
}

pub fn check_maxpool(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("maxpool2x2");
    let mut rng = seed::rng(seed_value, "pool", 0);
    for _ in 0..instances {
        let (c, h, w) = (rng.random_range(1..4), rng.random_range(2..8), rng.random_range(2..8));
        // Distinct values 0.01 apart keep every window's winner stable under the step.
        let mut x: Vec<f32> = (0..c * h * w).map(|i| i as f32 * 0.01).collect();
        for i in (1..x.len()).rev() {
            x.swap(i, rng.random_range(0..=i));
        }
        let fwd = maxpool2x2_forward(&tensor(&[c, h, w], x.clone())).unwrap();
        let up = uniform(&mut rng, fwd.output.len(), -1.0, 1.0);
        let grad = maxpool2x2_backward(&[c, h, w], &fwd, &tensor(fwd.output.shape(), up.clone())).unwrap();
        let u = to64(&up);
        g.record(rel_err(fwd.output.data(), &maxpool_ref(&to64(&x), (c, h, w))));
        g.record(rel_err(grad.data(), &numeric_grad(&to64(&x), LAYER_STEP, |v| dot(&maxpool_ref(v, (c, h, w)), &u))));
        g.instances += 1;
    }
    g
}

pub fn check_softmax(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("spatial_softmax");
    let mut rng = seed::rng(seed_value, "softmax", 0);
    for _ in 0..instances {
        let (c, h, w) = (rng.random_range(1..4), rng.random_range(1..7), rng.random_range(1..7));
        let x = uniform(&mut rng, c * h * w, -3.0, 3.0);
        let up = uniform(&mut rng, 2 * c, -1.0, 1.0);
        let fwd = spatial_softmax_forward(&tensor(&[c, h, w], x.clone())).unwrap();
        let grad = spatial_softmax_backward(&fwd, &tensor(&[2 * c], up.clone())).unwrap();
        let u = to64(&up);
        g.record(rel_err(fwd.points.data(), &softmax_ref(&to64(&x), (c, h, w))));
        g.record(rel_err(
            grad.input_grad.data(),
            &numeric_grad(&to64(&x), LAYER_STEP, |v| dot(&softmax_ref(v, (c, h, w)), &u)),
        ));
        g.instances += 1;
    }
    g
}

pub fn check_dense(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("dense");
    let mut rng = seed::rng(seed_value, "dense", 0);
    for _ in 0..instances {
        let (n_in, n_out) = (rng.random_range(1..12), rng.random_range(1..12));
        let x = uniform(&mut rng, n_in, -1.0, 1.0);
        let wt = uniform(&mut rng, n_out * n_in, -1.0, 1.0);
        let b = uniform(&mut rng, n_out, -1.0, 1.0);
        let up = uniform(&mut rng, n_out, -1.0, 1.0);
        let (xt, wtt) = (tensor(&[n_in], x.clone()), tensor(&[n_out, n_in], wt.clone()));
        let y = dense_forward(&xt, &wtt, &tensor(&[n_out], b.clone())).unwrap();
        let grads = dense_backward(&xt, &wtt, &tensor(&[n_out], up.clone())).unwrap();
        let (x64, w64, b64, u) = (to64(&x), to64(&wt), to64(&b), to64(&up));
        g.record(rel_err(y.data(), &dense_ref(&x64, &w64, &b64)));
        g.record(rel_err(grads.input_grad.data(), &numeric_grad(&x64, LAYER_STEP, |v| dot(&dense_ref(v, &w64, &b64), &u))));
        g.record(rel_err(
            grads.param_grads["weight"].data(),
            &numeric_grad(&w64, LAYER_STEP, |v| dot(&dense_ref(&x64, v, &b64), &u)),
        ));
        g.record(rel_err(
            grads.param_grads["bias"].data(),
            &numeric_grad(&b64, LAYER_STEP, |v| dot(&dense_ref(&x64, &w64, v), &u)),
        ));
        g.instances += 1;
    }
    g
}

pub fn check_l2(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("l2_normalize");
    let mut rng = seed::rng(seed_value, "l2", 0);
    for _ in 0..instances {
        let n = rng.random_range(1..40);
        let mut x = uniform(&mut rng, n, -1.0, 1.0);
        x[0] += 2.0;
        let up = uniform(&mut rng, n, -1.0, 1.0);
        let xt = tensor(&[n], x.clone());
        let y = l2_normalize_forward(&xt);
        let grad = l2_normalize_backward(&xt, &tensor(&[n], up.clone())).unwrap();
        let u = to64(&up);
        g.record(rel_err(y.data(), &l2_ref(&to64(&x))));
        g.record(rel_err(grad.data(), &numeric_grad(&to64(&x), LAYER_STEP, |v| dot(&l2_ref(v), &u))));
        g.instances += 1;
    }
    g
}

/// 8x8 input, two channels per conv, pooling after convs 2 and 3.
pub fn toy_config() -> EmbedderConfig {
    EmbedderConfig {
        input_size: 8,
        in_channels: 3,
        conv_channels: vec![2; 6],
        first_kernel: 10,
        other_kernels: 3,
        embed_dim: 32,
        pool_after: vec![2, 3],
    }
}

/// Toy network with random biases so that ReLUs are neither all live nor all dead.
pub fn toy_params(seed_value: u64) -> EmbedderParams {
    let config = toy_config();
    let mut p = init_params(&config, seed_value).unwrap();
    let mut rng = seed::rng(seed_value, "toy-bias", 0);
    let n = p.convs.len();
    for l in 0..n {
        let b = p.convs[l].bias.data_mut();
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
    }
    p.dense_bias.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
    p
}

pub fn check_network(instances: usize, seed_value: u64) -> GradCheck {
    let mut g = GradCheck::new("embedder end-to-end");
    let config = toy_config();
    for i in 0..instances as u64 {
        let params = toy_params(seed::derive(seed_value, "net", i));
        let mut rng = seed::rng(seed_value, "net-input", i);
        let image = uniform(&mut rng, 8 * 8 * 3, 0.0, 1.0);
        let up = uniform(&mut rng, 32, -1.0, 1.0);
        let it = tensor(&[8, 8, 3], image.clone());
        let analytic = embed_backward(&params, &it, &up).unwrap();
        let (img64, u) = (to64(&image), to64(&up));
        let p64 = params_f64(&params);
        g.record(rel_err(embed(&params, &it).unwrap().as_slice(), &embed_ref(&config, &p64, &img64)));
        // One relative error over the whole parameter gradient. Some blocks
        // are zero in exact arithmetic (the last conv bias while its ReLU is
        // live shifts the softmax uniformly) and only hold f32 roundoff.
        let mut flat_analytic = Vec::new();
        let mut flat_numeric = Vec::new();
        for (k, t) in analytic.tensors().iter().enumerate() {
            flat_analytic.extend_from_slice(t.data());
            flat_numeric.extend(numeric_grad(&p64[k], NETWORK_STEP, |v| {
                let mut q = p64.clone();
                q[k] = v.to_vec();
                dot(&embed_ref(&config, &q, &img64), &u)
            }));
        }
        g.record(rel_err(&flat_analytic, &flat_numeric));
        g.instances += 1;
    }
    g
}

pub fn all_gradient_checks(instances: usize, seed_value: u64) -> Vec<GradCheck> {
    vec![
        check_conv(instances, seed_value),
        check_relu(instances, seed_value),
        check_maxpool(instances, seed_value),
        check_softmax(instances, seed_value),
        check_dense(instances, seed_value),
        check_l2(instances, seed_value),
        check_network(instances, seed_value),
    ]
}

// ------------------------------------------------------------ sampler

#[derive(Debug, Clone)]
pub struct SamplerCheck {
    pub draws: usize,
    pub violations: usize,
    /// Chi-square p-value of the negative-phase law.
    pub p_value: f64,
    /// Largest per-cell deviation in binomial standard deviations.
    pub max_sigma: f64,
}

/// Negative phase law of `strategy`: probability of each `(anchor, negative)`.
pub fn negative_law(strategy: SamplingStrategy) -> Vec<Vec<f64>> {
    (0..PHASES)
        .map(|a| {
            let valid: Vec<usize> = (0..PHASES)
                .filter(|&n| {
                    n != a
                        && match strategy {
                            SamplingStrategy::UniformNegative => true,
                            SamplingStrategy::AdjacentNegative { radius } => a.abs_diff(n) <= radius,
                        }
                })
                .collect();
            (0..PHASES)
                .map(|n| if valid.contains(&n) { 1.0 / (PHASES as f64 * valid.len() as f64) } else { 0.0 })
                .collect()
        })
        .collect()
}

fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64, f64) {
    let mut stat = 0.0;
    let mut max_sigma: f64 = 0.0;
    let total: f64 = observed.iter().sum();
    let mut cells = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e == 0.0 {
            continue;
        }
        cells += 1;
        stat += (o - e) * (o - e) / e;
        let sd = (e * (1.0 - e / total)).sqrt();
        max_sigma = max_sigma.max((o - e).abs() / sd);
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    (stat, p, max_sigma)
}

/// Draws `draws` triplets from 7 runs x 4 views and checks the invariants and
/// the joint `(anchor phase, negative phase)` law.
pub fn check_sampler(strategy: SamplingStrategy, draws: usize, seed_value: u64) -> SamplerCheck {
    let runs: Vec<u32> = (10..17).collect();
    let views = 4;
    let mut rng = seed::rng(seed_value, "sampler-oracle", 0);
    let mut joint = vec![0.0; PHASES * PHASES];
    let mut violations = 0;
    for _ in 0..draws {
        let t = sample_triplet(&runs, views, strategy, &mut rng).unwrap();
        let ok = t.anchor.run == t.positive.run
            && t.anchor.run == t.negative.run
            && runs.contains(&t.anchor.run)
            && t.anchor.phase == t.positive.phase
            && t.anchor.view != t.positive.view
            && t.negative.phase != t.anchor.phase
            && [t.anchor, t.positive, t.negative].iter().all(|f| f.view < views && f.phase < PHASES)
            && match strategy {
                SamplingStrategy::UniformNegative => true,
                SamplingStrategy::AdjacentNegative { radius } => t.anchor.phase.abs_diff(t.negative.phase) <= radius,
            };
        if !ok {
            violations += 1;
        }
        joint[t.anchor.phase * PHASES + t.negative.phase] += 1.0;
    }
    let expected: Vec<f64> = negative_law(strategy).into_iter().flatten().map(|p| p * draws as f64).collect();
    let (_, p_value, max_sigma) = chi_square(&joint, &expected);
    SamplerCheck {
        draws,
        violations,
        p_value,
        max_sigma,
    }
}

/// `|negative - anchor|` histogram under uniform negatives against
/// `P(d) = 2 (16 - d) / (16 * 15)`.
pub fn check_uniform_offsets(draws: usize, seed_value: u64) -> SamplerCheck {
    let runs = [0u32, 1, 2];
    let mut rng = seed::rng(seed_value, "offset-oracle", 0);
    let mut hist = vec![0.0; PHASES];
    let mut violations = 0;
    for _ in 0..draws {
        let t = sample_triplet(&runs, 4, SamplingStrategy::UniformNegative, &mut rng).unwrap();
        if !t.is_valid() {
            violations += 1;
        }
        hist[t.anchor.phase.abs_diff(t.negative.phase)] += 1.0;
    }
    let n = PHASES as f64;
    let expected: Vec<f64> = (0..PHASES)
        .map(|d| if d == 0 { 0.0 } else { 2.0 * (n - d as f64) / (n * (n - 1.0)) * draws as f64 })
        .collect();
    let (_, p_value, max_sigma) = chi_square(&hist, &expected);
    SamplerCheck {
        draws,
        violations,
        p_value,
        max_sigma,
    }
}

// ------------------------------------------------------------ nearest neighbor

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Embedding {
    loop {
        let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if n > 0.1 {
            return Embedding(v.iter().map(|x| x / n).collect());
        }
    }
}

/// Two passes: the minimum distance first, then the first index reaching it.
pub fn brute_force_nearest(stored: &[Embedding], w: &Embedding) -> (usize, f32) {
    let dists: Vec<f32> = stored
        .iter()
        .map(|e| {
            let mut acc = 0.0f32;
            for (a, b) in e.0.iter().zip(&w.0) {
                acc += (a - b) * (a - b);
            }
            acc
        })
        .collect();
    let best = dists.iter().cloned().fold(f32::INFINITY, f32::min);
    let index = dists.iter().position(|&d| d == best).unwrap();
    (index, best.sqrt())
}

#[derive(Debug, Clone, Default)]
pub struct NeighborCheck {
    pub queries: usize,
    pub mismatches: usize,
    /// Queries whose minimum distance was shared by more than one entry.
    pub ties: usize,
}

/// Random policies with duplicated entries; a third of the queries copy a
/// stored embedding exactly.
pub fn check_nearest_neighbor(queries: usize, seed_value: u64) -> NeighborCheck {
    let mut rng = seed::rng(seed_value, "nn-oracle", 0);
    let mut out = NeighborCheck::default();
    let dummy = Tensor::zeros(&[1]);
    while out.queries < queries {
        let n = rng.random_range(1..=24);
        let mut stored: Vec<Embedding> = (0..n).map(|_| unit(&mut rng, 32)).collect();
        for _ in 0..rng.random_range(0..=n / 2) {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            stored[j] = stored[i].clone();
        }
        let goal = rng.random_range(0..n);
        let policy = Policy::from_parts(vec![dummy.clone(); n], stored.clone(), goal).unwrap();
        for _ in 0..50 {
            let w = if rng.random_bool(1.0 / 3.0) {
                stored[rng.random_range(0..n)].clone()
            } else {
                unit(&mut rng, 32)
            };
            let (index, distance) = brute_force_nearest(&stored, &w);
            let got = policy.nearest_neighbor(&w);
            if got.index != index || got.distance != distance {
                out.mismatches += 1;
            }
            let d0 = stored[index].squared_distance(&w);
            if stored.iter().filter(|e| e.squared_distance(&w) == d0).count() > 1 {
                out.ties += 1;
            }
            out.queries += 1;
            if out.queries == queries {
                break;
            }
        }
    }
    out
}
