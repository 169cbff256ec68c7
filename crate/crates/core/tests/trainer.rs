mod oracle;

use std::collections::BTreeMap;

use oracle::{toy_config, toy_params};
use phasekit_core::sampler::{FrameId, FrameSource, SampleError, SamplingStrategy, Split};
use phasekit_core::trainer::*;
use phasekit_core::{seed, Embedding, Tensor, PHASES};
use proptest::prelude::*;
use rand::Rng;

/// Runs whose frames brighten with the phase, plus per-view noise.
struct Toy {
    train: Vec<u32>,
    val: Vec<u32>,
    frames: BTreeMap<FrameId, Tensor>,
}

impl Toy {
    fn new() -> Self {
        let mut frames = BTreeMap::new();
        for run in 0..6u32 {
            let mut rng = seed::rng(run as u64, "toy-run", 0);
            let tint: [f32; 3] = [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)];
            for view in 0..3 {
                for phase in 0..PHASES {
                    let data = (0..8 * 8 * 3)
                        .map(|i| {
                            let level = phase as f32 / 15.0 * if (i / 3) % 8 < 4 { 1.0 } else { 0.4 };
                            (0.6 * level + tint[i % 3] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)
                        })
                        .collect();
                    frames.insert(FrameId { run, view, phase }, Tensor::new(vec![8, 8, 3], data).unwrap());
                }
            }
        }
        Toy {
            train: vec![0, 1, 2, 3, 4],
            val: vec![5],
            frames,
        }
    }
}

impl FrameSource for Toy {
    fn runs(&self, split: Split) -> &[u32] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    fn views(&self) -> usize {
        3
    }

    fn frame(&self, id: FrameId) -> Result<&Tensor, SampleError> {
        self.frames.get(&id).ok_or(SampleError::EmptyCorpus)
    }
}

fn small_config(seed_value: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        steps_per_epoch: 10,
        epochs: 3,
        seed: seed_value,
        val_triplets: 64,
        optimizer: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let toy = Toy::new();
    let a = train(&toy, &toy_config(), &small_config(3), &mut Silent).unwrap();
    let b = train(&toy, &toy_config(), &small_config(3), &mut Silent).unwrap();
    assert_eq!(a.params.digest(), b.params.digest());
    assert_eq!(a.report, b.report);
    let c = train(&toy, &toy_config(), &small_config(4), &mut Silent).unwrap();
    assert_ne!(a.params.digest(), c.params.digest());
}

#[test]
fn training_lowers_validation_loss() {
    let toy = Toy::new();
    let mut config = small_config(1);
    config.epochs = 8;
    let out = train(&toy, &toy_config(), &config, &mut Silent).unwrap();
    let first = out.report.epochs[0].val_loss;
    let best = out.report.epochs[out.report.best_epoch - 1].val_loss;
    assert!(best < first, "{:?}", out.report.epochs);
    assert!(out.report.epochs.iter().all(|e| e.val_loss >= best));
}

#[test]
fn adjacent_strategy_trains() {
    let toy = Toy::new();
    let mut config = small_config(2);
    config.strategy = SamplingStrategy::adjacent(1).unwrap();
    let out = train(&toy, &toy_config(), &config, &mut Silent).unwrap();
    assert_eq!(out.report.epochs.len(), 3);
    assert!(out.params.is_finite());
}

#[test]
fn invalid_configs_are_rejected() {
    let toy = Toy::new();
    let bad = [
        TrainConfig { margin: 0.0, ..small_config(0) },
        TrainConfig { batch_size: 0, ..small_config(0) },
        TrainConfig { epochs: 0, ..small_config(0) },
        TrainConfig { val_triplets: 0, ..small_config(0) },
        TrainConfig {
            optimizer: AdamConfig { lr: f32::NAN, ..AdamConfig::default() },
            ..small_config(0)
        },
    ];
    for config in bad {
        assert!(matches!(train(&toy, &toy_config(), &config, &mut Silent), Err(TrainError::Config(_))));
    }
}

#[test]
fn collapsed_embeddings_score_zero_accuracy_and_margin_loss() {
    let toy = Toy::new();
    let mut rng = seed::rng(0, "v", 0);
    let r = validate_with(|_| Ok(Embedding(vec![0.0; 32])), &toy, 200, 0.2, &mut rng).unwrap();
    assert_eq!(r.accuracy, 0.0);
    assert!((r.mean_loss - 0.2).abs() < 1e-6);
}

#[test]
fn perfect_phase_embeddings_score_full_accuracy() {
    let toy = Toy::new();
    // Look the frame up to recover its phase.
    let phase_of = |t: &Tensor| {
        let id = toy.frames.iter().find(|(_, f)| *f == t).unwrap().0;
        id.phase
    };
    let mut rng = seed::rng(0, "v", 0);
    let r = validate_with(
        |t| {
            let mut e = vec![0.0; 32];
            e[phase_of(t)] = 1.0;
            Ok(Embedding(e))
        },
        &toy,
        300,
        0.2,
        &mut rng,
    )
    .unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.mean_loss, 0.0);
}

#[test]
fn zero_validation_triplets_is_an_error() {
    let toy = Toy::new();
    let params = toy_params(0);
    let mut rng = seed::rng(0, "v", 0);
    assert_eq!(validate(&params, &toy, 0, 0.2, &mut rng), Err(TrainError::NoValidationTriplets));
}

fn unit(v: Vec<f32>) -> Embedding {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-3);
    Embedding(v.into_iter().map(|x| x / n).collect())
}

fn loss64(a: &[f64], p: &[f64], n: &[f64], m: f64) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    (d(a, p) - d(a, n) + m).max(0.0)
}

proptest! {
    #[test]
    fn triplet_loss_matches_definition(
        a in prop::collection::vec(-1.0f32..1.0, 32),
        p in prop::collection::vec(-1.0f32..1.0, 32),
        n in prop::collection::vec(-1.0f32..1.0, 32),
        m in 0.05f32..1.0,
    ) {
        let (a, p, n) = (unit(a), unit(p), unit(n));
        let l = triplet_loss(&a, &p, &n, m);
        let (a64, p64, n64) = (oracle::to64(&a.0), oracle::to64(&p.0), oracle::to64(&n.0));
        let expected = loss64(&a64, &p64, &n64, m as f64);
        prop_assert!((l.loss as f64 - expected).abs() < 1e-5);
        prop_assert!(l.loss >= 0.0);
        let raw = loss64(&a64, &p64, &n64, m as f64 + 100.0) - 100.0;
        prop_assume!(raw.abs() > 1e-3);
        prop_assert_eq!(l.active, raw > 0.0);
        for (k, g) in [&l.grad_anchor, &l.grad_positive, &l.grad_negative].into_iter().enumerate() {
            let base = [&a64, &p64, &n64][k];
            let numeric = oracle::numeric_grad(base, 1e-6, |v| {
                let mut args = [a64.clone(), p64.clone(), n64.clone()];
                args[k] = v.to_vec();
                loss64(&args[0], &args[1], &args[2], m as f64)
            });
            let diff = g.iter().zip(&numeric).map(|(x, y)| (*x as f64 - y).abs()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-4, "embedding {} max diff {}", k, diff);
        }
    }
}
