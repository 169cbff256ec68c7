use std::path::Path;

use phasekit::dataset::{frame_path, generate_corpus, val_count, Corpus};
use phasekit::error::Error;
use phasekit::{checkpoint, f32t, policy_io};
use phasekit_core::embedder::init_params;
use phasekit_core::policy::build_policy;
use phasekit_core::sampler::{make_batch, FrameId, FrameSource, SamplingStrategy, Split};
use phasekit_core::scenesim::Task;
use phasekit_core::{seed, EmbedderConfig, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn f32t_round_trips(shape in prop::collection::vec(1usize..5, 0..4), fill in any::<u32>()) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|i| f32::from_bits(fill.wrapping_mul(i as u32 + 1) & 0x7f7f_ffff)).collect();
        let t = Tensor::new(shape.clone(), data).unwrap();
        let bytes = f32t::encode(&t);
        prop_assert_eq!(&bytes[..4], b"F32T");
        prop_assert_eq!(bytes[4] as usize, shape.len());
        prop_assert_eq!(bytes.len(), 5 + 4 * shape.len() + 4 * n);
        let back = f32t::decode(&bytes).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }
}

#[test]
fn image_header_layout() {
    let t = Tensor::zeros(&[64, 64, 3]);
    let b = f32t::encode(&t);
    assert_eq!(&b[..5], b"F32T\x03");
    assert_eq!(u32::from_le_bytes(b[5..9].try_into().unwrap()), 64);
    assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 3);
    assert!(f32t::decode(&b[..10]).is_err());
    assert!(f32t::decode(b"NOPE\x00").is_err());
}

fn small_corpus(dir: &Path, runs: usize) -> Corpus {
    generate_corpus(Task::Floor, runs, 32, 7, dir).unwrap()
}

#[test]
fn two_run_corpus_has_one_validation_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path(), 2);
    assert_eq!(c.sequences(), 8);
    assert_eq!(c.manifest.val_run_ids, vec![1]);
    assert_eq!(c.manifest.train_run_ids, vec![0]);
    assert_eq!(val_count(200), 20);
    assert_eq!(val_count(11), 2);
    assert!(dir.path().join("floor/manifest.json").is_file());
    assert!(dir.path().join("floor").join(frame_path(1, 3, 15)).is_file());
}

#[test]
fn too_few_runs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(generate_corpus(Task::Cup, 1, 16, 0, dir.path()), Err(Error::Usage(_))));
    assert!(matches!(generate_corpus(Task::Cup, 4, 16, 0, dir.path()), Err(Error::Usage(_))));
}

#[test]
fn corpus_is_deterministic_and_round_trips() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = small_corpus(a.path(), 3);
    let cb = small_corpus(b.path(), 3);
    assert_eq!(ca.digest, cb.digest);
    assert_eq!(ca.manifest, cb.manifest);

    let opened = Corpus::open(a.path()).unwrap();
    assert_eq!(opened.digest, ca.digest);
    let seq = opened.load_sequence(2, 1).unwrap();
    assert_eq!(seq.frames.len(), 16);
    assert_eq!(seq.ground_truth, (0..16).rev().collect::<Vec<u32>>());
    for w in seq.ground_truth.windows(2) {
        assert!(w[0] > w[1]);
    }
    // Written bytes equal a fresh render of the same run.
    let record = opened.run_record(2).unwrap();
    assert_eq!(record.seed, seq.seed);
    let scene = phasekit_core::scenesim::phase_scene(&record.setup.scene, 4).unwrap();
    let fresh = phasekit_core::scenesim::render(&scene, &record.setup.views[1], 4, 32);
    assert_eq!(fresh, seq.frames[4]);
}

#[test]
fn corrupt_frame_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path(), 2);
    let victim = c.root.join(frame_path(0, 2, 5));
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&victim, bytes).unwrap();
    match c.load_sequence(0, 2) {
        Err(Error::DigestMismatch { path, .. }) => assert_eq!(path, victim),
        other => panic!("expected digest mismatch, got {other:?}"),
    }
    let msg = c.load_sequence(0, 2).unwrap_err().to_string();
    assert!(msg.contains("frame_5.f32t"), "{msg}");
    assert!(c.load_sequence(1, 2).is_ok());
}

#[test]
fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path(), 2);
    assert!(matches!(c.load_sequence(9, 0), Err(Error::Missing(_))));
    assert!(matches!(c.load_sequence(0, 4), Err(Error::Missing(_))));
    assert!(matches!(Corpus::open(&dir.path().join("nope")), Err(Error::NotFound(_))));
}

#[test]
fn loaded_corpus_batches_only_train_runs() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path(), 2);
    let loaded = c.load().unwrap();
    assert_eq!(loaded.runs(Split::Train), &[0]);
    let mut rng = seed::rng(1, "batch", 0);
    let batch = make_batch(&loaded, Split::Train, SamplingStrategy::UniformNegative, 32, &mut rng).unwrap();
    assert_eq!(batch.image_count(), 96);
    assert!(batch.triplets.iter().all(|t| t.anchor.run == 0));
    let seq = c.load_sequence(1, 3).unwrap();
    let id = FrameId { run: 1, view: 3, phase: 9 };
    assert_eq!(loaded.frame(id).unwrap(), &seq.frames[9]);
    assert!(loaded.frame(FrameId { run: 5, view: 0, phase: 0 }).is_err());
}

fn toy_config() -> EmbedderConfig {
    EmbedderConfig {
        conv_channels: vec![2; 6],
        ..EmbedderConfig::standard(32)
    }
}

#[test]
fn checkpoint_round_trip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let params = init_params(&toy_config(), 3).unwrap();
    let m = checkpoint::save(dir.path(), &params, 4).unwrap();
    assert_eq!(m.epoch, 4);
    assert_eq!(m.tensors.len(), 14);
    let back = checkpoint::load(dir.path()).unwrap();
    assert_eq!(back, params);

    let f = dir.path().join("conv3.weight.f32t");
    let mut bytes = std::fs::read(&f).unwrap();
    bytes[20] ^= 1;
    std::fs::write(&f, bytes).unwrap();
    assert!(matches!(checkpoint::load(dir.path()), Err(Error::DigestMismatch { .. })));
}

#[test]
fn policy_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = init_params(&toy_config(), 5).unwrap();
    let setup = phasekit_core::scenesim::randomize_run(Task::Floor, 11);
    let images = phasekit_core::agent::demonstration(&setup, 32).unwrap();
    let policy = build_policy(&params, images, 15).unwrap();
    let m = policy_io::save(dir.path(), &policy).unwrap();
    assert_eq!(m.actions.len(), 16);
    assert_eq!(policy_io::load(dir.path()).unwrap(), policy);
}
