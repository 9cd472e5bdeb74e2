use std::fs;

use mcld_models::data::cifar::{encode_records, parse_records, record_len};
use mcld_models::data::{synthesize_dataset, DatasetManifest};
use mcld_models::{build_model, load_dataset, Architecture, DatasetSpec, ImageSet, ModelSpec, SynthOptions};
use proptest::prelude::*;

fn opts() -> SynthOptions {
    SynthOptions { per_class: 50, test_per_class: 10, ..SynthOptions::default() }
}

#[test]
fn synthetic_dataset_has_the_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    let m = synthesize_dataset(4, [3, 8, 8], 1, &opts(), dir.path()).unwrap();
    assert_eq!(m.train.records, 200);
    assert_eq!(m.test.records, 40);
    let bytes = fs::read(dir.path().join(&m.train.file)).unwrap();
    assert_eq!(bytes.len(), 200 * record_len([3, 8, 8]));
    let set = parse_records(&bytes, [3, 8, 8], 4).unwrap();
    assert_eq!(set.class_counts(4), vec![50; 4]);
    assert_eq!(DatasetManifest::read(dir.path()).unwrap(), m);
}

#[test]
fn regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synthesize_dataset(4, [3, 8, 8], 9, &opts(), a.path()).unwrap();
    synthesize_dataset(4, [3, 8, 8], 9, &opts(), b.path()).unwrap();
    for f in ["train.bin", "test.bin", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    synthesize_dataset(4, [3, 8, 8], 10, &opts(), c.path()).unwrap();
    assert_ne!(fs::read(a.path().join("train.bin")).unwrap(), fs::read(c.path().join("train.bin")).unwrap());
}

#[test]
fn stored_and_in_memory_datasets_agree() {
    let dir = tempfile::tempdir().unwrap();
    synthesize_dataset(3, [3, 8, 8], 2, &opts(), dir.path()).unwrap();
    let spec = DatasetSpec { num_classes: 3, image_shape: [3, 8, 8], seed: 2, synthetic: opts(), ..Default::default() };
    let memory = load_dataset(&spec).unwrap();
    let stored = load_dataset(&DatasetSpec { path: Some(dir.path().to_path_buf()), ..spec }).unwrap();
    assert_eq!(memory.train, stored.train);
    assert_eq!(memory.test, stored.test);
}

#[test]
fn corrupted_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synthesize_dataset(3, [3, 8, 8], 2, &opts(), dir.path()).unwrap();
    let path = dir.path().join("test.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes[1] ^= 0x40;
    fs::write(&path, bytes).unwrap();
    let spec = DatasetSpec {
        num_classes: 3,
        image_shape: [3, 8, 8],
        path: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    assert!(load_dataset(&spec).is_err());
}

#[test]
fn batch_order_depends_only_on_seed_and_epoch() {
    let spec =
        DatasetSpec { num_classes: 4, image_shape: [3, 8, 8], batch_size: 16, synthetic: opts(), ..Default::default() };
    let data = load_dataset(&spec).unwrap();
    let order = |seed, epoch| -> Vec<usize> { data.train_batches(seed, epoch).flat_map(|b| b.indices).collect() };
    assert_eq!(order(3, 1), order(3, 1));
    assert_ne!(order(3, 1), order(3, 2));
    assert_ne!(order(3, 1), order(4, 1));
    let mut all = order(3, 1);
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());
    let a: Vec<_> = data.train_batches(3, 1).map(|b| b.images).collect();
    let b: Vec<_> = data.train_batches(3, 1).map(|b| b.images).collect();
    assert_eq!(a, b);
}

fn specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec { architecture: Architecture::PlainConv, depth: 2, width: 4, num_classes: 5, in_channels: 3 },
        ModelSpec { architecture: Architecture::ResNet, depth: 1, width: 4, num_classes: 5, in_channels: 3 },
    ]
}

#[test]
fn eval_forward_is_deterministic() {
    let spec =
        DatasetSpec { num_classes: 5, image_shape: [3, 8, 8], batch_size: 8, synthetic: opts(), ..Default::default() };
    let data = load_dataset(&spec).unwrap();
    let batch = data.eval_batches(mcld_models::Split::Test).next().unwrap();
    for s in specs() {
        let mut net = build_model(&s, 1).unwrap();
        let a = net.forward(&batch.images, false);
        let b = net.forward(&batch.images, false);
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.features.dim(), (8, s.feature_dim()));
        assert_eq!(a.logits.dim(), (8, 5));
    }
}

#[test]
fn initialization_depends_only_on_spec_and_seed() {
    for s in specs() {
        let a = build_model(&s, 7).unwrap();
        assert_eq!(a.checksum(), build_model(&s, 7).unwrap().checksum());
        assert_ne!(a.checksum(), build_model(&s, 8).unwrap().checksum());
        let mut c = build_model(&s, 8).unwrap();
        c.load_state(&a.state()).unwrap();
        assert_eq!(c.checksum(), a.checksum());
    }
}

proptest! {
    #[test]
    fn records_round_trip(labels in prop::collection::vec(0usize..10, 0..20), fill in any::<u8>()) {
        let shape = [1, 2, 3];
        let mut set = ImageSet::empty(shape);
        for (i, &l) in labels.iter().enumerate() {
            let img: Vec<u8> = (0..6).map(|j| fill.wrapping_add((i * 6 + j) as u8)).collect();
            set.push(&img, l).unwrap();
        }
        let bytes = encode_records(&set).unwrap();
        prop_assert_eq!(bytes.len(), labels.len() * record_len(shape));
        prop_assert_eq!(parse_records(&bytes, shape, 10).unwrap(), set);
    }

    #[test]
    fn truncated_records_are_rejected(n in 1usize..10, cut in 1usize..7) {
        let bytes = vec![0u8; n * 7 - cut];
        prop_assert!(parse_records(&bytes, [1, 2, 3], 2).is_err());
    }
}
