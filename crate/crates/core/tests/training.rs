mod support;

use mfcnn_core::data::{LabeledDataset, Split};
use mfcnn_core::nn::{train, ConvLayer, Layer, Network, TrainConfig};
use mfcnn_core::templates::{patch_mean_kernels, PatchSampling};
use mfcnn_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_dataset(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let class = i % 3;
        images.push(
            Tensor::from_fn(&[1, 6, 6], |j| {
                let bar = match class {
                    0 => j[1] == 2,
                    1 => j[2] == 3,
                    _ => j[1] == j[2],
                };
                f64::from(u8::from(bar)) + rng.gen_range(0.0..0.3)
            })
            .unwrap(),
        );
        labels.push(class);
    }
    LabeledDataset::new(images, labels, vec!["row".into(), "col".into(), "diag".into()], Split::Train).unwrap()
}

fn toy_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = ConvLayer::random([3, 1, 3, 3], 1, true, &mut rng).unwrap();
    Network::new(
        [1, 6, 6],
        vec![Layer::Conv(conv), Layer::Relu, Layer::GlobalMaxPool, Layer::SoftmaxClassifier],
        vec!["row".into(), "col".into(), "diag".into()],
    )
    .unwrap()
}

/// Class-mean 3x3 patches of the toy images as kernels: every unit starts alive.
fn template_network(ds: &LabeledDataset) -> Network {
    let bank = patch_mean_kernels(ds, (3, 3), PatchSampling::AllOffsets, 0).unwrap();
    let conv = ConvLayer::from_bank(&bank, 1, true).unwrap();
    Network::new(
        [1, 6, 6],
        vec![Layer::Conv(conv), Layer::Relu, Layer::GlobalMaxPool, Layer::SoftmaxClassifier],
        ds.class_names.clone(),
    )
    .unwrap()
}

fn config(epochs: usize, learning_rate: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate,
        batch_size: 4,
        seed: 9,
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let ds = toy_dataset(12, 0);
    let mut net = toy_network(1);
    let before = net.clone();
    let log = train(&mut net, &ds, None, &config(3, 0.0)).unwrap();
    assert_eq!(net, before);
    assert_eq!(log.records.len(), 4);
}

#[test]
fn singleton_dataset_is_memorised() {
    let ds = toy_dataset(3, 2).take(1);
    let mut net = template_network(&toy_dataset(3, 2));
    let log = train(&mut net, &ds, None, &config(400, 0.1)).unwrap();
    assert!(log.final_loss().unwrap() < 0.01, "{:?}", log.final_loss());
}

#[test]
fn loss_decreases_and_accuracy_rises() {
    let ds = toy_dataset(60, 4);
    let test = toy_dataset(30, 5);
    let mut net = template_network(&ds);
    let log = train(&mut net, &ds, Some(&test), &config(40, 0.05)).unwrap();
    let (first, last) = (&log.records[0], log.records.last().unwrap());
    assert!(last.loss < first.loss);
    assert!(last.test_accuracy.unwrap() > 0.9, "{last:?}");
    assert!(log.to_csv().starts_with("epoch,loss,train_acc,test_acc\n0,"));
}

#[test]
fn reruns_are_bit_identical() {
    let ds = toy_dataset(25, 7);
    let run = || {
        let mut net = toy_network(8);
        let log = train(&mut net, &ds, Some(&ds), &config(5, 0.05)).unwrap();
        (net, log)
    };
    assert_eq!(run(), run());
    let mut other = toy_network(8);
    let other_cfg = TrainConfig { seed: 10, ..config(5, 0.05) };
    train(&mut other, &ds, None, &other_cfg).unwrap();
    assert_ne!(other, run().0);
}

#[test]
fn batch_size_larger_than_dataset_is_full_batch() {
    let ds = toy_dataset(5, 1);
    let mut a = toy_network(2);
    let mut b = toy_network(2);
    train(&mut a, &ds, None, &TrainConfig { batch_size: 5, ..config(2, 0.1) }).unwrap();
    train(&mut b, &ds, None, &TrainConfig { batch_size: 500, ..config(2, 0.1) }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn divergence_is_reported() {
    let ds = toy_dataset(6, 0);
    let mut net = toy_network(0);
    let err = train(&mut net, &ds, None, &config(5, f64::MAX)).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
    assert_eq!(err.category(), "training");
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = toy_dataset(3, 0);
    let mut net = toy_network(0);
    for bad in [config(0, 0.1), config(1, -1.0), config(1, f64::NAN), TrainConfig { batch_size: 0, ..config(1, 0.1) }] {
        assert!(matches!(train(&mut net, &ds, None, &bad), Err(Error::Config(_))));
    }
}
