//! A one-layer full-kernel network and a bank of class templates are the
//! same classifier.

mod support;

use mfcnn_core::data::{LabeledDataset, Split};
use mfcnn_core::filtering::classify_by_bank;
use mfcnn_core::nn::{ConvLayer, Layer, Network};
use mfcnn_core::templates::class_mean_kernels;
use mfcnn_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(rng: &mut impl Rng, classes: usize, per_class: usize, shape: [usize; 3]) -> LabeledDataset {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            images.push(Tensor::from_fn(&shape, |_| rng.gen_range(0.0..1.0)).unwrap());
            labels.push(c);
        }
    }
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    LabeledDataset::new(images, labels, names, Split::Train).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_equals_bank_pipeline(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(2..6);
        let shape = [rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(2..7)];
        let train = random_dataset(&mut rng, classes, 3, shape);
        let bank = class_mean_kernels(&train).unwrap();
        let conv = ConvLayer::from_bank(&bank, 1, rng.gen()).unwrap();
        let net = Network::new(
            shape,
            vec![Layer::Conv(conv), Layer::Relu, Layer::GlobalMaxPool, Layer::SoftmaxClassifier],
            bank.labels().to_vec(),
        )
        .unwrap();
        for _ in 0..20 {
            // Signed inputs exercise the ReLU clamp.
            let x = Tensor::from_fn(&shape, |_| rng.gen_range(-1.0..1.0)).unwrap();
            prop_assert_eq!(net.predict(&x).unwrap(), classify_by_bank(&x, &bank).unwrap());
        }
    }

    #[test]
    fn class_means_ignore_image_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_dataset(&mut rng, 3, 4, [1, 3, 3]);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let shuffled = LabeledDataset::new(
            order.iter().map(|&i| ds.images[i].clone()).collect(),
            order.iter().map(|&i| ds.labels[i]).collect(),
            ds.class_names.clone(),
            Split::Train,
        )
        .unwrap();
        let a = class_mean_kernels(&ds).unwrap();
        let b = class_mean_kernels(&shuffled).unwrap();
        for (ka, kb) in a.kernels().iter().zip(b.kernels()) {
            prop_assert!(support::max_abs_diff(ka, kb) <= 1e-12);
        }
    }

    #[test]
    fn class_means_stay_within_pixel_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_dataset(&mut rng, 2, 5, [2, 3, 3]);
        let bank = class_mean_kernels(&ds).unwrap();
        for (k, members) in bank.kernels().iter().zip(ds.indices_by_class()) {
            for (cell, &v) in k.data().iter().enumerate() {
                let values: Vec<f64> = members.iter().map(|&i| ds.images[i].data()[cell]).collect();
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
