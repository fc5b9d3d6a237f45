//! Named experiments: dataset preparation, network construction, training,
//! and the artifacts each run leaves behind.
//!
//! Every run directory holds `report.txt`, `confusion.csv`, `log.csv`,
//! `kernels_before.*`, `kernels_after.*` (PGM for grey kernels, PPM for
//! colour) and a `model.mfcn` checkpoint. Runs that compare both
//! initialisations put each in its own subdirectory.

mod config;
mod confusion;
pub mod synthetic;

pub use config::{ConvSpec, ExperimentConfig, ExperimentKind, InitMode, Overrides};
pub use confusion::{emit_confusion, ConfusionMatrix};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{center_crop, load_image_dir, load_mnist_idx, split_train_test, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::filtering::FilterBank;
use crate::netpbm;
use crate::nn::{self, checkpoint, conv_forward, relu_forward, ConvLayer, Layer, Network, TrainLog};
use crate::templates::{class_mean_kernels, montage, patch_mean_bank, random_kernels, PatchSampling};

/// Writes a kernel montage to `path`.
pub fn emit_kernel_montage(bank: &FilterBank, path: &Path) -> Result<()> {
    netpbm::write(path, &montage(bank)?)
}

/// `"ppm"` for three-channel kernels, `"pgm"` otherwise.
pub fn montage_extension(bank: &FilterBank) -> &'static str {
    match bank.kernel_shape() {
        [3, _, _] => "ppm",
        _ => "pgm",
    }
}

/// Outcome of one initialisation within an experiment.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub init: String,
    pub dir: PathBuf,
    pub untrained_accuracy: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub log: Option<TrainLog>,
    pub network: Network,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub kind: ExperimentKind,
    pub text: String,
    pub runs: Vec<RunSummary>,
}

impl Report {
    pub fn run(&self, init: &str) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.init == init)
    }
}

/// Dispatches on `config.kind`.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    match config.kind {
        ExperimentKind::UntrainedMnist => run_untrained_mnist(config),
        ExperimentKind::MnistOneLayer => run_trained_mnist_one_layer(config),
        ExperimentKind::MnistTwoLayer => run_trained_mnist_two_layer(config),
        ExperimentKind::SignOneLayer => run_sign_one_layer(config),
        ExperimentKind::SignTwoLayer => run_sign_two_layer(config),
        ExperimentKind::SyntheticDemo => {
            let body = synthetic::run_synthetic_demo(&config.out_dir, config.seed())?;
            let text = format!("{}\n{body}", header(config));
            write_text(&config.out_dir.join("report.txt"), &text)?;
            Ok(Report {
                kind: config.kind,
                text,
                runs: Vec::new(),
            })
        }
    }
}

fn expect_kind(config: &ExperimentConfig, kinds: &[ExperimentKind]) -> Result<()> {
    if kinds.contains(&config.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!("{} config passed to the wrong runner", config.kind)))
    }
}

pub fn run_untrained_mnist(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, &[ExperimentKind::UntrainedMnist])?;
    let (train, test) = load_mnist(config)?;
    run_on(config, &train, &test)
}

pub fn run_trained_mnist_one_layer(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, &[ExperimentKind::MnistOneLayer])?;
    let (train, test) = load_mnist(config)?;
    run_on(config, &train, &test)
}

pub fn run_trained_mnist_two_layer(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, &[ExperimentKind::MnistTwoLayer])?;
    let (train, test) = load_mnist(config)?;
    run_on(config, &train, &test)
}

pub fn run_sign_one_layer(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, &[ExperimentKind::SignOneLayer])?;
    let (train, test) = load_sign(config)?;
    run_on(config, &train, &test)
}

pub fn run_sign_two_layer(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, &[ExperimentKind::SignTwoLayer])?;
    let (train, test) = load_sign(config)?;
    run_on(config, &train, &test)
}

fn limit(ds: LabeledDataset, n: Option<usize>) -> LabeledDataset {
    match n {
        Some(n) if n < ds.len() => ds.take(n),
        _ => ds,
    }
}

/// Loads the standard train and test IDX pairs from `config.mnist_dir`.
pub fn load_mnist(config: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = &config.mnist_dir;
    let load = |images: &str, labels: &str, split: Split| -> Result<LabeledDataset> {
        let mut ds = load_mnist_idx(&dir.join(images), &dir.join(labels))?;
        ds.split = split;
        match config.crop {
            Some(size) => center_crop(&ds, size),
            None => Ok(ds),
        }
    };
    let train = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::Train)?;
    let test = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::Test)?;
    Ok((limit(train, config.train_limit), limit(test, config.test_limit)))
}

/// Loads the selected classes from `config.image_dir` and splits them.
pub fn load_sign(config: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let ds = load_image_dir(&config.image_dir, &config.classes, config.image_size)?;
    let (train, test) = split_train_test(&ds, config.train_fraction, config.seed())?;
    Ok((limit(train, config.train_limit), limit(test, config.test_limit)))
}

/// Up to `per_class` images of every class, in dataset order.
fn per_class_sample(ds: &LabeledDataset, per_class: usize) -> LabeledDataset {
    let mut keep: Vec<usize> = ds
        .indices_by_class()
        .into_iter()
        .flat_map(|members| members.into_iter().take(per_class))
        .collect();
    keep.sort_unstable();
    ds.subset(&keep, ds.split)
}

fn map_dataset(ds: &LabeledDataset, layer: &ConvLayer) -> Result<LabeledDataset> {
    use rayon::prelude::*;
    let images = ds
        .images
        .par_iter()
        .map(|x| conv_forward(x, layer).map(|y| relu_forward(&y)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(images, ds.labels.clone(), ds.class_names.clone(), ds.split)
}

/// Template kernels for one layer: class means when the kernel covers its
/// whole input, patch means otherwise.
fn template_bank(source: &LabeledDataset, spec: &ConvSpec, config: &ExperimentConfig, seed: u64) -> Result<FilterBank> {
    let [_, h, w] = source
        .image_shape()
        .ok_or_else(|| Error::Data("no training images".into()))?;
    if (spec.height, spec.width) == (h, w) {
        if spec.kernels != source.num_classes() {
            return Err(Error::Config(format!(
                "full-size template layer needs one kernel per class ({}), got {}",
                source.num_classes(),
                spec.kernels
            )));
        }
        return class_mean_kernels(source);
    }
    patch_mean_bank(
        source,
        spec.kernels,
        (spec.height, spec.width),
        PatchSampling::Random {
            patches_per_image: config.patches_per_image,
        },
        seed,
    )
}

/// Scales every kernel to unit L2 norm; all-zero kernels are left alone.
fn unit_norm(bank: &FilterBank) -> Result<FilterBank> {
    let kernels = bank
        .kernels()
        .iter()
        .map(|k| {
            let norm = k.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                k.scale(1.0 / norm)
            } else {
                k.clone()
            }
        })
        .collect();
    FilterBank::new(kernels, bank.labels().to_vec())
}

/// Builds the configured network. Template initialisation is layer-wise:
/// each deeper layer's templates come from the rectified feature maps of
/// the layers already built, over a per-class sample of training images.
pub fn build_network(config: &ExperimentConfig, train: &LabeledDataset, init: &str) -> Result<Network> {
    let [mut channels, _, _] = train
        .image_shape()
        .ok_or_else(|| Error::Data("training set is empty".into()))?;
    let mut features: Option<LabeledDataset> = None;
    let mut layers = Vec::new();
    for (i, spec) in config.layers.iter().enumerate() {
        let seed = config.seed().wrapping_add(i as u64);
        let conv = match init {
            "template" => {
                let bank = template_bank(features.as_ref().unwrap_or(train), spec, config, seed)?;
                let bank = if config.unit_templates { unit_norm(&bank)? } else { bank };
                ConvLayer::from_bank(&bank, spec.stride, config.bias)?
            }
            "random" => {
                let labels = (0..spec.kernels).map(|k| format!("k{k}")).collect();
                let bank = random_kernels(labels, &[channels, spec.height, spec.width], seed)?;
                ConvLayer::from_bank(&bank, spec.stride, config.bias)?
            }
            other => return Err(Error::Config(format!("unknown init {other:?}"))),
        };
        if init == "template" && i + 1 < config.layers.len() {
            let source = match &features {
                Some(f) => map_dataset(f, &conv)?,
                None => map_dataset(&per_class_sample(train, config.template_images_per_class), &conv)?,
            };
            features = Some(source);
        }
        channels = spec.kernels;
        layers.push(Layer::Conv(conv));
        layers.push(Layer::Relu);
    }
    layers.push(Layer::GlobalMaxPool);
    layers.push(Layer::SoftmaxClassifier);
    let [c, h, w] = train.image_shape().expect("checked above");
    Network::new([c, h, w], layers, train.class_names.clone())
}

fn conv_banks(net: &Network) -> Result<Vec<FilterBank>> {
    net.conv_layers()
        .map(|c| c.to_bank((0..c.num_kernels()).map(|k| k.to_string()).collect()))
        .collect()
}

fn emit_montages(net: &Network, dir: &Path, stem: &str) -> Result<()> {
    for (i, bank) in conv_banks(net)?.iter().enumerate() {
        let suffix = if i == 0 { String::new() } else { format!("_layer{}", i + 1) };
        let path = dir.join(format!("{stem}{suffix}.{}", montage_extension(bank)));
        emit_kernel_montage(bank, &path)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn header(config: &ExperimentConfig) -> String {
    let source = config
        .source
        .as_ref()
        .map_or_else(|| "built-in defaults".to_owned(), |p| p.display().to_string());
    format!(
        "experiment: {}\nseed: {}\nconfig: {source}\n\n{}",
        config.kind,
        config.seed(),
        config.describe()
    )
}

fn architecture(net: &Network) -> String {
    let parts: Vec<String> = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Conv(c) => {
                let s = c.kernels.shape();
                let bias = if c.biases.is_some() { "+bias" } else { "" };
                format!("conv {}x{}x{}x{}/{}{bias}", s[0], s[1], s[2], s[3], c.stride)
            }
            other => other.name().to_owned(),
        })
        .collect();
    parts.join(" -> ")
}

fn run_init(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    init: &str,
    dir: &Path,
) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut net = build_network(config, train, init)?;
    emit_montages(&net, dir, "kernels_before")?;
    let before = nn::evaluate(&net, test)?;
    let log = if config.kind.is_trained() {
        let log = nn::train(&mut net, train, Some(test), &config.train)?;
        write_text(&dir.join("log.csv"), &log.to_csv())?;
        emit_montages(&net, dir, "kernels_after")?;
        Some(log)
    } else {
        None
    };
    let after = match &log {
        Some(_) => nn::evaluate(&net, test)?,
        None => before.clone(),
    };
    let confusion = ConfusionMatrix::from_predictions(test.class_names.clone(), &test.labels, &after.predictions)?;
    emit_confusion(&confusion, &dir.join("confusion.csv"))?;
    checkpoint::save(&net, &dir.join("model.mfcn"))?;
    Ok(RunSummary {
        init: init.to_owned(),
        dir: dir.to_path_buf(),
        untrained_accuracy: before.accuracy,
        accuracy: confusion.accuracy(),
        confusion,
        log,
        network: net,
    })
}

fn run_on(config: &ExperimentConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<Report> {
    config.validate()?;
    let [c, h, w] = train
        .image_shape()
        .ok_or_else(|| Error::Data("training set is empty".into()))?;
    if [c, h, w] != config.input_shape() {
        return Err(Error::Shape(format!(
            "data is {c}x{h}x{w} but the config expects {:?}",
            config.input_shape()
        )));
    }
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let inits = config.init.labels();
    let mut runs = Vec::new();
    for &init in inits {
        let dir = if inits.len() == 1 {
            config.out_dir.clone()
        } else {
            config.out_dir.join(init)
        };
        runs.push(run_init(config, train, test, init, &dir)?);
    }

    let mut text = header(config);
    let _ = writeln!(
        text,
        "\ntrain images: {}\ntest images: {}\ninput: {c}x{h}x{w}\nnetwork: {}",
        train.len(),
        test.len(),
        architecture(&runs[0].network)
    );
    for run in &runs {
        let _ = writeln!(text, "\n[{}]", run.init);
        if let Some(log) = &run.log {
            let (first, last) = (log.initial_loss().unwrap_or(f64::NAN), log.final_loss().unwrap_or(f64::NAN));
            let _ = writeln!(text, "untrained test accuracy: {:.4}", run.untrained_accuracy);
            let _ = writeln!(text, "initial training loss: {first:.6}\nfinal training loss: {last:.6}");
        }
        let _ = writeln!(text, "test accuracy: {:.4}", run.accuracy);
        let _ = writeln!(text, "per-class accuracy:");
        for (name, acc) in run.confusion.class_names().iter().zip(run.confusion.per_class_accuracy()) {
            let acc = acc.map_or_else(|| "n/a".to_owned(), |a| format!("{a:.4}"));
            let _ = writeln!(text, "  {name}: {acc}");
        }
    }
    if let (Some(t), Some(r)) = (runs.iter().find(|r| r.init == "template"), runs.iter().find(|r| r.init == "random")) {
        let _ = writeln!(
            text,
            "\ntemplate minus random test accuracy: {:+.4}",
            t.accuracy - r.accuracy
        );
    }
    write_text(&config.out_dir.join("report.txt"), &text)?;
    Ok(Report {
        kind: config.kind,
        text,
        runs,
    })
}

/// Runs a config on caller-supplied datasets, skipping dataset loading.
pub fn run_with_data(config: &ExperimentConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<Report> {
    if config.kind == ExperimentKind::SyntheticDemo {
        return Err(Error::Config("the synthetic demo takes no dataset".into()));
    }
    run_on(config, train, test)
}
