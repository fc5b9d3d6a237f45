//! Plain-text `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. Every key has a per-experiment default; reports mark which values
//! came from defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    UntrainedMnist,
    MnistOneLayer,
    MnistTwoLayer,
    SignOneLayer,
    SignTwoLayer,
    SyntheticDemo,
}

impl ExperimentKind {
    pub const ALL: [Self; 6] = [
        Self::UntrainedMnist,
        Self::MnistOneLayer,
        Self::MnistTwoLayer,
        Self::SignOneLayer,
        Self::SignTwoLayer,
        Self::SyntheticDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UntrainedMnist => "untrained-mnist",
            Self::MnistOneLayer => "mnist-1layer",
            Self::MnistTwoLayer => "mnist-2layer",
            Self::SignOneLayer => "sign-1layer",
            Self::SignTwoLayer => "sign-2layer",
            Self::SyntheticDemo => "synthetic-demo",
        }
    }

    pub fn is_mnist(self) -> bool {
        matches!(self, Self::UntrainedMnist | Self::MnistOneLayer | Self::MnistTwoLayer)
    }

    pub fn is_sign(self) -> bool {
        matches!(self, Self::SignOneLayer | Self::SignTwoLayer)
    }

    pub fn is_trained(self) -> bool {
        !matches!(self, Self::UntrainedMnist | Self::SyntheticDemo)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// One convolution layer: `kernels x height x width / stride`. Input
/// channels follow from the previous layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernels: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}/{}", self.kernels, self.height, self.width, self.stride)
    }
}

impl FromStr for ConvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad layer {s:?}, expected KxHxW or KxHxW/stride"));
        let (dims, stride) = match s.trim().split_once('/') {
            Some((d, st)) => (d, st.trim().parse().map_err(|_| bad())?),
            None => (s.trim(), 1),
        };
        let dims: Vec<usize> = dims
            .split('x')
            .map(|d| d.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [kernels, height, width] = dims[..] else {
            return Err(bad());
        };
        if kernels == 0 || height == 0 || width == 0 || stride == 0 {
            return Err(Error::Config(format!("layer {s:?} has a zero extent or stride")));
        }
        Ok(Self {
            kernels,
            height,
            width,
            stride,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    Template,
    Random,
    Both,
}

impl InitMode {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Self::Template => &["template"],
            Self::Random => &["random"],
            Self::Both => &["template", "random"],
        }
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "template" => Ok(Self::Template),
            "random" => Ok(Self::Random),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("init must be template, random or both, got {s:?}"))),
        }
    }
}

/// Flag values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub source: Option<PathBuf>,
    /// Directory holding the four standard MNIST IDX files.
    pub mnist_dir: PathBuf,
    /// Root with one subdirectory of images per class.
    pub image_dir: PathBuf,
    pub classes: Vec<String>,
    pub image_size: (usize, usize),
    pub crop: Option<(usize, usize)>,
    pub layers: Vec<ConvSpec>,
    pub bias: bool,
    pub init: InitMode,
    pub patches_per_image: usize,
    /// Rescale every template kernel to unit L2 norm.
    pub unit_templates: bool,
    /// Images per class whose feature maps feed deeper template layers.
    pub template_images_per_class: usize,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub out_dir: PathBuf,
    explicit: BTreeSet<String>,
}

const KEYS: &[&str] = &[
    "experiment",
    "mnist_dir",
    "image_dir",
    "classes",
    "image_size",
    "crop",
    "layers",
    "bias",
    "init",
    "patches_per_image",
    "template_norm",
    "template_images_per_class",
    "epochs",
    "learning_rate",
    "batch_size",
    "seed",
    "train_fraction",
    "train_limit",
    "test_limit",
    "out",
];

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("bad size {s:?}, expected HxW"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn two_layer() -> Vec<ConvSpec> {
    vec![
        ConvSpec { kernels: 16, height: 9, width: 9, stride: 2 },
        ConvSpec { kernels: 10, height: 5, width: 5, stride: 1 },
    ]
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let full = |h, w| vec![ConvSpec { kernels: 10, height: h, width: w, stride: 1 }];
        let (crop, layers, init) = match kind {
            ExperimentKind::UntrainedMnist => (Some((20, 20)), full(20, 20), InitMode::Template),
            ExperimentKind::MnistOneLayer => (Some((20, 20)), full(20, 20), InitMode::Both),
            ExperimentKind::MnistTwoLayer => (None, two_layer(), InitMode::Both),
            ExperimentKind::SignOneLayer => (None, full(64, 64), InitMode::Template),
            ExperimentKind::SignTwoLayer | ExperimentKind::SyntheticDemo => {
                (None, two_layer(), InitMode::Template)
            }
        };
        let unit_templates = layers.len() > 1;
        Self {
            kind,
            source: None,
            mnist_dir: PathBuf::from("data/mnist"),
            image_dir: PathBuf::from("data/sign_language"),
            classes: "C,E,I,K,L,O,P,Q,X,Y".split(',').map(str::to_owned).collect(),
            image_size: (64, 64),
            crop,
            layers,
            bias: true,
            init,
            patches_per_image: 8,
            unit_templates,
            template_images_per_class: 500,
            train: TrainConfig::default(),
            train_fraction: 0.8,
            train_limit: None,
            test_limit: None,
            out_dir: PathBuf::from("runs").join(kind.name()),
            explicit: BTreeSet::new(),
        }
    }

    /// Parses config text on top of the defaults for `kind` and validates it.
    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self> {
        let mut cfg = Self::defaults(kind);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if cfg.explicit.contains(key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(kind, &text)?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Sets one key from its textual value and marks it explicit.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                let named: ExperimentKind = value.parse()?;
                if named != self.kind {
                    return Err(Error::Config(format!(
                        "config is for {named} but {} was requested",
                        self.kind
                    )));
                }
            }
            "mnist_dir" => self.mnist_dir = PathBuf::from(value),
            "image_dir" => self.image_dir = PathBuf::from(value),
            "classes" => {
                self.classes = value
                    .split(',')
                    .map(|c| c.trim().to_owned())
                    .filter(|c| !c.is_empty())
                    .collect();
            }
            "image_size" => self.image_size = parse_size(value)?,
            "crop" => {
                self.crop = match value {
                    "none" => None,
                    v => Some(parse_size(v)?),
                }
            }
            "layers" => {
                self.layers = value.split(',').map(str::parse).collect::<Result<_>>()?;
            }
            "bias" => self.bias = parse_value(key, value)?,
            "init" => self.init = value.parse()?,
            "patches_per_image" => self.patches_per_image = parse_value(key, value)?,
            "template_norm" => {
                self.unit_templates = match value {
                    "none" => false,
                    "unit" => true,
                    _ => return Err(Error::Config(format!("template_norm must be none or unit, got {value:?}"))),
                }
            }
            "template_images_per_class" => {
                self.template_images_per_class = parse_value(key, value)?;
            }
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "batch_size" => self.train.batch_size = parse_value(key, value)?,
            "seed" => self.train.seed = parse_value(key, value)?,
            "train_fraction" => self.train_fraction = parse_value(key, value)?,
            "train_limit" => self.train_limit = Some(parse_value(key, value)?),
            "test_limit" => self.test_limit = Some(parse_value(key, value)?),
            "out" => self.out_dir = PathBuf::from(value),
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}, expected one of {}",
                    KEYS.join(", ")
                )))
            }
        }
        self.explicit.insert(key.to_owned());
        Ok(())
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(seed) = overrides.seed {
            self.set("seed", &seed.to_string())?;
        }
        if let Some(epochs) = overrides.epochs {
            self.set("epochs", &epochs.to_string())?;
        }
        if let Some(lr) = overrides.learning_rate {
            self.set("learning_rate", &lr.to_string())?;
        }
        if let Some(out) = &overrides.out_dir {
            self.out_dir = out.clone();
            self.explicit.insert("out".into());
        }
        self.validate()
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn is_default(&self, key: &str) -> bool {
        !self.explicit.contains(key)
    }

    pub fn num_classes(&self) -> usize {
        if self.kind.is_sign() {
            self.classes.len()
        } else {
            10
        }
    }

    /// Network input shape implied by the data settings. MNIST is 28x28
    /// before cropping.
    pub fn input_shape(&self) -> [usize; 3] {
        if self.kind.is_sign() {
            [3, self.image_size.0, self.image_size.1]
        } else {
            let (h, w) = self.crop.unwrap_or((28, 28));
            [1, h, w]
        }
    }

    /// Checks value ranges and that the layer stack chains over the input.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.kind == ExperimentKind::SyntheticDemo {
            return Ok(());
        }
        if self.patches_per_image == 0 || self.template_images_per_class == 0 {
            return Err(Error::Config(
                "patches_per_image and template_images_per_class must be at least 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if matches!(self.train_limit, Some(0)) || matches!(self.test_limit, Some(0)) {
            return Err(Error::Config("train_limit and test_limit must be at least 1".into()));
        }
        if self.kind.is_sign() {
            let mut unique = self.classes.clone();
            unique.sort();
            unique.dedup();
            if unique.len() != self.classes.len() || unique.len() < 2 {
                return Err(Error::Config("classes must list at least two distinct names".into()));
            }
        }
        if let Some((h, w)) = self.crop {
            if self.kind.is_mnist() && (h > 28 || w > 28) {
                return Err(Error::Shape(format!("crop {h}x{w} exceeds 28x28 MNIST images")));
            }
        }
        if self.layers.is_empty() {
            return Err(Error::Shape("at least one convolution layer is required".into()));
        }
        let [_, mut h, mut w] = self.input_shape();
        for (i, l) in self.layers.iter().enumerate() {
            if l.height > h || l.width > w {
                return Err(Error::Shape(format!(
                    "layer {} kernel {}x{} does not fit its {h}x{w} input",
                    i + 1,
                    l.height,
                    l.width
                )));
            }
            h = (h - l.height) / l.stride + 1;
            w = (w - l.width) / l.stride + 1;
        }
        let last = self.layers.last().expect("nonempty").kernels;
        if last != self.num_classes() {
            return Err(Error::Shape(format!(
                "last layer has {last} kernels but there are {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// `key = value` lines for every setting, defaults marked.
    pub fn describe(&self) -> String {
        let layers: Vec<String> = self.layers.iter().map(ToString::to_string).collect();
        let size = |(h, w): (usize, usize)| format!("{h}x{w}");
        let opt = |v: Option<usize>| v.map_or_else(|| "all".to_owned(), |n| n.to_string());
        let init = match self.init {
            InitMode::Template => "template",
            InitMode::Random => "random",
            InitMode::Both => "both",
        };
        let mut rows: Vec<(&str, String)> = vec![("seed", self.seed().to_string())];
        if self.kind.is_mnist() {
            rows.push(("mnist_dir", self.mnist_dir.display().to_string()));
            rows.push(("crop", self.crop.map_or_else(|| "none".to_owned(), size)));
        }
        if self.kind.is_sign() {
            rows.push(("image_dir", self.image_dir.display().to_string()));
            rows.push(("classes", self.classes.join(",")));
            rows.push(("image_size", size(self.image_size)));
            rows.push(("train_fraction", self.train_fraction.to_string()));
        }
        if self.kind != ExperimentKind::SyntheticDemo {
            rows.push(("layers", layers.join(",")));
            rows.push(("bias", self.bias.to_string()));
            rows.push(("init", init.to_owned()));
            rows.push(("patches_per_image", self.patches_per_image.to_string()));
            rows.push(("template_norm", if self.unit_templates { "unit" } else { "none" }.to_owned()));
            rows.push(("template_images_per_class", self.template_images_per_class.to_string()));
            rows.push(("train_limit", opt(self.train_limit)));
            rows.push(("test_limit", opt(self.test_limit)));
        }
        if self.kind.is_trained() {
            rows.push(("epochs", self.train.epochs.to_string()));
            rows.push(("learning_rate", self.train.learning_rate.to_string()));
            rows.push(("batch_size", self.train.batch_size.to_string()));
        }
        let mut out = String::new();
        for (key, value) in rows {
            let mark = if self.is_default(key) { "  (default)" } else { "" };
            out.push_str(&format!("{key} = {value}{mark}\n"));
        }
        out
    }
}

fn strip_prefix(e: &Error) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").map(str::to_owned).unwrap_or(s)
}
