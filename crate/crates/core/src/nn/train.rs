use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

use super::layers::{predict_one_hot, softmax_cross_entropy};
use super::network::{sgd_step, Gradients, Network};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the training log. Epoch 0 describes the untrained network.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the training set. For epochs after the first
    /// row it is averaged over the epoch's mini-batches, before each update.
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc,test_acc\n");
        for r in &self.records {
            let test = r.test_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.9},{:.6},{}", r.epoch, r.loss, r.train_accuracy, test);
        }
        out
    }
}

/// Loss, accuracy and per-sample predictions of a network on a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate(net: &Network, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let per_sample = ds
        .images
        .par_iter()
        .zip(&ds.labels)
        .map(|(x, &y)| {
            let scores = net.scores(x)?;
            let (loss, _) = softmax_cross_entropy(&scores, y)?;
            Ok((loss, predict_one_hot(&scores)))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / ds.len() as f64;
    let predictions: Vec<usize> = per_sample.into_iter().map(|(_, p)| p).collect();
    let correct = predictions.iter().zip(&ds.labels).filter(|(p, y)| p == y).count();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / ds.len() as f64,
        predictions,
    })
}

/// Mini-batch SGD on the mean cross-entropy of each batch.
///
/// The sample order is reshuffled every epoch from a generator seeded once
/// with `config.seed`. Per-sample gradients may be computed in parallel but
/// are summed in batch order, so results are bit-reproducible.
pub fn train(
    net: &mut Network,
    train_set: &LabeledDataset,
    test_set: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let test_accuracy = |net: &Network| -> Result<Option<f64>> {
        test_set.map(|t| evaluate(net, t).map(|e| e.accuracy)).transpose()
    };

    let initial = evaluate(net, train_set)?;
    let mut log = TrainLog {
        records: vec![EpochRecord {
            epoch: 0,
            loss: initial.loss,
            train_accuracy: initial.accuracy,
            test_accuracy: test_accuracy(net)?,
        }],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let per_sample = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = (&train_set.images[i], train_set.labels[i]);
                    let trace = net.forward_trace(x)?;
                    let (loss, score_grad) = softmax_cross_entropy(trace.scores(), y)?;
                    let grads = net.backward_from_scores(&trace, &score_grad)?;
                    Ok((loss, predict_one_hot(trace.scores()) == y, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = Gradients::zeros_like(net)?;
            let scale = 1.0 / batch.len() as f64;
            for (loss, hit, grads) in &per_sample {
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss: *loss });
                }
                loss_sum += loss;
                correct += usize::from(*hit);
                total.accumulate(grads, scale)?;
            }
            sgd_step(net, &total, config.learning_rate)?;
        }
        let loss = loss_sum / train_set.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        log.records.push(EpochRecord {
            epoch,
            loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            test_accuracy: test_accuracy(net)?,
        });
    }
    Ok(log)
}
