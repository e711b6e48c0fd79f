use log::debug;
use rand::seq::SliceRandom;

use super::model::{ClassifierModel, EncoderKind};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::nn::{Adadelta, AdadeltaConfig, Adam, AdamConfig, Graph, Optimizer};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam(AdamConfig),
    Adadelta(AdadeltaConfig),
}

impl OptimizerKind {
    pub fn default_for(encoder: EncoderKind) -> Self {
        match encoder {
            EncoderKind::Cnn => OptimizerKind::Adadelta(AdadeltaConfig::default()),
            EncoderKind::Blstm => OptimizerKind::Adam(AdamConfig::default()),
        }
    }

    fn build(self, model: &ClassifierModel) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Adam(c) => Box::new(Adam::new(c, model.params())),
            OptimizerKind::Adadelta(c) => Box::new(Adadelta::new(c, model.params())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub dropout: f64,
    /// Fraction of each class held out for early stopping.
    pub validation_fraction: f64,
    /// Stop once accuracy on the training examples (without dropout)
    /// reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_encoder(encoder: EncoderKind, seed: u64) -> Self {
        TrainConfig {
            optimizer: OptimizerKind::default_for(encoder),
            batch_size: 50,
            max_epochs: 20,
            patience: 3,
            dropout: 0.5,
            validation_fraction: 0.1,
            stop_at_train_accuracy: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("batch_size and max_epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss during the epoch (with dropout).
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    /// Only measured when a training-accuracy stop is configured.
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation loss before the first update.
    pub initial_validation_loss: Option<f64>,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (0 means the initialization).
    pub best_epoch: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
}

fn accuracy(model: &ClassifierModel, xs: &[&[u32]], ys: &[usize], batch: usize) -> Result<f64> {
    let p = model.predict(xs, batch)?;
    let correct = p.iter().zip(ys).filter(|(&p, &l)| (p >= 0.5) == (l == 1)).count();
    Ok(correct as f64 / xs.len() as f64)
}

/// Trains on positives (class 1) and negatives (class 0).
pub fn train(model: &mut ClassifierModel, positives: &Corpus, negatives: &Corpus, config: &TrainConfig) -> Result<TrainHistory> {
    let pos: Vec<&[u32]> = positives.sentences().iter().map(|s| s.ids.as_slice()).collect();
    let neg: Vec<&[u32]> = negatives.sentences().iter().map(|s| s.ids.as_slice()).collect();
    train_on(model, &pos, &neg, config)
}

/// Like [`train`] over borrowed id sequences.
pub fn train_on(
    model: &mut ClassifierModel,
    positives: &[&[u32]],
    negatives: &[&[u32]],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training needs both classes ({} positive, {} negative)",
            positives.len(),
            negatives.len()
        )));
    }

    let mut rng = seeded(config.seed);
    let mut train_set: Vec<(&[u32], usize)> = Vec::new();
    let mut val_set: Vec<(&[u32], usize)> = Vec::new();
    for (class, label) in [(positives, 1usize), (negatives, 0usize)] {
        let mut order: Vec<usize> = (0..class.len()).collect();
        order.shuffle(&mut rng);
        let n_val = (class.len() as f64 * config.validation_fraction).floor() as usize;
        for (k, &i) in order.iter().enumerate() {
            let item = (class[i], label);
            if k < n_val {
                val_set.push(item);
            } else {
                train_set.push(item);
            }
        }
    }

    let val_sentences: Vec<&[u32]> = val_set.iter().map(|e| e.0).collect();
    let val_labels: Vec<usize> = val_set.iter().map(|e| e.1).collect();
    let evaluate = |m: &ClassifierModel| -> Result<Option<(f64, f64)>> {
        if val_set.is_empty() {
            return Ok(None);
        }
        let loss = m.mean_loss(&val_sentences, &val_labels, config.batch_size)?;
        let acc = accuracy(m, &val_sentences, &val_labels, config.batch_size)?;
        Ok(Some((loss, acc)))
    };

    let initial = evaluate(model)?;
    let mut best_loss = initial.map_or(f64::INFINITY, |v| v.0);
    let mut best = model.params().clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut optimizer = config.optimizer.build(model);
    let mut dropout_rng = seeded(derive_seed(config.seed, 1));
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        train_set.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_set.chunks(config.batch_size) {
            let sentences: Vec<&[u32]> = chunk.iter().map(|e| e.0).collect();
            let labels: Vec<usize> = chunk.iter().map(|e| e.1).collect();
            let grads = {
                let mut g = Graph::new(model.params());
                let logits = model.logits_graph(&mut g, &sentences, Some((config.dropout, &mut dropout_rng)))?;
                let loss = g.softmax_cross_entropy(logits, &labels)?;
                total += g.value(loss).item() * chunk.len() as f64;
                g.backward(loss)?
            };
            optimizer.step(model.params_mut(), &grads);
            model.zero_pad_embedding();
        }
        let train_loss = total / train_set.len() as f64;
        let scored = evaluate(model)?;
        let train_accuracy = match config.stop_at_train_accuracy {
            Some(_) => {
                let (xs, ys): (Vec<&[u32]>, Vec<usize>) = train_set.iter().copied().unzip();
                Some(accuracy(model, &xs, &ys, config.batch_size)?)
            }
            None => None,
        };
        debug!("epoch {epoch}: train loss {train_loss:.5}, validation {scored:?}");
        epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss: scored.map(|v| v.0),
            validation_accuracy: scored.map(|v| v.1),
            train_accuracy,
        });
        let reached = matches!((train_accuracy, config.stop_at_train_accuracy), (Some(a), Some(t)) if a >= t);
        match scored {
            Some((loss, _)) if loss < best_loss => {
                best_loss = loss;
                best = model.params().clone();
                best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            None => {
                best = model.params().clone();
                best_epoch = epoch;
            }
        }
        if reached {
            best = model.params().clone();
            best_epoch = epoch;
            break;
        }
    }
    model.set_params(best)?;

    Ok(TrainHistory {
        initial_validation_loss: initial.map(|v| v.0),
        epochs,
        best_epoch,
        train_examples: train_set.len(),
        validation_examples: val_set.len(),
    })
}
