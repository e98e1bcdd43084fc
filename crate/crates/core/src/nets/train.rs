use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::{backward, cross_entropy, predict, HeadKind, LabeledSequence, LstmParams, MlpParams, Model, Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Hidden layer widths of the MLP head.
    pub mlp_hidden: Vec<usize>,
    /// Hidden state size of the LSTM head.
    pub lstm_hidden: usize,
    /// Halve the learning rate whenever an epoch ends with a higher training
    /// loss than the previous one.
    pub halve_lr_on_increase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 16,
            optimizer: OptimizerKind::adam(),
            seed: 0,
            mlp_hidden: vec![512],
            lstm_hidden: 256,
            halve_lr_on_increase: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it freezes the parameters, which is useful as a
        // baseline and in tests.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.lstm_hidden == 0 || self.mlp_hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be >= 1".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::Config("adam needs 0 <= beta < 1 and eps > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the training set after this epoch's updates.
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Training loss of the freshly initialized model.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }
}

/// Mean loss and accuracy of `model` over `data`.
pub fn evaluate(model: &Model, data: &[LabeledSequence]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Invalid("evaluation on an empty set".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for sample in data {
        let (class, probs) = predict(model, &sample.seq)?;
        loss += cross_entropy(&probs, sample.label)?;
        correct += (class == sample.label) as usize;
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn check_data(data: &[LabeledSequence], classes: usize, what: &str) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| Error::Invalid(format!("{what} set is empty")))?;
    let shape = (first.seq.len(), first.seq.dim());
    for s in data {
        if (s.seq.len(), s.seq.dim()) != shape {
            return Err(Error::dims(
                format!("{what} sequence {:?} (frames x dim)", s.seq.clip_id()),
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", s.seq.len(), s.seq.dim()),
            ));
        }
        if s.label >= classes {
            return Err(Error::Invalid(format!(
                "{what} label {} out of range for {classes} classes",
                s.label
            )));
        }
    }
    Ok(shape)
}

pub fn train(
    kind: HeadKind,
    data: &[LabeledSequence],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train_with_holdout(kind, data, None, num_classes, cfg)
}

/// Trains a head from a seeded initialization.
///
/// Each epoch shuffles the sample order (Fisher–Yates on the run's PRNG),
/// takes one optimizer step per minibatch, then records training loss and
/// accuracy (and held-out accuracy when `holdout` is given). The run is a
/// pure function of `(data, cfg)`; the returned parameters are rounded to
/// `f32` so they survive a checkpoint round trip unchanged.
pub fn train_with_holdout(
    kind: HeadKind,
    data: &[LabeledSequence],
    holdout: Option<&[LabeledSequence]>,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if num_classes == 0 {
        return Err(Error::Invalid("need at least one class".into()));
    }
    let (frames, dim) = check_data(data, num_classes, "training")?;
    if let Some(h) = holdout.filter(|h| !h.is_empty()) {
        let shape = check_data(h, num_classes, "held-out")?;
        if shape != (frames, dim) {
            return Err(Error::dims("held-out sequence shape", format!("{frames}x{dim}"), format!("{}x{}", shape.0, shape.1)));
        }
    }
    let holdout = holdout.filter(|h| !h.is_empty());

    let mut rng = SeededRng::new(cfg.seed);
    let mut model = match kind {
        HeadKind::Mlp => Model::Mlp(MlpParams::init(frames, dim, &cfg.mlp_hidden, num_classes, &mut rng)?),
        HeadKind::Lstm => Model::Lstm(LstmParams::init(dim, cfg.lstm_hidden, num_classes, &mut rng)?),
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, &model);
    let mut lr = cfg.learning_rate;
    let (initial_loss, _) = evaluate(&model, data)?;
    let mut history = TrainHistory {
        initial_loss,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut prev_loss = initial_loss;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &data[i]).collect();
            let g = backward(&model, &batch)?;
            optimizer.step(&mut model, &g.grads, lr)?;
        }
        model.check_finite("parameter")?;
        let (loss, train_accuracy) = evaluate(&model, data)?;
        let test_accuracy = holdout.map(|h| evaluate(&model, h).map(|r| r.1)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            loss,
            train_accuracy,
            test_accuracy,
            learning_rate: lr,
        });
        if cfg.halve_lr_on_increase && loss > prev_loss {
            lr *= 0.5;
        }
        prev_loss = loss;
    }
    model.round_to_f32();
    Ok((model, history))
}
