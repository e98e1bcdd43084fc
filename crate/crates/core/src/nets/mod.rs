//! Trainable classification heads over embedding sequences.
//!
//! Two heads share one training loop:
//!
//! - [`MlpParams`]: the T×D sequence flattened time-major, then affine+ReLU
//!   layers and a linear output layer.
//! - [`LstmParams`]: a single-layer LSTM over the T frames; the last hidden
//!   state feeds a linear classifier.
//!
//! Forward and backward passes accumulate in `f64`. Gradients are analytic
//! (backpropagation through time for the LSTM) and checked against central
//! finite differences in the test suite.

mod checkpoint;
mod loss;
mod lstm;
mod mlp;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, ModelDims};
pub use loss::{cross_entropy, softmax, PROB_FLOOR};
pub use lstm::{lstm_forward, Gate, LstmParams};
pub use mlp::{mlp_forward, Dense, MlpParams};
pub use optim::{optimizer_step, Optimizer, OptimizerKind};
pub use train::{evaluate, train, train_with_holdout, EpochRecord, TrainConfig, TrainHistory};

use crate::error::{Error, Result};
use crate::features::EmbeddingSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Mlp,
    Lstm,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Mlp => "mlp",
            HeadKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(HeadKind::Mlp),
            "lstm" => Ok(HeadKind::Lstm),
            _ => Err(Error::Config(format!("unknown head {s:?} (expected mlp or lstm)"))),
        }
    }
}

/// An embedding sequence with its class id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub seq: EmbeddingSequence,
    pub label: usize,
}

impl LabeledSequence {
    pub fn new(seq: EmbeddingSequence, label: usize) -> Self {
        Self { seq, label }
    }
}

/// Parameters of either head. Also used as the gradient container.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(MlpParams),
    Lstm(LstmParams),
}

impl Model {
    pub fn kind(&self) -> HeadKind {
        match self {
            Model::Mlp(_) => HeadKind::Mlp,
            Model::Lstm(_) => HeadKind::Lstm,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Model::Mlp(p) => p.num_classes(),
            Model::Lstm(p) => p.num_classes(),
        }
    }

    /// Class logits for one sequence.
    pub fn forward(&self, seq: &EmbeddingSequence) -> Result<Array1<f64>> {
        match self {
            Model::Mlp(p) => mlp_forward(p, seq),
            Model::Lstm(p) => lstm_forward(p, seq),
        }
    }

    /// Named parameter tensors, flattened row-major, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        match self {
            Model::Mlp(p) => p.tensors(),
            Model::Lstm(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Mlp(p) => p.tensors_mut(),
            Model::Lstm(p) => p.tensors_mut(),
        }
    }

    pub fn zeros_like(&self) -> Model {
        match self {
            Model::Mlp(p) => Model::Mlp(p.zeros_like()),
            Model::Lstm(p) => Model::Lstm(p.zeros_like()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub(crate) fn check_finite(&self, what: &str) -> Result<()> {
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{what} {name}")));
            }
        }
        Ok(())
    }
}

/// Gradients of the mean cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Model,
    pub loss: f64,
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter.
pub fn backward(model: &Model, batch: &[&LabeledSequence]) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Invalid("backward on an empty batch".into()));
    }
    let k = model.num_classes();
    if let Some(bad) = batch.iter().find(|s| s.label >= k) {
        return Err(Error::Invalid(format!("label {} out of range for {k} classes", bad.label)));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = model.zeros_like();
    let mut loss = 0.0;
    for sample in batch {
        loss += match (model, &mut grads) {
            (Model::Mlp(p), Model::Mlp(g)) => p.accumulate_gradients(sample, scale, g)?,
            (Model::Lstm(p), Model::Lstm(g)) => p.accumulate_gradients(sample, scale, g)?,
            _ => unreachable!("gradient container matches the model"),
        };
    }
    grads.check_finite("gradient of")?;
    Ok(Gradients {
        grads,
        loss: loss * scale,
    })
}

/// Most probable class (lowest id on ties) and the class probabilities.
pub fn predict(model: &Model, seq: &EmbeddingSequence) -> Result<(usize, Vec<f64>)> {
    let logits = model.forward(seq)?;
    let probs = softmax(logits.as_slice().expect("contiguous logits"))?;
    Ok((argmax(&probs), probs))
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the loss with respect to the logits for one sample:
/// `softmax(z) - onehot(label)`, plus the sample's loss.
pub(crate) fn logit_gradient(logits: &Array1<f64>, label: usize) -> Result<(Array1<f64>, f64)> {
    let probs = softmax(logits.as_slice().expect("contiguous logits"))?;
    let loss = cross_entropy(&probs, label)?;
    let mut grad = Array1::from(probs);
    grad[label] -= 1.0;
    Ok((grad, loss))
}

pub(crate) fn seq_to_f64(seq: &EmbeddingSequence) -> Vec<f64> {
    seq.as_flat().iter().map(|&v| v as f64).collect()
}
