use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::features::EmbeddingSequence;
use crate::rng::SeededRng;

use super::{logit_gradient, seq_to_f64, LabeledSequence};

/// One affine layer, `weight` is out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// MLP over a flattened `frames × input_dim` sequence. Hidden layers use
/// ReLU; the last layer is linear and emits the class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    frames: usize,
    input_dim: usize,
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Wraps explicit layers. The first layer must take exactly
    /// `frames * input_dim` inputs and adjacent layers must chain.
    pub fn from_layers(frames: usize, input_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Invalid("an MLP needs at least one layer".into()))?;
        if first.inputs() != frames * input_dim {
            return Err(Error::dims(
                format!("MLP input width for {frames} frames of dimension {input_dim}"),
                frames * input_dim,
                first.inputs(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dims(
                    format!("MLP layer {} input width", l + 1),
                    pair[0].outputs(),
                    pair[1].inputs(),
                ));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::dims(format!("MLP layer {l} bias"), layer.outputs(), layer.bias.len()));
            }
        }
        if frames == 0 || input_dim == 0 || layers.iter().any(|l| l.outputs() == 0) {
            return Err(Error::Invalid("MLP dimensions must be non-zero".into()));
        }
        Ok(Self {
            frames,
            input_dim,
            layers,
        })
    }

    /// All-zero MLP: `frames*input_dim -> hidden... -> classes`.
    pub fn zeros(frames: usize, input_dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut widths = vec![frames * input_dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self::from_layers(frames, input_dim, layers)
    }

    /// Uniform `±1/sqrt(fan_in)` initialization, drawn layer by layer
    /// (weight row-major, then bias) and rounded to `f32`.
    pub fn init(
        frames: usize,
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut p = Self::zeros(frames, input_dim, hidden, classes)?;
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.symmetric(bound) as f32 as f64;
            }
        }
        Ok(p)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.frames * self.input_dim];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            frames: self.frames,
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub(crate) fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.weight"), layer.weight.as_slice().expect("standard layout")));
            out.push((format!("layer{l}.bias"), layer.bias.as_slice().expect("standard layout")));
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn input_vector(&self, seq: &EmbeddingSequence) -> Result<Array1<f64>> {
        if seq.len() != self.frames || seq.dim() != self.input_dim {
            return Err(Error::dims(
                "MLP input sequence (frames x dim)",
                format!("{}x{}", self.frames, self.input_dim),
                format!("{}x{}", seq.len(), seq.dim()),
            ));
        }
        Ok(Array1::from(seq_to_f64(seq)))
    }

    /// Layer inputs (`acts[l]` feeds layer `l`) and pre-activations.
    fn trace(&self, x: Array1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let mut acts = vec![x];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.weight.dot(&acts[l]) + &layer.bias;
            if l < last {
                acts.push(z.mapv(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        (acts, pre)
    }

    /// Adds `scale ×` this sample's gradient into `grads`; returns its loss.
    pub(crate) fn accumulate_gradients(
        &self,
        sample: &LabeledSequence,
        scale: f64,
        grads: &mut MlpParams,
    ) -> Result<f64> {
        let x = self.input_vector(&sample.seq)?;
        let (acts, pre) = self.trace(x);
        let logits = pre.last().expect("at least one layer");
        let (mut delta, loss) = logit_gradient(logits, sample.label)?;
        delta *= scale;
        for l in (0..self.layers.len()).rev() {
            let g = &mut grads.layers[l];
            let col = delta.view().insert_axis(Axis(1));
            let row = acts[l].view().insert_axis(Axis(0));
            general_mat_mul(1.0, &col, &row, 1.0, &mut g.weight);
            g.bias += &delta;
            if l > 0 {
                let upstream = self.layers[l].weight.t().dot(&delta);
                delta = upstream * pre[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            }
        }
        Ok(loss)
    }
}

/// Class logits: flatten the sequence time-major, then alternate affine and
/// ReLU, ending with an affine layer.
pub fn mlp_forward(p: &MlpParams, seq: &EmbeddingSequence) -> Result<Array1<f64>> {
    let x = p.input_vector(seq)?;
    let (_, mut pre) = p.trace(x);
    Ok(pre.pop().expect("at least one layer"))
}
