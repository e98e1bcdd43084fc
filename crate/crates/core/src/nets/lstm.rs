use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::features::EmbeddingSequence;
use crate::rng::SeededRng;

use super::{logit_gradient, seq_to_f64, LabeledSequence};

/// LSTM gate, also the index into the per-gate parameter arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];

    fn suffix(self) -> &'static str {
        ["i", "f", "g", "o"][self as usize]
    }
}

/// Single-layer LSTM with a linear classifier on the final hidden state.
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// logits = V h_T + c_out
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights `W_*`, H × D, indexed by [`Gate`].
    pub input_weights: [Array2<f64>; 4],
    /// Recurrent weights `U_*`, H × H.
    pub recurrent_weights: [Array2<f64>; 4],
    /// Gate biases `b_*`, H.
    pub biases: [Array1<f64>; 4],
    /// Classifier weight `V`, K × H.
    pub classifier_weight: Array2<f64>,
    /// Classifier bias, K.
    pub classifier_bias: Array1<f64>,
}

/// Per-step values kept for backpropagation through time.
struct Step {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    gates: [Array1<f64>; 4],
    tanh_c: Array1<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || classes == 0 {
            return Err(Error::Invalid("LSTM dimensions must be non-zero".into()));
        }
        Ok(Self {
            input_weights: std::array::from_fn(|_| Array2::zeros((hidden, input_dim))),
            recurrent_weights: std::array::from_fn(|_| Array2::zeros((hidden, hidden))),
            biases: std::array::from_fn(|_| Array1::zeros(hidden)),
            classifier_weight: Array2::zeros((classes, hidden)),
            classifier_bias: Array1::zeros(classes),
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization (fan-in D for `W_*`, H for
    /// everything else), drawn in checkpoint tensor order and rounded to
    /// `f32`; the forget-gate bias is then set to 1.
    pub fn init(input_dim: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden, classes)?;
        let input_bound = 1.0 / (input_dim as f64).sqrt();
        let hidden_bound = 1.0 / (hidden as f64).sqrt();
        for (i, t) in p.tensors_mut().into_iter().enumerate() {
            let bound = if i < 4 { input_bound } else { hidden_bound };
            for v in t.iter_mut() {
                *v = rng.symmetric(bound) as f32 as f64;
            }
        }
        p.biases[Gate::Forget as usize].fill(1.0);
        Ok(p)
    }

    /// Validates shapes of externally built parameters.
    pub fn check(&self) -> Result<()> {
        let (h, d) = self.input_weights[0].dim();
        let k = self.classifier_bias.len();
        for gate in Gate::ALL {
            let g = gate as usize;
            let name = gate.suffix();
            if self.input_weights[g].dim() != (h, d) {
                return Err(Error::dims(format!("W_{name}"), format!("{h}x{d}"), format!("{:?}", self.input_weights[g].dim())));
            }
            if self.recurrent_weights[g].dim() != (h, h) {
                return Err(Error::dims(format!("U_{name}"), format!("{h}x{h}"), format!("{:?}", self.recurrent_weights[g].dim())));
            }
            if self.biases[g].len() != h {
                return Err(Error::dims(format!("b_{name}"), h, self.biases[g].len()));
            }
        }
        if self.classifier_weight.dim() != (k, h) {
            return Err(Error::dims("V", format!("{k}x{h}"), format!("{:?}", self.classifier_weight.dim())));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights[0].ncols()
    }

    pub fn hidden(&self) -> usize {
        self.input_weights[0].nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier_bias.len()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden(), self.num_classes()).expect("existing dims are valid")
    }

    pub(crate) fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(14);
        for g in Gate::ALL {
            out.push((format!("W_{}", g.suffix()), self.input_weights[g as usize].as_slice().unwrap()));
        }
        for g in Gate::ALL {
            out.push((format!("U_{}", g.suffix()), self.recurrent_weights[g as usize].as_slice().unwrap()));
        }
        for g in Gate::ALL {
            out.push((format!("b_{}", g.suffix()), self.biases[g as usize].as_slice().unwrap()));
        }
        out.push(("V".into(), self.classifier_weight.as_slice().unwrap()));
        out.push(("c".into(), self.classifier_bias.as_slice().unwrap()));
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        out.extend(self.input_weights.iter_mut().map(|t| t.as_slice_mut().unwrap()));
        out.extend(self.recurrent_weights.iter_mut().map(|t| t.as_slice_mut().unwrap()));
        out.extend(self.biases.iter_mut().map(|t| t.as_slice_mut().unwrap()));
        out.push(self.classifier_weight.as_slice_mut().unwrap());
        out.push(self.classifier_bias.as_slice_mut().unwrap());
        out
    }

    fn check_input(&self, seq: &EmbeddingSequence) -> Result<()> {
        if seq.dim() != self.input_dim() {
            return Err(Error::dims("LSTM input dimension", self.input_dim(), seq.dim()));
        }
        Ok(())
    }

    fn step(&self, x: ArrayView1<f64>, h: &Array1<f64>, c: &Array1<f64>) -> ([Array1<f64>; 4], Array1<f64>) {
        let gates: [Array1<f64>; 4] = std::array::from_fn(|g| {
            let a = self.input_weights[g].dot(&x) + self.recurrent_weights[g].dot(h) + &self.biases[g];
            if g == Gate::Cell as usize {
                a.mapv(f64::tanh)
            } else {
                a.mapv(sigmoid)
            }
        });
        let [i, f, g, _] = &gates;
        let c_next = f * c + i * g;
        (gates, c_next)
    }

    /// Runs the recurrence from zero state. Returns (h_T, c_T, steps).
    fn unroll(&self, seq: &EmbeddingSequence, keep: bool) -> (Array1<f64>, Array1<f64>, Vec<Step>) {
        let hdim = self.hidden();
        let xs = Array2::from_shape_vec((seq.len(), seq.dim()), seq_to_f64(seq)).expect("T x D values");
        let mut h = Array1::zeros(hdim);
        let mut c = Array1::zeros(hdim);
        let mut steps = Vec::with_capacity(if keep { seq.len() } else { 0 });
        for x in xs.rows() {
            let (gates, c_next) = self.step(x, &h, &c);
            let tanh_c = c_next.mapv(f64::tanh);
            let h_next = &gates[Gate::Output as usize] * &tanh_c;
            if keep {
                steps.push(Step {
                    x: x.to_owned(),
                    h_prev: std::mem::replace(&mut h, h_next),
                    c_prev: std::mem::replace(&mut c, c_next),
                    gates,
                    tanh_c,
                });
            } else {
                h = h_next;
                c = c_next;
            }
        }
        (h, c, steps)
    }

    /// Final cell state after the sequence; exposed for saturation tests.
    pub fn final_cell_state(&self, seq: &EmbeddingSequence) -> Result<Array1<f64>> {
        self.check_input(seq)?;
        Ok(self.unroll(seq, false).1)
    }

    /// Adds `scale ×` this sample's gradient into `grads` (BPTT); returns
    /// its loss.
    pub(crate) fn accumulate_gradients(
        &self,
        sample: &LabeledSequence,
        scale: f64,
        grads: &mut LstmParams,
    ) -> Result<f64> {
        self.check_input(&sample.seq)?;
        let (h_last, _, steps) = self.unroll(&sample.seq, true);
        let logits = self.classifier_weight.dot(&h_last) + &self.classifier_bias;
        let (mut dlogits, loss) = logit_gradient(&logits, sample.label)?;
        dlogits *= scale;

        outer_add(&mut grads.classifier_weight, &dlogits, &h_last);
        grads.classifier_bias += &dlogits;

        let mut dh = self.classifier_weight.t().dot(&dlogits);
        let mut dc_next = Array1::<f64>::zeros(self.hidden());
        for step in steps.iter().rev() {
            let [i, f, g, o] = &step.gates;
            let d_o = &dh * &step.tanh_c;
            let dc = &dc_next + &(&dh * o * &step.tanh_c.mapv(|t| 1.0 - t * t));
            let d_i = &dc * g;
            let d_g = &dc * i;
            let d_f = &dc * &step.c_prev;
            dc_next = &dc * f;

            // back through the gate nonlinearities
            let pre = [
                d_i * &i.mapv(|s| s * (1.0 - s)),
                d_f * &f.mapv(|s| s * (1.0 - s)),
                d_g * &g.mapv(|t| 1.0 - t * t),
                d_o * &o.mapv(|s| s * (1.0 - s)),
            ];
            dh = Array1::zeros(self.hidden());
            for (k, da) in pre.iter().enumerate() {
                outer_add(&mut grads.input_weights[k], da, &step.x);
                outer_add(&mut grads.recurrent_weights[k], da, &step.h_prev);
                grads.biases[k] += da;
                dh += &self.recurrent_weights[k].t().dot(da);
            }
        }
        Ok(loss)
    }
}

/// `m += a ⊗ b`
fn outer_add(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    general_mat_mul(1.0, &col, &row, 1.0, m);
}

/// Class logits from the last hidden state, starting from `h_0 = c_0 = 0`.
pub fn lstm_forward(p: &LstmParams, seq: &EmbeddingSequence) -> Result<Array1<f64>> {
    p.check_input(seq)?;
    let (h, _, _) = p.unroll(seq, false);
    Ok(p.classifier_weight.dot(&h) + &p.classifier_bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: Vec<f32>, dim: usize) -> EmbeddingSequence {
        EmbeddingSequence::new("c", "b", dim, values).unwrap()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = LstmParams::zeros(3, 4, 2).unwrap();
        let s = seq(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0], 3);
        assert_eq!(lstm_forward(&p, &s).unwrap(), Array1::<f64>::zeros(2));
        assert_eq!(p.final_cell_state(&s).unwrap(), Array1::<f64>::zeros(4));
    }

    #[test]
    fn saturated_forget_gate_holds_cell_state() {
        // Step 1 writes into c through an open input gate driven by x;
        // afterwards x = 0 so b_f = +20, b_i = -20 dominate.
        let mut p = LstmParams::zeros(1, 1, 1).unwrap();
        p.input_weights[Gate::Input as usize][[0, 0]] = 40.0;
        p.input_weights[Gate::Cell as usize][[0, 0]] = 1.0;
        p.biases[Gate::Forget as usize][0] = 20.0;
        p.biases[Gate::Input as usize][0] = -20.0;
        let first = seq(vec![1.0], 1);
        let c1 = p.final_cell_state(&first).unwrap()[0];
        assert!(c1 > 0.7, "first step must write into the cell: {c1}");
        let mut xs = vec![0.0f32; 10];
        xs[0] = 1.0;
        let c_t = p.final_cell_state(&seq(xs, 1)).unwrap()[0];
        assert!((c_t - c1).abs() < 1e-6, "{c1} -> {c_t}");
    }

    /// Step-by-step scalar evaluation of the recurrence, written without
    /// ndarray so it shares no code with the implementation.
    #[allow(clippy::needless_range_loop)]
    fn scalar_oracle(p: &LstmParams, xs: &[Vec<f64>]) -> Vec<f64> {
        let hdim = p.hidden();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; hdim];
        let mut c = vec![0.0; hdim];
        for x in xs {
            let mut pre = [vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim]];
            for g in 0..4 {
                for r in 0..hdim {
                    let mut a = p.biases[g][r];
                    for (j, xj) in x.iter().enumerate() {
                        a += p.input_weights[g][[r, j]] * xj;
                    }
                    for (j, hj) in h.iter().enumerate() {
                        a += p.recurrent_weights[g][[r, j]] * hj;
                    }
                    pre[g][r] = a;
                }
            }
            for r in 0..hdim {
                let i = sig(pre[0][r]);
                let f = sig(pre[1][r]);
                let g = pre[2][r].tanh();
                let o = sig(pre[3][r]);
                c[r] = f * c[r] + i * g;
                h[r] = o * c[r].tanh();
            }
        }
        (0..p.num_classes())
            .map(|k| p.classifier_bias[k] + (0..hdim).map(|r| p.classifier_weight[[k, r]] * h[r]).sum::<f64>())
            .collect()
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut rng = SeededRng::new(2024);
        let mut p = LstmParams::zeros(2, 2, 3).unwrap();
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.symmetric(0.8);
            }
        }
        let values: Vec<f32> = vec![0.25, -0.5, 0.75, 0.125];
        let xs: Vec<Vec<f64>> = values.chunks(2).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let got = lstm_forward(&p, &seq(values, 2)).unwrap();
        let want = scalar_oracle(&p, &xs);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14, "{got} vs {want:?}");
        }
    }

    #[test]
    fn init_sets_forget_bias_and_tensor_count() {
        let mut rng = SeededRng::new(1);
        let p = LstmParams::init(4, 5, 3, &mut rng).unwrap();
        assert!(p.biases[Gate::Forget as usize].iter().all(|&v| v == 1.0));
        assert_eq!(p.tensors().len(), 14);
        let bound = 0.5;
        assert!(p.input_weights[0].iter().all(|v| v.abs() <= bound));
        assert!(p.input_weights[0].iter().any(|&v| v != 0.0));
        p.check().unwrap();
    }

    #[test]
    fn wrong_input_dim_rejected() {
        let p = LstmParams::zeros(3, 2, 2).unwrap();
        assert!(lstm_forward(&p, &seq(vec![0.0; 4], 2)).is_err());
    }
}
