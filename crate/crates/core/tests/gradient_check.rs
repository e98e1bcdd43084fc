//! Analytic gradients against central finite differences.

use signet::features::EmbeddingSequence;
use signet::nets::{backward, cross_entropy, softmax, LabeledSequence, LstmParams, MlpParams, Model};
use signet::rng::SeededRng;

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error so that near-zero gradients are
/// compared absolutely.
const FLOOR: f64 = 1e-7;

fn batch(rng: &mut SeededRng, n: usize, frames: usize, dim: usize, classes: usize) -> Vec<LabeledSequence> {
    (0..n)
        .map(|i| {
            let v = (0..frames * dim).map(|_| rng.symmetric(1.0) as f32).collect();
            let seq = EmbeddingSequence::new(format!("s{i}"), "fd", dim, v).unwrap();
            LabeledSequence::new(seq, rng.below(classes as u64) as usize)
        })
        .collect()
}

fn mean_loss(model: &Model, data: &[LabeledSequence]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|s| {
            let z = model.forward(&s.seq).unwrap();
            cross_entropy(&softmax(z.as_slice().unwrap()).unwrap(), s.label).unwrap()
        })
        .sum();
    total / data.len() as f64
}

/// Sign pattern of every hidden pre-activation over the batch.
fn relu_pattern(model: &Model, data: &[LabeledSequence]) -> Vec<bool> {
    let Model::Mlp(p) = model else { return Vec::new() };
    let mut out = Vec::new();
    for s in data {
        let mut a: Vec<f64> = s.seq.as_flat().iter().map(|&v| v as f64).collect();
        for layer in &p.layers[..p.layers.len() - 1] {
            let z = layer.weight.dot(&ndarray::Array1::from(a.clone())) + &layer.bias;
            out.extend(z.iter().map(|&v| v > 0.0));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    out
}

/// Largest relative error over every parameter. Coordinates whose
/// perturbation flips a ReLU are skipped; the loss is not differentiable
/// across the kink.
fn max_relative_error(model: &Model, data: &[LabeledSequence]) -> (f64, usize) {
    let refs: Vec<&LabeledSequence> = data.iter().collect();
    let analytic = backward(model, &refs).unwrap();
    let grads: Vec<Vec<f64>> = analytic.grads.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    let base_pattern = relu_pattern(model, data);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = model.clone();
    for (ti, g) in grads.iter().enumerate() {
        for (j, &analytic) in g.iter().enumerate() {
            let orig = probe.tensors_mut()[ti][j];
            probe.tensors_mut()[ti][j] = orig + STEP;
            let (plus, pat_plus) = (mean_loss(&probe, data), relu_pattern(&probe, data));
            probe.tensors_mut()[ti][j] = orig - STEP;
            let (minus, pat_minus) = (mean_loss(&probe, data), relu_pattern(&probe, data));
            probe.tensors_mut()[ti][j] = orig;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst, checked)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..24u64 {
        let mut rng = SeededRng::new(seed);
        let frames = 1 + rng.below(4) as usize;
        let dim = 1 + rng.below(2) as usize;
        let hidden: Vec<usize> = (0..rng.below(3)).map(|_| 1 + rng.below(8) as usize).collect();
        let classes = 2 + rng.below(7) as usize;
        let model = Model::Mlp(MlpParams::init(frames, dim, &hidden, classes, &mut rng).unwrap());
        let data = batch(&mut rng, 3, frames, dim, classes);
        let (err, checked) = max_relative_error(&model, &data);
        assert!(checked > 0);
        assert!(err <= TOLERANCE, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let model = Model::Lstm(LstmParams::init(4, 5, 3, &mut rng).unwrap());
        let data = batch(&mut rng, 2, 4, 4, 3);
        let (err, checked) = max_relative_error(&model, &data);
        assert_eq!(checked, model.param_count());
        assert!(err <= TOLERANCE, "seed {seed}: max relative error {err:e}");
    }
}
