//! SGD local updates, FedAvg aggregation and evaluation.

use ndarray::{s, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Dataset;
use super::model::ModelWeights;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

/// Run `epochs` passes of minibatch SGD over `shard`, reshuffling each
/// epoch. Returns the trained weights and the sample-weighted mean training
/// loss over all batches.
pub fn local_update<R: Rng + ?Sized>(
    w0: &ModelWeights,
    shard: &Dataset,
    params: &SgdParams,
    rng: &mut R,
) -> (ModelWeights, f64) {
    assert!(!shard.is_empty(), "empty shard");
    assert!(params.epochs >= 1 && params.batch_size >= 1);
    let mut w = w0.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(params.batch_size) {
            let x = shard.features.select(Axis(0), chunk);
            let y: Vec<u8> = chunk.iter().map(|&i| shard.labels[i]).collect();
            let (loss, grads) = w.loss_and_grads(x.view(), &y);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            if params.learning_rate != 0.0 {
                w.scaled_add(-params.learning_rate, &grads);
            }
        }
    }
    debug_assert!(w.is_finite());
    (w, loss_sum / seen as f64)
}

/// Element-wise convex combination `Σ α_u · w_u`.
///
/// Panics on an empty list, mismatched shapes, or weights that do not sum
/// to one within `1e-9`.
pub fn fedavg(updates: &[(&ModelWeights, f64)]) -> ModelWeights {
    assert!(!updates.is_empty(), "fedavg of zero updates");
    let total: f64 = updates.iter().map(|(_, a)| a).sum();
    assert!((total - 1.0).abs() <= 1e-9, "fedavg weights sum to {total}");
    let (first, a0) = updates[0];
    let mut out = first.clone();
    for p in out.params_mut() {
        *p *= a0;
    }
    for &(w, a) in &updates[1..] {
        assert!(w.same_shape(first), "fedavg shape mismatch");
        out.scaled_add(a, w);
    }
    out
}

/// FedAvg with `α = 1/U`.
pub fn fedavg_uniform(models: &[&ModelWeights]) -> ModelWeights {
    let alpha = 1.0 / models.len() as f64;
    let pairs: Vec<(&ModelWeights, f64)> = models.iter().map(|&m| (m, alpha)).collect();
    fedavg(&pairs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    /// Per-sample hit flags, in dataset order.
    pub correct: Vec<bool>,
}

const EVAL_CHUNK: usize = 1000;

/// Accuracy (argmax, lowest index on ties) and mean cross-entropy.
pub fn evaluate(w: &ModelWeights, data: &Dataset) -> Evaluation {
    assert!(!data.is_empty(), "evaluate on empty dataset");
    let mut correct = Vec::with_capacity(data.len());
    let mut loss_sum = 0.0;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let x = data.features.slice(s![start..end, ..]);
        let labels = &data.labels[start..end];
        let probs = w.forward(x);
        for (row, &y) in probs.rows().into_iter().zip(labels) {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            correct.push(best == y as usize);
            loss_sum -= row[y as usize].max(f64::MIN_POSITIVE).ln();
        }
    }
    let hits = correct.iter().filter(|&&c| c).count();
    Evaluation {
        accuracy: hits as f64 / data.len() as f64,
        loss: loss_sum / data.len() as f64,
        correct,
    }
}
