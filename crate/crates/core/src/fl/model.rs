//! Dense ReLU network with a softmax output, trained with softmax
//! cross-entropy. All arithmetic is `f64`.

use std::io::{self, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// One fully connected layer. `weights` is `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    layers: Vec<Dense>,
}

impl ModelWeights {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    /// Scaled-uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut model = Self::zeros(sizes);
        for layer in &mut model.layers {
            let bound = Self::init_bound(layer.fan_in(), layer.fan_out());
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weights.mapv_inplace(|_| dist.sample(rng));
        }
        model
    }

    pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for pair in layers.windows(2) {
            assert_eq!(pair[0].fan_out(), pair[1].fan_in(), "layer shapes do not chain");
        }
        for l in &layers {
            assert_eq!(l.bias.len(), l.fan_out());
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_sizes() == other.layer_sizes()
    }

    /// Flat parameter iterator: per layer, weights row-major then bias.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: f64, other: &Self) {
        assert!(self.same_shape(other), "shape mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(alpha, &b.weights);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "shape mismatch");
        self.params()
            .zip(other.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.num_inputs(), "input width mismatch");
        let last = self.layers.len() - 1;
        let mut cur = affine(x, &self.layers[0]);
        for layer in &self.layers[1..=last] {
            relu_inplace(&mut cur);
            cur = affine(cur.view(), layer);
        }
        cur
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = self.logits(x);
        softmax_rows(&mut out);
        out
    }

    /// Mean cross-entropy of `x` against `labels`.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
        let logits = self.logits(x);
        cross_entropy(&logits, labels)
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_grads(&self, x: ArrayView2<'_, f64>, labels: &[u8]) -> (f64, ModelWeights) {
        let batch = x.nrows();
        assert!(batch > 0, "empty batch");
        assert_eq!(batch, labels.len(), "labels/batch length mismatch");
        assert_eq!(x.ncols(), self.num_inputs(), "input width mismatch");

        // hidden[l] is the post-ReLU output of layer l (input of layer l+1).
        let n = self.layers.len();
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n - 1);
        let mut cur = affine(x, &self.layers[0]);
        for layer in &self.layers[1..] {
            relu_inplace(&mut cur);
            let next = affine(cur.view(), layer);
            hidden.push(std::mem::replace(&mut cur, next));
        }
        let loss = cross_entropy(&cur, labels);

        let mut delta = cur;
        softmax_rows(&mut delta);
        for (row, &y) in delta.rows_mut().into_iter().zip(labels) {
            let mut row = row;
            row[y as usize] -= 1.0;
        }
        delta /= batch as f64;

        let mut grads = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let input = if l == 0 { x } else { hidden[l - 1].view() };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                Zip::from(&mut back)
                    .and(&hidden[l - 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        (loss, ModelWeights { layers: grads })
    }

    /// Flat binary snapshot: `b"FLW1"`, layer count and sizes as `u32` LE,
    /// then every parameter as `f64` LE in [`Self::params`] order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"FLW1")?;
        let sizes = self.layer_sizes();
        out.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in sizes {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        for p in self.params() {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }
}

fn affine(x: ArrayView2<'_, f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    z
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

pub(crate) fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn cross_entropy(logits: &Array2<f64>, labels: &[u8]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y as usize]
        })
        .sum();
    total / labels.len() as f64
}
