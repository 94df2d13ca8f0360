//! Dense vector math and a small softmax classifier trained with mini-batch SGD.
//!
//! All reductions run in index-ascending order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::SeededStream;

/// Flat parameter vector. Doubles as a model update (signed parameter delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn neg(&self) -> ParamVector {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Little-endian byte image used for byte-for-byte determinism checks.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Model architecture and SGD hyperparameters shared by every vehicle in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    /// 0 selects multinomial logistic regression; otherwise one tanh hidden layer.
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_dim: 20,
            num_classes: 4,
            hidden_dim: 0,
            learning_rate: 0.05,
            local_epochs: 1,
            batch_size: 32,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::validation("model.input_dim", "must be > 0"));
        }
        if self.num_classes < 2 {
            return Err(Error::validation("model.num_classes", "must be >= 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("model.learning_rate", "must be > 0"));
        }
        if self.local_epochs == 0 {
            return Err(Error::validation("model.local_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("model.batch_size", "must be >= 1"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, k, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        if h == 0 {
            k * d + k
        } else {
            h * d + h + k * h + k
        }
    }

    /// Starting parameters. The linear model starts at zero; the MLP gets a
    /// small seeded perturbation because all-zero hidden weights never move.
    pub fn initial_params(&self, seed: u64) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        if self.hidden_dim > 0 {
            let mut rng = SeededStream::new(seed);
            let scale = 1.0 / (self.input_dim as f64).sqrt();
            let first_layer = self.hidden_dim * self.input_dim;
            for v in &mut p.as_mut_slice()[..first_layer] {
                *v = rng.normal(0.0, scale);
            }
            let w2_start = first_layer + self.hidden_dim;
            let w2_end = w2_start + self.num_classes * self.hidden_dim;
            let scale2 = 1.0 / (self.hidden_dim as f64).sqrt();
            for v in &mut p.as_mut_slice()[w2_start..w2_end] {
                *v = rng.normal(0.0, scale2);
            }
        }
        p
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.dim(),
            });
        }
        Ok(())
    }

    fn check_dataset(&self, data: &LabeledDataset) -> Result<()> {
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: data.input_dim(),
            });
        }
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Forward-pass scratch for one sample.
struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn forward(p: &[f64], x: &[f64], spec: &ModelSpec) -> Forward {
    let (d, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    if h == 0 {
        let (w, b) = p.split_at(k * d);
        let mut z: Vec<f64> = (0..k)
            .map(|c| {
                let row = &w[c * d..(c + 1) * d];
                row.iter().zip(x).fold(b[c], |acc, (wi, xi)| acc + wi * xi)
            })
            .collect();
        softmax_in_place(&mut z);
        Forward {
            hidden: Vec::new(),
            probs: z,
        }
    } else {
        let w1 = &p[..h * d];
        let b1 = &p[h * d..h * d + h];
        let w2 = &p[h * d + h..h * d + h + k * h];
        let b2 = &p[h * d + h + k * h..];
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let row = &w1[j * d..(j + 1) * d];
                row.iter()
                    .zip(x)
                    .fold(b1[j], |acc, (wi, xi)| acc + wi * xi)
                    .tanh()
            })
            .collect();
        let mut z: Vec<f64> = (0..k)
            .map(|c| {
                let row = &w2[c * h..(c + 1) * h];
                row.iter()
                    .zip(&hidden)
                    .fold(b2[c], |acc, (wi, hi)| acc + wi * hi)
            })
            .collect();
        softmax_in_place(&mut z);
        Forward { hidden, probs: z }
    }
}

/// Class probabilities for one feature row.
pub fn predict_proba(params: &ParamVector, x: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if x.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    Ok(forward(params.as_slice(), x, spec).probs)
}

/// Argmax with ties going to the lowest class index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over the selected rows and its exact gradient.
pub fn loss_and_gradient(
    params: &ParamVector,
    data: &LabeledDataset,
    indices: &[usize],
    spec: &ModelSpec,
) -> Result<(f64, ParamVector)> {
    spec.check_params(params)?;
    spec.check_dataset(data)?;
    if indices.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::invalid(format!("batch index {bad} out of range")));
    }
    let (d, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    let p = params.as_slice();
    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    let mut dz = vec![0.0; k];

    for &i in indices {
        let x = data.row(i);
        let y = data.labels()[i];
        let fwd = forward(p, x, spec);
        loss -= fwd.probs[y].max(f64::MIN_POSITIVE).ln();
        for (c, (dzc, pc)) in dz.iter_mut().zip(&fwd.probs).enumerate() {
            *dzc = pc - if c == y { 1.0 } else { 0.0 };
        }
        if h == 0 {
            let (gw, gb) = grad.split_at_mut(k * d);
            for c in 0..k {
                let row = &mut gw[c * d..(c + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz[c] * xi;
                }
                gb[c] += dz[c];
            }
        } else {
            let w2 = &p[h * d + h..h * d + h + k * h];
            let (g1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (g2, gb2) = rest.split_at_mut(k * h);
            for c in 0..k {
                for j in 0..h {
                    g2[c * h + j] += dz[c] * fwd.hidden[j];
                }
                gb2[c] += dz[c];
            }
            for j in 0..h {
                let mut back = 0.0;
                for c in 0..k {
                    back += w2[c * h + j] * dz[c];
                }
                let da = back * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                for (g, xi) in g1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += da * xi;
                }
                gb1[j] += da;
            }
        }
    }

    let n = indices.len() as f64;
    for g in grad.iter_mut() {
        *g /= n;
    }
    Ok((loss / n, ParamVector(grad)))
}

/// Runs `local_epochs` of shuffled mini-batch SGD from `params`.
///
/// Returns the trained parameters and the signed delta `trained - params`.
pub fn local_train(
    params: &ParamVector,
    shard: &LabeledDataset,
    spec: &ModelSpec,
    rng: &mut SeededStream,
) -> Result<(ParamVector, ParamVector)> {
    spec.check_params(params)?;
    if shard.is_empty() {
        return Err(Error::invalid("empty shard"));
    }
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..spec.local_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(spec.batch_size) {
            let (_, grad) = loss_and_gradient(&current, shard, batch, spec)?;
            current.axpy(-spec.learning_rate, &grad)?;
        }
    }
    let update = current.sub(params)?;
    Ok((current, update))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn evaluate_accuracy(
    params: &ParamVector,
    data: &LabeledDataset,
    spec: &ModelSpec,
) -> Result<f64> {
    spec.check_params(params)?;
    spec.check_dataset(data)?;
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let p = params.as_slice();
    let correct = (0..data.len())
        .filter(|&i| argmax_lowest(&forward(p, data.row(i), spec).probs) == data.labels()[i])
        .count();
    Ok(correct as f64 / data.len() as f64)
}
