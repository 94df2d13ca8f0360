//! Classification datasets: the synthetic Gaussian generator, IDX loading and
//! the label-skewed partitioner that hands every vehicle its local shard.

pub mod idx;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IdxImages};

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be > 0"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::invalid(format!(
                "{} feature values for {} rows of width {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn distinct_labels(&self) -> Vec<usize> {
        let counts = self.class_counts();
        (0..self.num_classes).filter(|&c| counts[c] > 0).collect()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }
}

/// Per-class means of norm 3 on a regular simplex embedded in the first
/// `num_classes` coordinates (needs `input_dim >= num_classes`).
fn class_means(input_dim: usize, num_classes: usize) -> Vec<Vec<f64>> {
    const RADIUS: f64 = 3.0;
    if input_dim >= num_classes {
        let k = num_classes as f64;
        (0..num_classes)
            .map(|c| {
                let mut m = vec![0.0; input_dim];
                for (j, v) in m.iter_mut().take(num_classes).enumerate() {
                    *v = if j == c { 1.0 - 1.0 / k } else { -1.0 / k };
                }
                let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                m.iter().map(|v| v * RADIUS / norm).collect()
            })
            .collect()
    } else {
        // Fewer dimensions than classes: fixed pseudo-random directions.
        let mut rng = SeededStream::new(0x5EED_C1A5);
        (0..num_classes)
            .map(|_| {
                let m: Vec<f64> = (0..input_dim).map(|_| rng.standard_normal()).collect();
                let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                m.iter().map(|v| v * RADIUS / norm).collect()
            })
            .collect()
    }
}

/// Gaussian class clusters: unit-variance noise around fixed class means.
/// Sample `i` belongs to class `i % num_classes`, so classes are balanced.
pub fn generate_synthetic(
    num_samples: usize,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if input_dim == 0 || num_classes < 2 {
        return Err(Error::invalid("input_dim must be > 0 and num_classes >= 2"));
    }
    if num_samples < num_classes {
        return Err(Error::invalid("num_samples must be >= num_classes"));
    }
    let means = class_means(input_dim, num_classes);
    let mut rng = SeededStream::new(seed);
    let mut features = Vec::with_capacity(num_samples * input_dim);
    let mut labels = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let c = i % num_classes;
        for m in &means[c] {
            features.push(m + rng.standard_normal());
        }
        labels.push(c);
    }
    LabeledDataset::new(features, labels, input_dim, num_classes)
}

/// How the training pool is split across vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionPlan {
    pub scheme: PartitionScheme,
    pub classes_per_vehicle: usize,
    /// Partition seed; derived from the run's master seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    LabelShards,
}

impl Default for PartitionPlan {
    fn default() -> Self {
        Self {
            scheme: PartitionScheme::LabelShards,
            classes_per_vehicle: 2,
            seed: None,
        }
    }
}

/// Result of [`partition`]: one shard per vehicle plus the shared validation set.
#[derive(Debug, Clone)]
pub struct Partition {
    pub shards: Vec<LabeledDataset>,
    pub validation: LabeledDataset,
    /// Source-row indices of each shard, kept for conservation checks.
    pub shard_rows: Vec<Vec<usize>>,
    pub validation_rows: Vec<usize>,
}

/// Holds out 10% of every class (at least one row) for validation, then deals
/// single-label shards so that each vehicle sees at most
/// `classes_per_vehicle` distinct labels.
///
/// Vehicle `v` (after a seeded shuffle of vehicle order) is assigned the label
/// window `{(v * cpv + j) mod K : j < cpv}`; each class's remaining rows are
/// then cut into as many contiguous shards as it has holders. A class with no
/// holder (fewer vehicle slots than classes) goes entirely to validation.
pub fn partition(
    data: &LabeledDataset,
    num_vehicles: usize,
    plan: &PartitionPlan,
    seed: u64,
) -> Result<Partition> {
    if num_vehicles == 0 {
        return Err(Error::invalid("num_vehicles must be >= 1"));
    }
    if plan.classes_per_vehicle == 0 {
        return Err(Error::invalid("classes_per_vehicle must be >= 1"));
    }
    let k = data.num_classes();
    let mut rng = SeededStream::new(plan.seed.unwrap_or(seed));

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut validation_rows = Vec::new();
    let mut pools: Vec<Vec<usize>> = Vec::with_capacity(k);
    for rows in by_class.iter_mut() {
        rng.shuffle(rows);
        if rows.is_empty() {
            pools.push(Vec::new());
            continue;
        }
        let hold = (rows.len() / 10).max(1);
        validation_rows.extend_from_slice(&rows[..hold]);
        pools.push(rows[hold..].to_vec());
    }

    let cpv = plan.classes_per_vehicle.min(k);
    let mut order: Vec<usize> = (0..num_vehicles).collect();
    rng.shuffle(&mut order);
    let present: Vec<usize> = (0..k).filter(|&c| !pools[c].is_empty()).collect();
    if present.is_empty() {
        return Err(Error::invalid(
            "no training rows left after validation holdout",
        ));
    }
    let kp = present.len();
    let cpv = cpv.min(kp);
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (slot, &vehicle) in order.iter().enumerate() {
        for j in 0..cpv {
            let class = present[(slot * cpv + j) % kp];
            if !holders[class].contains(&vehicle) {
                holders[class].push(vehicle);
            }
        }
    }

    let mut shard_rows: Vec<Vec<usize>> = vec![Vec::new(); num_vehicles];
    for class in 0..k {
        let pool = &pools[class];
        let hs = &holders[class];
        if hs.is_empty() {
            // Too few vehicles to hold every class: keep the rows as
            // validation data rather than dropping them.
            validation_rows.extend_from_slice(pool);
            continue;
        }
        let n = pool.len();
        let parts = hs.len();
        for (p, &vehicle) in hs.iter().enumerate() {
            let start = p * n / parts;
            let end = (p + 1) * n / parts;
            shard_rows[vehicle].extend_from_slice(&pool[start..end]);
        }
    }
    if let Some(v) = shard_rows.iter().position(|s| s.is_empty()) {
        return Err(Error::invalid(format!(
            "too few samples: vehicle {v} would receive an empty shard"
        )));
    }
    validation_rows.sort_unstable();
    let shards = shard_rows.iter().map(|rows| data.subset(rows)).collect();
    let validation = data.subset(&validation_rows);
    Ok(Partition {
        shards,
        validation,
        shard_rows,
        validation_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let a = generate_synthetic(1000, 20, 4, 7).unwrap();
        let b = generate_synthetic(1000, 20, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![250; 4]);
        let c = generate_synthetic(1001, 20, 4, 3).unwrap();
        let counts = c.class_counts();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn synthetic_rejects_bad_dims() {
        assert!(generate_synthetic(10, 0, 4, 1).is_err());
        assert!(generate_synthetic(3, 5, 4, 1).is_err());
        assert!(generate_synthetic(10, 5, 1, 1).is_err());
    }

    #[test]
    fn class_means_have_norm_three() {
        for (d, k) in [(20, 4), (3, 5), (10, 10)] {
            for m in class_means(d, k) {
                let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validation_holds_ten_percent_per_class() {
        let data = generate_synthetic(1000, 20, 4, 1).unwrap();
        let p = partition(&data, 25, &PartitionPlan::default(), 1).unwrap();
        assert_eq!(p.validation.class_counts(), vec![25; 4]);
        assert_eq!(p.shards.len(), 25);
    }

    #[test]
    fn two_classes_per_vehicle() {
        let data = generate_synthetic(1000, 20, 4, 2).unwrap();
        let p = partition(&data, 10, &PartitionPlan::default(), 9).unwrap();
        for s in &p.shards {
            assert!(s.distinct_labels().len() <= 2);
        }
    }

    #[test]
    fn iid_upper_bound_gives_every_class() {
        let data = generate_synthetic(400, 5, 4, 2).unwrap();
        let plan = PartitionPlan {
            classes_per_vehicle: 4,
            ..PartitionPlan::default()
        };
        let p = partition(&data, 8, &plan, 3).unwrap();
        for s in &p.shards {
            assert_eq!(s.distinct_labels().len(), 4);
        }
    }

    #[test]
    fn too_few_samples() {
        let data = generate_synthetic(8, 3, 4, 2).unwrap();
        let err = partition(&data, 10, &PartitionPlan::default(), 3);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        assert!(partition(&data, 0, &PartitionPlan::default(), 3).is_err());
    }
}
