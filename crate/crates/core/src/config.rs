//! Run configuration: JSON file plus command-line overrides, validated once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::AttackKind;
use crate::datasets::PartitionPlan;
use crate::error::{Error, Result};
use crate::reliability::ReliabilityWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseMode {
    None,
    CosineOnly,
    ZscoreOnly,
    ZscorePlusCosine,
    Darcs,
}

impl DefenseMode {
    pub const ALL: [DefenseMode; 5] = [
        DefenseMode::None,
        DefenseMode::CosineOnly,
        DefenseMode::ZscoreOnly,
        DefenseMode::ZscorePlusCosine,
        DefenseMode::Darcs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DefenseMode::None => "none",
            DefenseMode::CosineOnly => "cosine_only",
            DefenseMode::ZscoreOnly => "zscore_only",
            DefenseMode::ZscorePlusCosine => "zscore_plus_cosine",
            DefenseMode::Darcs => "darcs",
        }
    }

    pub fn zscore(&self) -> bool {
        matches!(
            self,
            DefenseMode::ZscoreOnly | DefenseMode::ZscorePlusCosine | DefenseMode::Darcs
        )
    }

    pub fn cosine(&self) -> bool {
        matches!(
            self,
            DefenseMode::CosineOnly | DefenseMode::ZscorePlusCosine | DefenseMode::Darcs
        )
    }

    /// Reliability-ranked selection and reliability-weighted averaging.
    pub fn reliability(&self) -> bool {
        matches!(self, DefenseMode::Darcs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        num_samples: usize,
        input_dim: usize,
        num_classes: usize,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            num_samples: 1000,
            input_dim: 20,
            num_classes: 4,
        }
    }
}

/// Classifier and local-training knobs; input and class counts come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 0,
            learning_rate: 0.05,
            local_epochs: 1,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,

    pub num_vehicles: usize,
    pub road_length_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub round_duration_s: f64,
    pub tx_range_m: f64,
    pub hop_limit: u32,
    pub loss_prob: f64,

    pub attack: AttackKind,
    pub noise_mean: f64,
    pub noise_var: f64,
    pub attacker_fraction: f64,
    pub attack_start_round: u64,

    pub defense: DefenseMode,
    pub adaptive_thresholding: bool,
    pub cross_cluster_check: bool,
    pub select_fraction: f64,
    pub unblock_time: u32,
    pub z_threshold: f64,
    pub cosine_adaptive_init: f64,
    pub high_threshold_up: f64,
    pub high_threshold_down: f64,
    pub delta: f64,
    pub cross_threshold: f64,
    pub weights: ReliabilityWeights,
    /// Also reject updates whose cosine to the cohort mean is below
    /// `raw_cosine_threshold` (flag, block and count an anomaly).
    pub raw_cosine_check: bool,
    pub raw_cosine_threshold: f64,
    pub reset_counts_as_anomaly: bool,
    pub eta_agg: f64,

    pub epsilon: f64,
    pub max_rounds: u64,
    pub stop_at_convergence: bool,

    pub dataset: DatasetSource,
    pub partition: PartitionPlan,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_vehicles: 25,
            road_length_m: 1000.0,
            speed_min_mps: 10.0,
            speed_max_mps: 35.0,
            round_duration_s: 1.0,
            tx_range_m: 100.0,
            hop_limit: 1,
            loss_prob: 0.0,
            attack: AttackKind::None,
            noise_mean: 2.0,
            noise_var: 0.3,
            attacker_fraction: 0.2,
            attack_start_round: 1,
            defense: DefenseMode::Darcs,
            adaptive_thresholding: true,
            cross_cluster_check: true,
            select_fraction: 0.75,
            unblock_time: 5,
            z_threshold: 3.0,
            cosine_adaptive_init: 0.90,
            high_threshold_up: 0.95,
            high_threshold_down: 0.2,
            delta: 0.05,
            cross_threshold: 0.9,
            weights: ReliabilityWeights::default(),
            raw_cosine_check: false,
            raw_cosine_threshold: 0.0,
            reset_counts_as_anomaly: false,
            eta_agg: 1.0,
            epsilon: 0.01,
            max_rounds: 150,
            stop_at_convergence: true,
            dataset: DatasetSource::default(),
            partition: PartitionPlan::default(),
            model: ModelConfig::default(),
        }
    }
}

fn check(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(key, message))
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.num_vehicles >= 1, "num_vehicles", "must be >= 1")?;
        check(
            finite(self.road_length_m) && self.road_length_m > 0.0,
            "road_length_m",
            "must be > 0",
        )?;
        check(
            finite(self.speed_min_mps) && self.speed_min_mps >= 0.0,
            "speed_min_mps",
            "must be >= 0",
        )?;
        check(
            finite(self.speed_max_mps) && self.speed_max_mps >= self.speed_min_mps,
            "speed_max_mps",
            "must be >= speed_min_mps",
        )?;
        check(
            finite(self.round_duration_s) && self.round_duration_s > 0.0,
            "round_duration_s",
            "must be > 0",
        )?;
        check(
            finite(self.tx_range_m) && self.tx_range_m > 0.0,
            "tx_range_m",
            "must be > 0",
        )?;
        check(self.hop_limit >= 1, "hop_limit", "must be >= 1")?;
        check(
            (0.0..1.0).contains(&self.loss_prob),
            "loss_prob",
            "must be in [0, 1)",
        )?;
        check(finite(self.noise_mean), "noise_mean", "must be finite")?;
        check(
            finite(self.noise_var) && self.noise_var >= 0.0,
            "noise_var",
            "must be >= 0",
        )?;
        check(
            (0.0..1.0).contains(&self.attacker_fraction),
            "attacker_fraction",
            "must be in [0, 1)",
        )?;
        check(
            self.attack_start_round >= 1,
            "attack_start_round",
            "must be >= 1",
        )?;
        check(
            self.select_fraction > 0.0 && self.select_fraction <= 1.0,
            "select_fraction",
            "must be in (0, 1]",
        )?;
        check(
            finite(self.z_threshold) && self.z_threshold > 0.0,
            "z_threshold",
            "must be > 0",
        )?;
        check(
            self.cosine_adaptive_init > 0.0 && self.cosine_adaptive_init <= 1.0,
            "cosine_adaptive_init",
            "must be in (0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.high_threshold_up),
            "high_threshold_up",
            "must be in [0, 1]",
        )?;
        check(
            self.high_threshold_down >= 0.0
                && self.high_threshold_down <= self.cosine_adaptive_init,
            "high_threshold_down",
            "must be in [0, cosine_adaptive_init]",
        )?;
        check(
            finite(self.delta) && self.delta > 0.0,
            "delta",
            "must be > 0",
        )?;
        check(
            (-1.0..=1.0).contains(&self.cross_threshold),
            "cross_threshold",
            "must be in [-1, 1]",
        )?;
        check(
            (-1.0..=1.0).contains(&self.raw_cosine_threshold),
            "raw_cosine_threshold",
            "must be in [-1, 1]",
        )?;
        let w = &self.weights;
        for (key, v) in [
            ("weights.accuracy", w.accuracy),
            ("weights.frequency", w.frequency),
            ("weights.anomaly", w.anomaly),
        ] {
            check(finite(v) && v >= 0.0, key, "must be >= 0")?;
        }
        check(
            w.accuracy + w.frequency + w.anomaly > 0.0,
            "weights",
            "must not all be zero",
        )?;
        check(
            finite(self.eta_agg) && self.eta_agg > 0.0,
            "eta_agg",
            "must be > 0",
        )?;
        check(
            finite(self.epsilon) && self.epsilon > 0.0,
            "epsilon",
            "must be > 0",
        )?;
        check(self.max_rounds >= 1, "max_rounds", "must be >= 1")?;
        check(
            self.partition.classes_per_vehicle >= 1,
            "partition.classes_per_vehicle",
            "must be >= 1",
        )?;
        let m = &self.model;
        check(
            finite(m.learning_rate) && m.learning_rate > 0.0,
            "model.learning_rate",
            "must be > 0",
        )?;
        check(m.local_epochs >= 1, "model.local_epochs", "must be >= 1")?;
        check(m.batch_size >= 1, "model.batch_size", "must be >= 1")?;
        if let DatasetSource::Synthetic {
            num_samples,
            input_dim,
            num_classes,
        } = &self.dataset
        {
            check(*input_dim >= 1, "dataset.input_dim", "must be >= 1")?;
            check(*num_classes >= 2, "dataset.num_classes", "must be >= 2")?;
            check(
                *num_samples >= *num_classes,
                "dataset.num_samples",
                "must be >= dataset.num_classes",
            )?;
        }
        Ok(())
    }

    /// Parses and validates a JSON document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value, &[])
    }

    /// Applies `key=value` overrides to a JSON object, then deserializes and
    /// validates. Override keys use dots for nesting (`model.learning_rate=0.1`).
    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        if !value.is_object() {
            return Err(Error::validation("config", "must be a JSON object"));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::validation("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Sets `path.to.key` in a JSON object. The right-hand side is parsed as JSON
/// when possible and taken as a plain string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::validation(assignment, "override must look like key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::validation(assignment, "override key is empty"));
    }
    let parsed: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| Error::validation(path, "does not address a JSON object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Loads a config file (if given), applies overrides, then the explicit
/// seed flag, which wins over everything else.
pub fn parse_config(
    path: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<RunConfig> {
    let value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::validation("config", e.to_string()))?
        }
        None => Value::Object(Default::default()),
    };
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("seed={s}"));
    }
    RunConfig::from_value(value, &all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.select_fraction, 0.75);
        assert_eq!(cfg.unblock_time, 5);
        assert_eq!(cfg.z_threshold, 3.0);
        assert_eq!(cfg.cosine_adaptive_init, 0.90);
        assert_eq!(cfg.high_threshold_up, 0.95);
        assert_eq!(cfg.high_threshold_down, 0.2);
        assert_eq!(cfg.delta, 0.05);
        assert_eq!(cfg.cross_threshold, 0.9);
        assert_eq!(cfg.weights, ReliabilityWeights::default());
    }

    #[test]
    fn negative_z_threshold() {
        let err = RunConfig::from_json_str(r#"{"z_threshold": -1}"#).unwrap_err();
        assert_eq!(err.to_string(), "z_threshold must be > 0");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json_str(r#"{"z_treshold": 2}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"model": {"lr": 0.1}}"#).is_err());
        assert!(RunConfig::from_json_str(
            r#"{"dataset": {"source": "synthetic", "num_samples": 10, "input_dim": 2, "num_classes": 2, "x": 1}}"#
        )
        .is_err());
    }

    #[test]
    fn seed_flag_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 7}"#).unwrap();
        let cfg = parse_config(Some(&path), &[], Some(42)).unwrap();
        assert_eq!(cfg.seed, 42);
        let cfg = parse_config(Some(&path), &[], None).unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn missing_file_is_io() {
        let err = parse_config(Some(Path::new("/nonexistent/cfg.json")), &[], None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn nested_override() {
        let cfg = RunConfig::from_value(
            serde_json::json!({}),
            &[
                "model.learning_rate=0.2".into(),
                "defense=cosine_only".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.learning_rate, 0.2);
        assert_eq!(cfg.defense, DefenseMode::CosineOnly);
    }

    #[test]
    fn idx_source_round_trips() {
        let text = r#"{"dataset": {"source": "idx", "images": "a.idx", "labels": "b.idx"}}"#;
        let cfg = RunConfig::from_json_str(text).unwrap();
        let back = RunConfig::from_value(cfg.to_json_value(), &[]).unwrap();
        assert_eq!(cfg, back);
    }
}
