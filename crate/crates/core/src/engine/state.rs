//! Vehicle information base: per-vehicle reliability, thresholds, memories
//! and block bookkeeping, tracked separately for the member and head roles.

use serde::Serialize;

use crate::config::RunConfig;
use crate::detection::AdaptiveThreshold;
use crate::numerics::ParamVector;
use crate::reliability::{reliability_score, BlockState, ReliabilityMetrics, ReliabilityWeights};

/// Last trusted parameters and cosine value of one vehicle in one role.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub params: ParamVector,
    /// Global model `params` was derived from; `params - base` is the update.
    pub base: ParamVector,
    pub cosine: Option<f64>,
    /// Round the entry was last accepted in (0 = initial model).
    pub round: u64,
}

/// Reliability state for one role (member or head).
#[derive(Debug, Clone)]
pub struct TierState {
    pub metrics: ReliabilityMetrics,
    pub threshold: AdaptiveThreshold,
    pub memory: MemoryEntry,
}

impl TierState {
    fn new(cfg: &RunConfig, initial: &ParamVector) -> Self {
        Self {
            metrics: ReliabilityMetrics::default(),
            threshold: AdaptiveThreshold::new(
                cfg.cosine_adaptive_init,
                cfg.high_threshold_down,
                cfg.delta,
                cfg.high_threshold_up,
            ),
            memory: MemoryEntry {
                params: initial.clone(),
                base: initial.clone(),
                cosine: None,
                round: 0,
            },
        }
    }

    pub fn score(&self, w: &ReliabilityWeights) -> f64 {
        reliability_score(&self.metrics, w)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlockStats {
    pub first_block_round: Option<u64>,
    pub times_blocked: u64,
    /// Rounds spent ineligible.
    pub blocked_rounds: u64,
    pub resets: u64,
}

#[derive(Debug, Clone)]
pub struct VehicleRecord {
    pub id: usize,
    pub is_attacker: bool,
    pub block: BlockState,
    pub cm: TierState,
    pub ch: TierState,
    /// The vehicle's current local model.
    pub local_params: ParamVector,
    pub stats: BlockStats,
}

impl VehicleRecord {
    pub fn new(id: usize, is_attacker: bool, cfg: &RunConfig, initial: &ParamVector) -> Self {
        Self {
            id,
            is_attacker,
            block: BlockState::new(cfg.unblock_time),
            cm: TierState::new(cfg, initial),
            ch: TierState::new(cfg, initial),
            local_params: initial.clone(),
            stats: BlockStats::default(),
        }
    }

    pub fn set_round(&mut self, round: u64) {
        self.cm.metrics.rounds_elapsed = round;
        self.ch.metrics.rounds_elapsed = round;
    }

    pub fn flag(&mut self, round: u64) {
        self.block.block();
        self.stats.times_blocked += 1;
        self.stats.first_block_round.get_or_insert(round);
    }
}
