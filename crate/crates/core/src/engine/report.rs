//! Per-round records and the end-of-run summary. Field order here is the
//! key order of the emitted JSON.

use serde::Serialize;

use super::convergence::ConvergenceRound;
use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCause {
    Zscore,
    CosineRaw,
    CrossCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Member,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockEvent {
    pub id: usize,
    pub cause: BlockCause,
    pub tier: Tier,
}

/// What happened inside one cluster. Every list is sorted by vehicle id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClusterReport {
    pub ch_id: usize,
    pub members: Vec<usize>,
    pub blocked: Vec<usize>,
    pub selected: Vec<usize>,
    pub delivered: Vec<usize>,
    pub zscore_flagged: Vec<usize>,
    pub cosine_flagged: Vec<usize>,
    pub reset: Vec<usize>,
    pub accepted: Vec<usize>,
    pub skipped: bool,
}

/// Head-tier outcome; lists hold head ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpcReport {
    pub candidates: Vec<usize>,
    pub zscore_flagged: Vec<usize>,
    pub reset: Vec<usize>,
    pub cross_flagged: Vec<usize>,
    pub accepted: Vec<usize>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: u64,
    pub sim_time_s: f64,
    pub global_accuracy: f64,
    pub converged: bool,
    pub num_clusters: usize,
    pub clusters: Vec<ClusterReport>,
    pub epc: EpcReport,
    pub newly_blocked: Vec<BlockEvent>,
    /// Vehicles that sat out this round.
    pub blocked: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleBlockSummary {
    pub id: usize,
    pub first_block_round: Option<u64>,
    pub times_blocked: u64,
    pub blocked_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub convergence_round: ConvergenceRound,
    pub final_accuracy: f64,
    pub rounds_run: u64,
    pub attackers: Vec<VehicleBlockSummary>,
    pub attackers_blocked: usize,
    /// Latest first-block round over all attackers, when every one was blocked.
    pub attacker_block_latency: Option<u64>,
    pub benign_blocked_vehicles: usize,
    pub benign_false_block_rounds: u64,
    pub benign_vehicle_rounds: u64,
    pub benign_false_block_rate: f64,
    pub cluster_skips: u64,
    pub global_skips: u64,
    pub config: RunConfig,
}
