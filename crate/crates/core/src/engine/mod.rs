//! Round orchestration: mobility, clustering, the cluster-head and EPC
//! tiers, broadcast, evaluation and convergence tracking.

mod ch;
mod convergence;
mod epc;
mod report;
mod state;

use rayon::prelude::*;

pub use ch::{run_ch_round, ChOutcome};
pub use convergence::{ConvergenceRound, ConvergenceTracker};
pub use epc::{run_epc_round, EpcOutcome};
pub use report::{
    BlockCause, BlockEvent, ClusterReport, EpcReport, RoundReport, Summary, Tier,
    VehicleBlockSummary,
};
pub use state::{BlockStats, MemoryEntry, TierState, VehicleRecord};

use crate::adversary::{choose_attackers, AttackKind};
use crate::config::{DatasetSource, RunConfig};
use crate::datasets::{generate_synthetic, load_idx, partition, LabeledDataset};
use crate::error::Result;
use crate::numerics::{evaluate_accuracy, ModelSpec, ParamVector};
use crate::rng::{derive_seed, stream, SeededStream};
use crate::topology::{form_clusters, step_mobility, ClusterView, World};

/// Read-only inputs shared by every cluster in a round.
pub struct RoundContext<'a> {
    pub cfg: &'a RunConfig,
    pub spec: &'a ModelSpec,
    pub shards: &'a [LabeledDataset],
    pub validation: &'a LabeledDataset,
    /// Global model at the end of the previous round.
    pub theta_global: &'a ParamVector,
    pub round: u64,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    match &cfg.dataset {
        DatasetSource::Synthetic {
            num_samples,
            input_dim,
            num_classes,
        } => generate_synthetic(
            *num_samples,
            *input_dim,
            *num_classes,
            derive_seed(cfg.seed, &[stream::DATASET]),
        ),
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
    }
}

pub struct Simulation {
    cfg: RunConfig,
    spec: ModelSpec,
    shards: Vec<LabeledDataset>,
    validation: LabeledDataset,
    world: World,
    records: Vec<VehicleRecord>,
    theta_global: ParamVector,
    round: u64,
    tracker: ConvergenceTracker,
    cluster_skips: u64,
    global_skips: u64,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let data = load_dataset(&cfg)?;
        Self::with_dataset(cfg, &data)
    }

    pub fn with_dataset(cfg: RunConfig, data: &LabeledDataset) -> Result<Self> {
        cfg.validate()?;
        let spec = ModelSpec {
            input_dim: data.input_dim(),
            num_classes: data.num_classes(),
            hidden_dim: cfg.model.hidden_dim,
            learning_rate: cfg.model.learning_rate,
            local_epochs: cfg.model.local_epochs,
            batch_size: cfg.model.batch_size,
        };
        spec.validate()?;
        let n = cfg.num_vehicles;
        let parts = partition(
            data,
            n,
            &cfg.partition,
            derive_seed(cfg.seed, &[stream::PARTITION]),
        )?;
        let attackers = if cfg.attack == AttackKind::None {
            Vec::new()
        } else {
            choose_attackers(
                n,
                cfg.attacker_fraction,
                &mut SeededStream::derive(cfg.seed, &[stream::ATTACKERS]),
            )
        };
        let world = World::random(
            n,
            cfg.road_length_m,
            cfg.speed_min_mps,
            cfg.speed_max_mps,
            &mut SeededStream::derive(cfg.seed, &[stream::WORLD]),
        );
        let theta = spec.initial_params(derive_seed(cfg.seed, &[stream::MODEL_INIT]));
        let records = (0..n)
            .map(|id| VehicleRecord::new(id, attackers.binary_search(&id).is_ok(), &cfg, &theta))
            .collect();
        Ok(Self {
            tracker: ConvergenceTracker::new(cfg.epsilon),
            cfg,
            spec,
            shards: parts.shards,
            validation: parts.validation,
            world,
            records,
            theta_global: theta,
            round: 0,
            cluster_skips: 0,
            global_skips: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn records(&self) -> &[VehicleRecord] {
        &self.records
    }

    pub fn theta_global(&self) -> &ParamVector {
        &self.theta_global
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn attackers(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.is_attacker)
            .map(|r| r.id)
            .collect()
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.cfg.max_rounds
            || (self.cfg.stop_at_convergence && self.tracker.converged_at().is_some())
    }

    /// Advances one full round and returns its report.
    pub fn step(&mut self) -> Result<RoundReport> {
        self.round += 1;
        let round = self.round;
        self.world = step_mobility(&self.world, self.cfg.round_duration_s);
        let clusters = form_clusters(&self.world, self.cfg.tx_range_m, self.cfg.hop_limit);
        for r in &mut self.records {
            r.set_round(round);
        }

        let ctx = RoundContext {
            cfg: &self.cfg,
            spec: &self.spec,
            shards: &self.shards,
            validation: &self.validation,
            theta_global: &self.theta_global,
            round,
        };

        let mut slots: Vec<Option<&mut VehicleRecord>> =
            self.records.iter_mut().map(Some).collect();
        let groups: Vec<(&ClusterView, Vec<&mut VehicleRecord>)> = clusters
            .iter()
            .map(|c| {
                let recs = c
                    .all_ids()
                    .into_iter()
                    .map(|id| slots[id].take().expect("clusters partition the fleet"))
                    .collect();
                (c, recs)
            })
            .collect();
        let outcomes: Vec<ChOutcome> = groups
            .into_par_iter()
            .map(|(c, mut recs)| run_ch_round(&ctx, c, &mut recs))
            .collect::<Result<_>>()?;
        drop(slots);

        let epc = run_epc_round(&ctx, &outcomes, &mut self.records)?;

        self.cluster_skips += outcomes.iter().filter(|o| o.report.skipped).count() as u64;
        match epc.theta_global {
            Some(theta) => self.theta_global = theta,
            None => self.global_skips += 1,
        }
        for r in &mut self.records {
            r.local_params = self.theta_global.clone();
        }

        let accuracy = evaluate_accuracy(&self.theta_global, &self.validation, &self.spec)?;
        let converged = self.tracker.push(accuracy);

        let mut newly_blocked = Vec::new();
        let mut blocked = Vec::new();
        let mut reports = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            newly_blocked.extend(o.events);
            blocked.extend_from_slice(&o.report.blocked);
            reports.push(o.report);
        }
        newly_blocked.extend(epc.events);
        blocked.sort_unstable();

        Ok(RoundReport {
            round,
            sim_time_s: round as f64 * self.cfg.round_duration_s,
            global_accuracy: accuracy,
            converged,
            num_clusters: reports.len(),
            clusters: reports,
            epc: epc.report,
            newly_blocked,
            blocked,
        })
    }

    pub fn summary(&self) -> Summary {
        let attackers: Vec<VehicleBlockSummary> = self
            .records
            .iter()
            .filter(|r| r.is_attacker)
            .map(|r| VehicleBlockSummary {
                id: r.id,
                first_block_round: r.stats.first_block_round,
                times_blocked: r.stats.times_blocked,
                blocked_rounds: r.stats.blocked_rounds,
            })
            .collect();
        let attackers_blocked = attackers
            .iter()
            .filter(|a| a.first_block_round.is_some())
            .count();
        let attacker_block_latency = if attackers.is_empty() || attackers_blocked < attackers.len()
        {
            None
        } else {
            attackers.iter().filter_map(|a| a.first_block_round).max()
        };
        let benign: Vec<&VehicleRecord> = self.records.iter().filter(|r| !r.is_attacker).collect();
        let benign_false_block_rounds: u64 = benign.iter().map(|r| r.stats.blocked_rounds).sum();
        let benign_vehicle_rounds = benign.len() as u64 * self.round;
        Summary {
            convergence_round: self.tracker.result(),
            final_accuracy: self.tracker.history().last().copied().unwrap_or(0.0),
            rounds_run: self.round,
            attackers_blocked,
            attacker_block_latency,
            attackers,
            benign_blocked_vehicles: benign.iter().filter(|r| r.stats.times_blocked > 0).count(),
            benign_false_block_rounds,
            benign_vehicle_rounds,
            benign_false_block_rate: if benign_vehicle_rounds == 0 {
                0.0
            } else {
                benign_false_block_rounds as f64 / benign_vehicle_rounds as f64
            },
            cluster_skips: self.cluster_skips,
            global_skips: self.global_skips,
            config: self.cfg.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub reports: Vec<RoundReport>,
    pub summary: Summary,
}

/// Runs until convergence (when `stop_at_convergence`) or `max_rounds`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut reports = Vec::new();
    while !sim.is_done() {
        reports.push(sim.step()?);
    }
    Ok(ExperimentResult {
        summary: sim.summary(),
        reports,
    })
}
