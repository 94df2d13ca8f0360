//! Cluster-head round: selection, local training, member-tier filtering and
//! reliability-weighted aggregation for one cluster.

use super::report::{BlockCause, BlockEvent, ClusterReport, Tier};
use super::state::{MemoryEntry, VehicleRecord};
use super::RoundContext;
use crate::adversary::{apply_profile, AttackProfile};
use crate::aggregation::{ch_step, weighted_mean, WeightedUpdate};
use crate::detection::{cosine, mean_gradient, zscores, DEGENERATE_EPS};
use crate::error::Result;
use crate::numerics::{evaluate_accuracy, local_train, ParamVector};
use crate::reliability::{select_clients, tick_block, Candidate};
use crate::rng::{stream, SeededStream};
use crate::topology::{link_delivers, ClusterView};

#[derive(Debug, Clone)]
pub struct ChOutcome {
    pub ch_id: usize,
    /// False when the head itself is serving a block this round.
    pub ch_eligible: bool,
    /// `None` when no update survived (cluster skipped).
    pub theta_ch: Option<ParamVector>,
    pub report: ClusterReport,
    pub events: Vec<BlockEvent>,
}

struct Sent {
    slot: usize,
    id: usize,
    update: ParamVector,
    cosine: Option<f64>,
}

/// Runs one cluster's round. `records` must hold exactly the cluster's
/// vehicles (head included) and is updated in place.
pub fn run_ch_round(
    ctx: &RoundContext<'_>,
    cluster: &ClusterView,
    records: &mut [&mut VehicleRecord],
) -> Result<ChOutcome> {
    let cfg = ctx.cfg;
    let defense = cfg.defense;
    let round = ctx.round;
    records.sort_by_key(|r| r.id);

    let mut report = ClusterReport {
        ch_id: cluster.ch_id,
        members: records.iter().map(|r| r.id).collect(),
        ..Default::default()
    };
    let mut events = Vec::new();

    let mut candidates = Vec::with_capacity(records.len());
    for r in records.iter_mut() {
        let (next, eligible) = tick_block(r.block);
        r.block = next;
        if !eligible {
            r.stats.blocked_rounds += 1;
            report.blocked.push(r.id);
        }
        candidates.push(Candidate {
            id: r.id,
            score: r.cm.score(&cfg.weights),
            eligible,
        });
    }
    let ch_eligible = !report.blocked.contains(&cluster.ch_id);

    let fraction = if defense.reliability() {
        cfg.select_fraction
    } else {
        1.0
    };
    let mut selected = select_clients(&candidates, fraction);
    selected.sort_unstable();
    report.selected = selected.clone();

    let profile = AttackProfile {
        kind: cfg.attack,
        noise_mean: cfg.noise_mean,
        noise_var: cfg.noise_var,
    };
    let attacking = round >= cfg.attack_start_round;

    let mut sent = Vec::with_capacity(selected.len());
    for &id in &selected {
        let slot = records
            .iter()
            .position(|r| r.id == id)
            .expect("selected id in cluster");
        let mut train_rng = SeededStream::derive(cfg.seed, &[stream::TRAIN, id as u64, round]);
        let (_, honest) = local_train(ctx.theta_global, &ctx.shards[id], ctx.spec, &mut train_rng)?;
        let r = &mut *records[slot];
        // A malicious head poisons the cluster aggregate instead of its own record.
        let update = if r.is_attacker && attacking && id != cluster.ch_id {
            let mut noise = SeededStream::derive(cfg.seed, &[stream::NOISE, id as u64, round]);
            apply_profile(&honest, &profile, true, &mut noise)
        } else {
            honest
        };
        r.local_params = ctx.theta_global.add(&update)?;
        let delivered = id == cluster.ch_id || {
            let mut link = SeededStream::derive(cfg.seed, &[stream::LINK, id as u64, round]);
            link_delivers(&mut link, cfg.loss_prob)
        };
        if delivered {
            sent.push(Sent {
                slot,
                id,
                update,
                cosine: None,
            });
        }
    }
    report.delivered = sent.iter().map(|s| s.id).collect();

    // Norm outliers are blocked and never reach the cosine stage.
    if defense.zscore() && sent.len() >= 2 {
        let norms: Vec<f64> = sent.iter().map(|s| s.update.norm()).collect();
        let z = zscores(&norms)?;
        let mut kept = Vec::with_capacity(sent.len());
        for (s, zk) in sent.into_iter().zip(z) {
            if zk.abs() >= cfg.z_threshold {
                let r = &mut *records[s.slot];
                r.flag(round);
                r.cm.metrics.record_anomaly();
                report.zscore_flagged.push(s.id);
                events.push(BlockEvent {
                    id: s.id,
                    cause: BlockCause::Zscore,
                    tier: Tier::Member,
                });
            } else {
                kept.push(s);
            }
        }
        sent = kept;
    }

    let adaptive = defense.reliability() && cfg.adaptive_thresholding;
    let mut compared: Vec<usize> = Vec::new();
    let mut accepted: Vec<Sent> = Vec::with_capacity(sent.len());
    let mean = if defense.cosine() {
        let refs: Vec<&ParamVector> = sent.iter().map(|s| &s.update).collect();
        mean_gradient(&refs)?.filter(|m| m.norm() >= DEGENERATE_EPS)
    } else {
        None
    };
    match mean {
        None => accepted = sent,
        Some(mean) => {
            for mut s in sent {
                let c = cosine(&s.update, &mean)?;
                if c.degenerate {
                    accepted.push(s);
                    continue;
                }
                let r = &mut *records[s.slot];
                if cfg.raw_cosine_check && c.value < cfg.raw_cosine_threshold {
                    r.flag(round);
                    r.cm.metrics.record_anomaly();
                    report.cosine_flagged.push(s.id);
                    events.push(BlockEvent {
                        id: s.id,
                        cause: BlockCause::CosineRaw,
                        tier: Tier::Member,
                    });
                    continue;
                }
                compared.push(s.slot);
                let limit = if adaptive {
                    r.cm.threshold.value
                } else {
                    cfg.cosine_adaptive_init
                };
                let drifted =
                    r.cm.memory
                        .cosine
                        .is_some_and(|prev| (prev - c.value).abs() > limit);
                if drifted {
                    r.local_params = r.cm.memory.params.clone();
                    r.stats.resets += 1;
                    if cfg.reset_counts_as_anomaly {
                        r.cm.metrics.record_anomaly();
                    }
                    report.reset.push(s.id);
                } else {
                    s.cosine = Some(c.value);
                    accepted.push(s);
                }
            }
        }
    }

    for s in &accepted {
        let model = ctx.theta_global.add(&s.update)?;
        let acc = evaluate_accuracy(&model, ctx.validation, ctx.spec)?;
        records[s.slot].cm.metrics.record_contribution(acc);
    }
    if adaptive {
        for &slot in &compared {
            let r = &mut *records[slot];
            r.cm.threshold = r.cm.threshold.tighten(r.cm.metrics.historical_accuracy());
        }
    }

    let weighted: Vec<WeightedUpdate> = accepted
        .iter()
        .map(|s| {
            let w = if defense.reliability() {
                records[s.slot].cm.score(&cfg.weights)
            } else {
                1.0
            };
            WeightedUpdate::new(s.update.clone(), w)
        })
        .collect();
    // Updates are signed deltas, so the descent step takes the negated mean.
    let mut theta_ch = match weighted_mean(&weighted)? {
        Some(g) => Some(ch_step(ctx.theta_global, &g.neg(), cfg.eta_agg)?),
        None => None,
    };
    let head = records
        .iter()
        .position(|r| r.id == cluster.ch_id)
        .expect("head in cluster");
    if let (true, Some(theta)) = (records[head].is_attacker && attacking, theta_ch.as_mut()) {
        let mut noise =
            SeededStream::derive(cfg.seed, &[stream::NOISE, cluster.ch_id as u64, round]);
        let delta = apply_profile(&theta.sub(ctx.theta_global)?, &profile, true, &mut noise);
        *theta = ctx.theta_global.add(&delta)?;
    }
    report.skipped = theta_ch.is_none();

    for s in &accepted {
        let r = &mut *records[s.slot];
        r.cm.memory = MemoryEntry {
            params: ctx.theta_global.add(&s.update)?,
            base: ctx.theta_global.clone(),
            cosine: s.cosine.or(r.cm.memory.cosine),
            round,
        };
    }
    report.accepted = accepted.iter().map(|s| s.id).collect();

    Ok(ChOutcome {
        ch_id: cluster.ch_id,
        ch_eligible,
        theta_ch,
        report,
        events,
    })
}
