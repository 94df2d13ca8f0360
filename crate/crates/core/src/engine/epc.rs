//! EPC round: head-tier filtering, cross-cluster consistency and the global
//! reliability-weighted model average.

use super::ch::ChOutcome;
use super::report::{BlockCause, BlockEvent, EpcReport, Tier};
use super::state::{MemoryEntry, VehicleRecord};
use super::RoundContext;
use crate::aggregation::{weighted_mean, WeightedUpdate};
use crate::detection::{avg_cross_cluster, ch_norm, cosine, cross_cluster_matrix, zscores};
use crate::error::Result;
use crate::numerics::{evaluate_accuracy, ParamVector};

#[derive(Debug, Clone)]
pub struct EpcOutcome {
    /// `None` when every head was filtered; the caller keeps the old model.
    pub theta_global: Option<ParamVector>,
    pub report: EpcReport,
    pub events: Vec<BlockEvent>,
}

struct Submission<'a> {
    id: usize,
    theta: &'a ParamVector,
    delta: ParamVector,
    cosine: Option<f64>,
}

/// `records` is the full vehicle table indexed by id. Block ticks already
/// happened in the cluster rounds, so a head serving a block arrives with
/// `ch_eligible == false` and is skipped here.
pub fn run_epc_round(
    ctx: &RoundContext<'_>,
    outcomes: &[ChOutcome],
    records: &mut [VehicleRecord],
) -> Result<EpcOutcome> {
    let cfg = ctx.cfg;
    let defense = cfg.defense;
    let round = ctx.round;
    let theta_g = ctx.theta_global;
    let mut report = EpcReport::default();
    let mut events = Vec::new();

    let mut subs = Vec::new();
    for o in outcomes {
        if let (true, Some(theta)) = (o.ch_eligible, o.theta_ch.as_ref()) {
            subs.push(Submission {
                id: o.ch_id,
                theta,
                delta: theta.sub(theta_g)?,
                cosine: None,
            });
        }
    }
    subs.sort_by_key(|s| s.id);
    report.candidates = subs.iter().map(|s| s.id).collect();

    if defense.zscore() && subs.len() >= 2 {
        let norms = subs
            .iter()
            .map(|s| ch_norm(s.theta, theta_g))
            .collect::<Result<Vec<_>>>()?;
        let z = zscores(&norms)?;
        let mut kept = Vec::with_capacity(subs.len());
        for (s, zk) in subs.into_iter().zip(z) {
            if zk.abs() >= cfg.z_threshold {
                let r = &mut records[s.id];
                r.flag(round);
                r.ch.metrics.record_anomaly();
                report.zscore_flagged.push(s.id);
                events.push(BlockEvent {
                    id: s.id,
                    cause: BlockCause::Zscore,
                    tier: Tier::Head,
                });
            } else {
                kept.push(s);
            }
        }
        subs = kept;
    }

    let adaptive = defense.reliability() && cfg.adaptive_thresholding;
    let mut compared = Vec::new();
    if defense.cosine() {
        let mut kept = Vec::with_capacity(subs.len());
        for mut s in subs {
            let r = &mut records[s.id];
            // Direction of this head's current update against its previous
            // accepted one; nothing to compare on its first accepted round.
            if r.ch.memory.round == 0 {
                kept.push(s);
                continue;
            }
            let prev_delta = r.ch.memory.params.sub(&r.ch.memory.base)?;
            let c = cosine(&s.delta, &prev_delta)?;
            if c.degenerate {
                kept.push(s);
                continue;
            }
            compared.push(s.id);
            let limit = if adaptive {
                r.ch.threshold.value
            } else {
                cfg.cosine_adaptive_init
            };
            let drifted =
                r.ch.memory
                    .cosine
                    .is_some_and(|prev| (prev - c.value).abs() > limit);
            if drifted {
                r.stats.resets += 1;
                if cfg.reset_counts_as_anomaly {
                    r.ch.metrics.record_anomaly();
                }
                report.reset.push(s.id);
            } else {
                s.cosine = Some(c.value);
                kept.push(s);
            }
        }
        subs = kept;
    }

    if defense.reliability() && cfg.cross_cluster_check && subs.len() >= 2 {
        let deltas: Vec<ParamVector> = subs.iter().map(|s| s.delta.clone()).collect();
        let sims = cross_cluster_matrix(&deltas)?;
        let mut avgs = Vec::with_capacity(subs.len());
        for p in 0..subs.len() {
            avgs.push(avg_cross_cluster(&sims, p)?);
        }
        let mut kept = Vec::with_capacity(subs.len());
        for (s, avg) in subs.into_iter().zip(avgs) {
            if avg.is_some_and(|a| a < cfg.cross_threshold) {
                let r = &mut records[s.id];
                r.flag(round);
                r.ch.metrics.record_anomaly();
                report.cross_flagged.push(s.id);
                events.push(BlockEvent {
                    id: s.id,
                    cause: BlockCause::CrossCluster,
                    tier: Tier::Head,
                });
            } else {
                kept.push(s);
            }
        }
        subs = kept;
    }

    for s in &subs {
        let acc = evaluate_accuracy(s.theta, ctx.validation, ctx.spec)?;
        records[s.id].ch.metrics.record_contribution(acc);
    }
    if adaptive {
        for &id in &compared {
            let r = &mut records[id];
            r.ch.threshold = r.ch.threshold.tighten(r.ch.metrics.historical_accuracy());
        }
    }

    let weighted: Vec<WeightedUpdate> = subs
        .iter()
        .map(|s| {
            let w = if defense.reliability() {
                records[s.id].ch.score(&cfg.weights)
            } else {
                1.0
            };
            WeightedUpdate::new(s.theta.clone(), w)
        })
        .collect();
    let theta_global = weighted_mean(&weighted)?;
    report.skipped = theta_global.is_none();

    for s in &subs {
        let r = &mut records[s.id];
        r.ch.memory = MemoryEntry {
            params: s.theta.clone(),
            base: theta_g.clone(),
            cosine: s.cosine.or(r.ch.memory.cosine),
            round,
        };
    }
    report.accepted = subs.iter().map(|s| s.id).collect();

    Ok(EpcOutcome {
        theta_global,
        report,
        events,
    })
}
