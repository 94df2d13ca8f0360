//! Engine-level invariants checked from round reports and vehicle records.

use std::collections::BTreeSet;

use darcs::config::RunConfig;
use darcs::datasets::{generate_synthetic, partition};
use darcs::engine::{run_ch_round, RoundContext, VehicleRecord};
use darcs::numerics::{ModelSpec, ParamVector};
use darcs::rng::{derive_seed, stream, SeededStream};
use darcs::topology::{form_clusters, step_mobility, ClusterView, World};
use darcs::{RoundReport, Simulation};

fn cfg(overrides: &[&str]) -> RunConfig {
    let all: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::from_value(serde_json::json!({}), &all).unwrap()
}

fn simulate(cfg: RunConfig, rounds: u64) -> (Simulation, Vec<RoundReport>) {
    let mut sim = Simulation::new(cfg).unwrap();
    let reports = (0..rounds).map(|_| sim.step().unwrap()).collect();
    (sim, reports)
}

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

#[test]
fn pipeline_stages_are_disjoint_and_ordered() {
    for attack in ["combined", "gradient_ascent", "gaussian"] {
        let (_, reports) = simulate(
            cfg(&[&format!("attack={attack}"), "raw_cosine_check=true"]),
            30,
        );
        for r in &reports {
            for c in &r.clusters {
                let blocked = set(&c.blocked);
                let selected = set(&c.selected);
                let delivered = set(&c.delivered);
                let z = set(&c.zscore_flagged);
                let cos = set(&c.cosine_flagged);
                let reset = set(&c.reset);
                let accepted = set(&c.accepted);
                assert!(
                    blocked.is_disjoint(&selected),
                    "round {} cluster {}",
                    r.round,
                    c.ch_id
                );
                assert!(selected.is_subset(&set(&c.members)));
                assert!(delivered.is_subset(&selected));
                // A Z-score rejection never reaches the cosine stages.
                assert!(z.is_disjoint(&cos) && z.is_disjoint(&reset) && z.is_disjoint(&accepted));
                assert!(cos.is_disjoint(&reset) && cos.is_disjoint(&accepted));
                assert!(reset.is_disjoint(&accepted));
                assert!(accepted.is_subset(&delivered));
                assert_eq!(c.skipped, accepted.is_empty());
            }
            let e = &r.epc;
            let heads_blocked: BTreeSet<usize> = r
                .clusters
                .iter()
                .filter(|c| c.blocked.contains(&c.ch_id))
                .map(|c| c.ch_id)
                .collect();
            let cand = set(&e.candidates);
            assert!(cand.is_disjoint(&heads_blocked));
            let z = set(&e.zscore_flagged);
            let reset = set(&e.reset);
            let cross = set(&e.cross_flagged);
            let accepted = set(&e.accepted);
            assert!(z.is_disjoint(&reset) && z.is_disjoint(&cross) && reset.is_disjoint(&cross));
            assert!(accepted.is_subset(&cand));
            assert!(
                accepted.is_disjoint(&z)
                    && accepted.is_disjoint(&reset)
                    && accepted.is_disjoint(&cross)
            );
            let skipped_clusters: BTreeSet<usize> = r
                .clusters
                .iter()
                .filter(|c| c.skipped)
                .map(|c| c.ch_id)
                .collect();
            assert!(cand.is_disjoint(&skipped_clusters));
        }
    }
}

#[test]
fn contribution_counters_match_event_log() {
    let (sim, reports) = simulate(cfg(&["attack=combined", "raw_cosine_check=true"]), 25);
    let mut member = [0u64; 25];
    let mut head = [0u64; 25];
    for r in &reports {
        for c in &r.clusters {
            for &id in &c.accepted {
                member[id] += 1;
            }
        }
        for &id in &r.epc.accepted {
            head[id] += 1;
        }
    }
    for rec in sim.records() {
        assert_eq!(
            rec.cm.metrics.total_contributions, member[rec.id],
            "vehicle {}",
            rec.id
        );
        assert_eq!(
            rec.ch.metrics.total_contributions, head[rec.id],
            "vehicle {}",
            rec.id
        );
        assert_eq!(rec.cm.metrics.rounds_elapsed, 25);
    }
}

#[test]
fn block_lasts_exactly_unblock_time_rounds() {
    let (_, reports) = simulate(
        cfg(&["attack=gradient_ascent", "raw_cosine_check=true"]),
        40,
    );
    let mut checked = 0;
    for (i, r) in reports.iter().enumerate() {
        for ev in &r.newly_blocked {
            let window = &reports[i + 1..(i + 6).min(reports.len())];
            if window.len() < 5 {
                continue;
            }
            // Only a clean block window is comparable; a re-flag restarts it.
            let reflagged = window
                .iter()
                .any(|w| w.newly_blocked.iter().any(|e| e.id == ev.id));
            if reflagged {
                continue;
            }
            for w in window {
                assert!(
                    w.blocked.contains(&ev.id),
                    "vehicle {} round {}",
                    ev.id,
                    w.round
                );
            }
            if let Some(after) = reports.get(i + 6) {
                assert!(!after.blocked.contains(&ev.id));
            }
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn reset_restores_the_previous_memory() {
    let config = cfg(&["defense=darcs", "num_vehicles=4"]);
    let data = generate_synthetic(400, 20, 4, 5).unwrap();
    let parts = partition(&data, 4, &config.partition, 5).unwrap();
    let spec = ModelSpec::default();
    let theta = ParamVector::zeros(spec.param_count());
    let mut records: Vec<VehicleRecord> = (0..4)
        .map(|id| VehicleRecord::new(id, false, &config, &theta))
        .collect();
    // A remembered cosine of -1 makes any sensible current cosine a breach.
    let remembered = ParamVector::new(vec![0.25; spec.param_count()]).unwrap();
    for r in &mut records {
        r.cm.memory.params = remembered.clone();
        r.cm.memory.cosine = Some(-1.0);
        r.cm.memory.round = 1;
        r.set_round(2);
    }
    let ctx = RoundContext {
        cfg: &config,
        spec: &spec,
        shards: &parts.shards,
        validation: &parts.validation,
        theta_global: &theta,
        round: 2,
    };
    let cluster = ClusterView {
        ch_id: 0,
        member_ids: vec![1, 2, 3],
        hop_limit: 1,
    };
    let mut refs: Vec<&mut VehicleRecord> = records.iter_mut().collect();
    let out = run_ch_round(&ctx, &cluster, &mut refs).unwrap();
    assert!(!out.report.reset.is_empty());
    for id in &out.report.reset {
        assert_eq!(records[*id].local_params, remembered);
        assert_eq!(records[*id].stats.resets, 1);
    }
}

#[test]
fn attacks_hurt_an_undefended_run() {
    let (_, clean) = simulate(cfg(&["defense=none", "attack=none"]), 30);
    for attack in ["combined", "gaussian"] {
        let (_, hit) = simulate(cfg(&["defense=none", &format!("attack={attack}")]), 30);
        for (c, h) in clean.iter().zip(&hit).skip(5) {
            assert!(
                h.global_accuracy <= c.global_accuracy,
                "{attack} round {}",
                c.round
            );
        }
    }
}

#[test]
fn blocked_vehicles_stay_out_of_aggregation() {
    let (_, reports) = simulate(cfg(&["attack=combined", "raw_cosine_check=true"]), 30);
    for r in &reports {
        let blocked = set(&r.blocked);
        for c in &r.clusters {
            assert!(set(&c.accepted).is_disjoint(&blocked));
        }
        assert!(set(&r.epc.accepted).is_disjoint(&blocked));
    }
}

fn default_world(cfg: &RunConfig) -> World {
    World::random(
        cfg.num_vehicles,
        cfg.road_length_m,
        cfg.speed_min_mps,
        cfg.speed_max_mps,
        &mut SeededStream::derive(cfg.seed, &[stream::WORLD]),
    )
}

#[test]
fn wider_range_means_fewer_clusters() {
    let config = cfg(&[]);
    let world = default_world(&config);
    let near = form_clusters(&world, 100.0, 1).len();
    let far = form_clusters(&world, 500.0, 1).len();
    assert!(far < near, "{far} vs {near}");
    assert!(form_clusters(&world, 100.0, 3).len() <= near);
}

#[test]
fn membership_churns_over_twenty_rounds() {
    let config = cfg(&[]);
    let mut world = default_world(&config);
    let head_of = |clusters: &[ClusterView]| {
        let mut h = vec![usize::MAX; config.num_vehicles];
        for c in clusters {
            for id in c.all_ids() {
                h[id] = c.ch_id;
            }
        }
        h
    };
    let first = head_of(&form_clusters(&world, 100.0, 1));
    let mut changed = false;
    for _ in 0..20 {
        world = step_mobility(&world, config.round_duration_s);
        changed |= head_of(&form_clusters(&world, 100.0, 1)) != first;
    }
    assert!(changed);
}

#[test]
fn streams_are_independent_of_each_other() {
    assert_ne!(
        derive_seed(1, &[stream::TRAIN, 0, 1]),
        derive_seed(1, &[stream::NOISE, 0, 1])
    );
    assert_ne!(
        derive_seed(1, &[stream::TRAIN, 0, 1]),
        derive_seed(2, &[stream::TRAIN, 0, 1])
    );
}
