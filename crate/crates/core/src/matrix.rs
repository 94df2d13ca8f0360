//! Cartesian benchmark sweeps: one run directory per grid point, a flat
//! `matrix_summary.csv` and a convergence-round pivot shaped like the
//! paper's tables (one row per scenario, one column per defense).

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::AttackKind;
use crate::config::{DefenseMode, RunConfig};
use crate::engine::{run_experiment, ConvergenceRound, Summary};
use crate::error::{Error, Result};
use crate::output::{csv_error, emit_reports};

pub const SUMMARY_CSV: &str = "matrix_summary.csv";
pub const TABLE_CSV: &str = "matrix_table.csv";

/// Sweep axes; an omitted axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<Vec<AttackKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<Vec<DefenseMode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_vehicles: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_range_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_limit: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Vec<u64>>,
}

impl MatrixAxes {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let axes: MatrixAxes =
            serde_json::from_str(text).map_err(|e| Error::validation("axes", e.to_string()))?;
        axes.validate()?;
        Ok(axes)
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("attack", self.attack.as_ref().map(Vec::len)),
            ("defense", self.defense.as_ref().map(Vec::len)),
            ("epsilon", self.epsilon.as_ref().map(Vec::len)),
            ("num_vehicles", self.num_vehicles.as_ref().map(Vec::len)),
            ("tx_range_m", self.tx_range_m.as_ref().map(Vec::len)),
            ("hop_limit", self.hop_limit.as_ref().map(Vec::len)),
            ("seed", self.seed.as_ref().map(Vec::len)),
        ];
        for (key, len) in lens {
            if len == Some(0) {
                return Err(Error::validation(
                    format!("axes.{key}"),
                    "must not be empty",
                ));
            }
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn size(&self) -> usize {
        [
            self.attack.as_ref().map(Vec::len),
            self.defense.as_ref().map(Vec::len),
            self.epsilon.as_ref().map(Vec::len),
            self.num_vehicles.as_ref().map(Vec::len),
            self.tx_range_m.as_ref().map(Vec::len),
            self.hop_limit.as_ref().map(Vec::len),
            self.seed.as_ref().map(Vec::len),
        ]
        .iter()
        .fold(1usize, |acc, len| acc.saturating_mul(len.unwrap_or(1)))
    }

    /// Every grid point in a fixed nesting order (attack outermost, seed innermost).
    pub fn expand(&self, base: &RunConfig) -> Vec<MatrixPoint> {
        let attacks = self.attack.clone().unwrap_or_else(|| vec![base.attack]);
        let defenses = self.defense.clone().unwrap_or_else(|| vec![base.defense]);
        let epsilons = self.epsilon.clone().unwrap_or_else(|| vec![base.epsilon]);
        let fleets = self
            .num_vehicles
            .clone()
            .unwrap_or_else(|| vec![base.num_vehicles]);
        let ranges = self
            .tx_range_m
            .clone()
            .unwrap_or_else(|| vec![base.tx_range_m]);
        let hops = self
            .hop_limit
            .clone()
            .unwrap_or_else(|| vec![base.hop_limit]);
        let seeds = self.seed.clone().unwrap_or_else(|| vec![base.seed]);
        let mut out = Vec::new();
        for &attack in &attacks {
            for &defense in &defenses {
                for &epsilon in &epsilons {
                    for &num_vehicles in &fleets {
                        for &tx_range_m in &ranges {
                            for &hop_limit in &hops {
                                for &seed in &seeds {
                                    out.push(MatrixPoint {
                                        index: out.len(),
                                        attack,
                                        defense,
                                        epsilon,
                                        num_vehicles,
                                        tx_range_m,
                                        hop_limit,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixPoint {
    pub index: usize,
    pub attack: AttackKind,
    pub defense: DefenseMode,
    pub epsilon: f64,
    pub num_vehicles: usize,
    pub tx_range_m: f64,
    pub hop_limit: u32,
    pub seed: u64,
}

impl MatrixPoint {
    pub fn run_id(&self) -> String {
        format!(
            "{:04}_{}_{}_eps{}_n{}_tx{}_h{}_s{}",
            self.index,
            self.attack.as_str(),
            self.defense.as_str(),
            self.epsilon,
            self.num_vehicles,
            self.tx_range_m,
            self.hop_limit,
            self.seed
        )
    }

    pub fn apply(&self, base: &RunConfig) -> Result<RunConfig> {
        let mut cfg = base.clone();
        cfg.attack = self.attack;
        cfg.defense = self.defense;
        cfg.epsilon = self.epsilon;
        cfg.num_vehicles = self.num_vehicles;
        cfg.tx_range_m = self.tx_range_m;
        cfg.hop_limit = self.hop_limit;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn scenario_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.attack.as_str(),
            self.epsilon,
            self.num_vehicles,
            self.tx_range_m,
            self.hop_limit
        )
    }
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub point: MatrixPoint,
    pub outcome: std::result::Result<Summary, String>,
}

fn run_point(
    base: &RunConfig,
    point: &MatrixPoint,
    out_dir: &Path,
) -> std::result::Result<Summary, String> {
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<Summary> {
        let cfg = point.apply(base)?;
        let result = run_experiment(&cfg)?;
        emit_reports(&result, &out_dir.join("runs").join(point.run_id()))?;
        Ok(result.summary)
    }));
    match attempt {
        Ok(Ok(summary)) => Ok(summary),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "run panicked".into())),
    }
}

/// Runs every grid point on up to `jobs` threads. A failing point is
/// recorded in its row and never aborts the sweep.
pub fn run_matrix(
    base: &RunConfig,
    axes: &MatrixAxes,
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<MatrixRow>> {
    axes.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let points = axes.expand(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    let rows: Vec<MatrixRow> = pool.install(|| {
        points
            .par_iter()
            .map(|p| MatrixRow {
                point: *p,
                outcome: run_point(base, p, out_dir),
            })
            .collect()
    });
    write_summary_csv(&rows, &out_dir.join(SUMMARY_CSV))?;
    write_table_csv(&rows, &out_dir.join(TABLE_CSV))?;
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv(rows: &[MatrixRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "run_id",
        "attack",
        "defense",
        "epsilon",
        "num_vehicles",
        "tx_range_m",
        "hop_limit",
        "seed",
        "status",
        "convergence_round",
        "final_accuracy",
        "rounds_run",
        "attackers_blocked",
        "attacker_block_latency",
        "benign_false_block_rate",
        "error",
    ])
    .map_err(|e| csv_error(path, e))?;
    for row in rows {
        let p = &row.point;
        let mut rec = vec![
            p.run_id(),
            p.attack.as_str().to_string(),
            p.defense.as_str().to_string(),
            p.epsilon.to_string(),
            p.num_vehicles.to_string(),
            p.tx_range_m.to_string(),
            p.hop_limit.to_string(),
            p.seed.to_string(),
        ];
        match &row.outcome {
            Ok(s) => rec.extend([
                "ok".to_string(),
                s.convergence_round.to_string(),
                s.final_accuracy.to_string(),
                s.rounds_run.to_string(),
                s.attackers_blocked.to_string(),
                opt(s.attacker_block_latency),
                s.benign_false_block_rate.to_string(),
                String::new(),
            ]),
            Err(msg) => {
                rec.extend(["error".to_string()]);
                rec.extend(std::iter::repeat_n(String::new(), 6));
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Median of convergence rounds with `inf` ordered last; ties round down.
pub fn median_round(values: &[ConvergenceRound]) -> Option<ConvergenceRound> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort();
    Some(v[(v.len() - 1) / 2])
}

/// Scenario rows by defense columns; each cell is the median convergence
/// round over seeds (`error` if any run of that cell failed).
pub fn write_table_csv(rows: &[MatrixRow], path: &Path) -> Result<()> {
    let defenses: Vec<DefenseMode> = DefenseMode::ALL
        .into_iter()
        .filter(|d| rows.iter().any(|r| r.point.defense == *d))
        .collect();
    let mut scenarios: Vec<String> = Vec::new();
    let mut first_point: BTreeMap<String, MatrixPoint> = BTreeMap::new();
    let mut cells: BTreeMap<(String, DefenseMode), Vec<Option<ConvergenceRound>>> = BTreeMap::new();
    for row in rows {
        let key = row.point.scenario_key();
        if !first_point.contains_key(&key) {
            scenarios.push(key.clone());
            first_point.insert(key.clone(), row.point);
        }
        cells
            .entry((key, row.point.defense))
            .or_default()
            .push(row.outcome.as_ref().ok().map(|s| s.convergence_round));
    }

    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = [
        "attack",
        "epsilon",
        "num_vehicles",
        "tx_range_m",
        "hop_limit",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(defenses.iter().map(|d| d.as_str().to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for key in &scenarios {
        let p = first_point[key];
        let mut rec = vec![
            p.attack.as_str().to_string(),
            p.epsilon.to_string(),
            p.num_vehicles.to_string(),
            p.tx_range_m.to_string(),
            p.hop_limit.to_string(),
        ];
        for d in &defenses {
            let cell = match cells.get(&(key.clone(), *d)) {
                None => String::new(),
                Some(vals) if vals.iter().any(Option::is_none) => "error".to_string(),
                Some(vals) => {
                    let ok: Vec<ConvergenceRound> = vals.iter().flatten().copied().collect();
                    opt(median_round(&ok))
                }
            };
            rec.push(cell);
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_axes(path: &Path) -> Result<MatrixAxes> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MatrixAxes::from_json_str(&text)
}
