//! Per-vehicle reliability bookkeeping, the weighted reliability score and
//! the block/unblock lifecycle.

use serde::{Deserialize, Serialize};

/// Running counters for one vehicle. Every ratio divides by the global round
/// count, so rounds spent blocked or unselected dilute the averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMetrics {
    pub total_accuracy: f64,
    pub total_contributions: u64,
    pub total_anomalies: u64,
    pub rounds_elapsed: u64,
}

impl ReliabilityMetrics {
    pub fn historical_accuracy(&self) -> f64 {
        if self.rounds_elapsed == 0 {
            0.0
        } else {
            self.total_accuracy / self.rounds_elapsed as f64
        }
    }

    pub fn contribution_frequency(&self) -> f64 {
        if self.rounds_elapsed == 0 {
            0.0
        } else {
            self.total_contributions as f64 / self.rounds_elapsed as f64
        }
    }

    pub fn anomaly_record(&self) -> f64 {
        if self.rounds_elapsed == 0 {
            0.0
        } else {
            self.total_anomalies as f64 / self.rounds_elapsed as f64
        }
    }

    pub fn record_contribution(&mut self, accuracy: f64) {
        self.total_contributions += 1;
        self.total_accuracy += accuracy;
    }

    pub fn record_anomaly(&mut self) {
        self.total_anomalies += 1;
    }
}

pub fn historical_accuracy(m: &ReliabilityMetrics) -> f64 {
    m.historical_accuracy()
}

pub fn contribution_frequency(m: &ReliabilityMetrics) -> f64 {
    m.contribution_frequency()
}

pub fn anomaly_record(m: &ReliabilityMetrics) -> f64 {
    m.anomaly_record()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityWeights {
    pub accuracy: f64,
    pub frequency: f64,
    pub anomaly: f64,
}

impl Default for ReliabilityWeights {
    fn default() -> Self {
        Self {
            accuracy: 1.0,
            frequency: 1.0,
            anomaly: 1.0,
        }
    }
}

/// `w_acc * HA + w_freq * CF - w_anom * AR`. Can be negative.
pub fn reliability_score(m: &ReliabilityMetrics, w: &ReliabilityWeights) -> f64 {
    w.accuracy * m.historical_accuracy() + w.frequency * m.contribution_frequency()
        - w.anomaly * m.anomaly_record()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockState {
    pub flagged: bool,
    pub duration: u32,
    pub unblock_time: u32,
}

impl BlockState {
    pub fn new(unblock_time: u32) -> Self {
        Self {
            flagged: false,
            duration: 0,
            unblock_time,
        }
    }

    pub fn block(&mut self) {
        self.flagged = true;
        self.duration = 0;
    }
}

/// Start-of-round eligibility check. A flagged vehicle sits out while its
/// duration is below `unblock_time`; after that the flag is cleared.
pub fn tick_block(b: BlockState) -> (BlockState, bool) {
    if b.flagged && b.duration < b.unblock_time {
        (
            BlockState {
                duration: b.duration + 1,
                ..b
            },
            false,
        )
    } else {
        (
            BlockState {
                flagged: false,
                ..b
            },
            true,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub score: f64,
    pub eligible: bool,
}

/// Eligible candidates sorted by score (descending, ties by ascending id);
/// the top `ceil(fraction * eligible)` ids are returned in that order.
pub fn select_clients(records: &[Candidate], fraction: f64) -> Vec<usize> {
    let mut pool: Vec<&Candidate> = records.iter().filter(|c| c.eligible).collect();
    pool.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let take = (fraction * pool.len() as f64).ceil() as usize;
    pool.iter()
        .take(take.min(pool.len()))
        .map(|c| c.id)
        .collect()
}
