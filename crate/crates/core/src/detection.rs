//! Statistical anomaly tests on updates: norm Z-scores, cosine similarity
//! against a cohort reference, cross-cluster agreement, and the per-vehicle
//! adaptive cosine-drift threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// Norms below this are treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Cohort statistics of update norms for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    /// Population (divide-by-n) standard deviation.
    pub std: f64,
    pub n: usize,
}

impl NormStats {
    pub fn from_norms(norms: &[f64]) -> Result<Self> {
        if norms.is_empty() {
            return Err(Error::invalid("empty cohort"));
        }
        let n = norms.len() as f64;
        let mean = norms.iter().sum::<f64>() / n;
        let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            n: norms.len(),
        })
    }

    /// Z-score of one norm; exactly 0 in a zero-variance cohort.
    pub fn z(&self, norm: f64) -> f64 {
        if self.std < DEGENERATE_EPS {
            0.0
        } else {
            (norm - self.mean) / self.std
        }
    }
}

pub fn zscore(norms: &[f64], k: usize) -> Result<f64> {
    let stats = NormStats::from_norms(norms)?;
    let v = norms
        .get(k)
        .ok_or_else(|| Error::invalid(format!("index {k} outside cohort of {}", norms.len())))?;
    Ok(stats.z(*v))
}

/// Z-scores for the whole cohort.
pub fn zscores(norms: &[f64]) -> Result<Vec<f64>> {
    let stats = NormStats::from_norms(norms)?;
    Ok(norms.iter().map(|&v| stats.z(v)).collect())
}

/// Distance between a cluster model and the global model.
pub fn ch_norm(theta_ch: &ParamVector, theta_global: &ParamVector) -> Result<f64> {
    Ok(theta_ch.sub(theta_global)?.norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input had (near) zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine(a: &ParamVector, b: &ParamVector) -> Result<Cosine> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na < DEGENERATE_EPS || nb < DEGENERATE_EPS {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Cosine {
        value: (dot / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Component-wise mean of the cohort; `None` for an empty cohort, which the
/// engine turns into a skipped cluster round.
pub fn mean_gradient(updates: &[&ParamVector]) -> Result<Option<ParamVector>> {
    let Some(first) = updates.first() else {
        return Ok(None);
    };
    let mut acc = ParamVector::zeros(first.dim());
    for u in updates {
        acc.axpy(1.0, u)?;
    }
    Ok(Some(acc.scale(1.0 / updates.len() as f64)))
}

/// Pairwise cosine matrix over cluster deltas (`theta_p - theta_global_prev`).
/// Degenerate pairs contribute 0.
pub fn cross_cluster_matrix(deltas: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    let c = deltas.len();
    let mut m = vec![vec![1.0; c]; c];
    for p in 0..c {
        for q in (p + 1)..c {
            let v = cosine(&deltas[p], &deltas[q])?.value;
            m[p][q] = v;
            m[q][p] = v;
        }
    }
    Ok(m)
}

/// Mean of row `p` of a cross-cluster cosine matrix over all `q != p`.
/// `None` when there is a single cluster (check skipped).
pub fn avg_cross_cluster(sims: &[Vec<f64>], p: usize) -> Result<Option<f64>> {
    let c = sims.len();
    if p >= c {
        return Err(Error::invalid(format!("cluster index {p} outside {c}")));
    }
    if c < 2 {
        return Ok(None);
    }
    let total = (0..c)
        .filter(|&q| q != p)
        .fold(0.0, |acc, q| acc + sims[p][q]);
    Ok(Some(total / (c - 1) as f64))
}

/// Per-vehicle cosine-drift threshold that tightens for consistently
/// accurate vehicles and never drops below `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveThreshold {
    pub value: f64,
    pub floor: f64,
    pub step: f64,
    pub trigger: f64,
}

impl AdaptiveThreshold {
    pub fn new(value: f64, floor: f64, step: f64, trigger: f64) -> Self {
        Self {
            value,
            floor,
            step,
            trigger,
        }
    }

    pub fn tighten(self, historical_accuracy: f64) -> Self {
        if historical_accuracy >= self.trigger && self.value > self.floor {
            Self {
                value: (self.value - self.step).max(self.floor),
                ..self
            }
        } else {
            self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_variance_cohort() {
        for k in 0..3 {
            assert_eq!(zscore(&[2.0, 2.0, 2.0], k).unwrap(), 0.0);
        }
    }

    #[test]
    fn population_std_zscore() {
        let z = zscore(&[1.0, 2.0, 3.0, 4.0, 5.0], 4).unwrap();
        assert!((z - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zscore_errors() {
        assert!(zscore(&[], 0).is_err());
        assert!(zscore(&[1.0], 1).is_err());
    }

    #[test]
    fn ch_norm_examples() {
        let g = pv(&[1.0, -2.0]);
        assert_eq!(ch_norm(&g, &g).unwrap(), 0.0);
        assert_eq!(ch_norm(&pv(&[4.0, 2.0]), &g).unwrap(), 5.0);
        assert!(ch_norm(&pv(&[1.0]), &g).is_err());
    }

    #[test]
    fn cosine_examples() {
        let v = pv(&[0.3, -1.2, 2.0]);
        assert!((cosine(&v, &v).unwrap().value - 1.0).abs() < 1e-15);
        assert!((cosine(&v, &v.neg()).unwrap().value + 1.0).abs() < 1e-15);
        assert_eq!(
            cosine(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap().value,
            0.0
        );
        let z = cosine(&pv(&[0.0, 0.0]), &pv(&[1.0, 1.0])).unwrap();
        assert!(z.degenerate);
        assert_eq!(z.value, 0.0);
        assert!(cosine(&pv(&[1.0]), &pv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn mean_gradient_examples() {
        let u = pv(&[1.5, -2.0]);
        assert_eq!(mean_gradient(&[&u]).unwrap().unwrap(), u);
        let m = mean_gradient(&[&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])])
            .unwrap()
            .unwrap();
        assert_eq!(m.as_slice(), &[0.5, 0.5]);
        assert!(mean_gradient(&[]).unwrap().is_none());
    }

    #[test]
    fn cross_cluster_antiparallel() {
        let d = pv(&[1.0, 2.0, -1.0]);
        let deltas = vec![d.neg(), d.clone(), d.scale(3.0)];
        let m = cross_cluster_matrix(&deltas).unwrap();
        assert!((avg_cross_cluster(&m, 0).unwrap().unwrap() + 1.0).abs() < 1e-12);
        let same = cross_cluster_matrix(&[d.clone(), d.clone(), d.clone()]).unwrap();
        for p in 0..3 {
            assert!((avg_cross_cluster(&same, p).unwrap().unwrap() - 1.0).abs() < 1e-12);
        }
        let lone = cross_cluster_matrix(&[d]).unwrap();
        assert_eq!(avg_cross_cluster(&lone, 0).unwrap(), None);
    }

    #[test]
    fn tighten_examples() {
        let t = AdaptiveThreshold::new(0.90, 0.2, 0.05, 0.95);
        assert!((t.tighten(0.96).value - 0.85).abs() < 1e-12);
        let low = AdaptiveThreshold::new(0.22, 0.2, 0.05, 0.95);
        assert_eq!(low.tighten(0.99).value, 0.20);
        assert_eq!(t.tighten(0.50), t);
        let at_floor = AdaptiveThreshold::new(0.2, 0.2, 0.05, 0.95);
        assert_eq!(at_floor.tighten(1.0).value, 0.2);
    }
}
