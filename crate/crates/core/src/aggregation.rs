//! Reliability-weighted averaging used at both tiers.

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedUpdate {
    pub update: ParamVector,
    pub weight: f64,
}

impl WeightedUpdate {
    /// Negative weights are clamped to zero.
    pub fn new(update: ParamVector, weight: f64) -> Self {
        Self {
            update,
            weight: weight.max(0.0),
        }
    }
}

/// `sum(w_i * u_i) / sum(w_i)` in input order. Returns `None` when the list
/// is empty or the weights sum to zero; the caller keeps its previous model.
pub fn weighted_mean(items: &[WeightedUpdate]) -> Result<Option<ParamVector>> {
    let Some(first) = items.first() else {
        return Ok(None);
    };
    if let Some(bad) = items
        .iter()
        .find(|it| !(it.weight >= 0.0 && it.weight.is_finite()))
    {
        return Err(Error::invalid(format!(
            "invalid aggregation weight {}",
            bad.weight
        )));
    }
    let total: f64 = items.iter().map(|it| it.weight).sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let mut acc = ParamVector::zeros(first.update.dim());
    for it in items {
        if it.weight > 0.0 {
            acc.axpy(it.weight, &it.update)?;
        } else {
            first.update.check_dim(&it.update)?;
        }
    }
    Ok(Some(acc.scale(1.0 / total)))
}

/// Descent step `theta_prev - eta * g`.
pub fn ch_step(theta_prev: &ParamVector, g: &ParamVector, eta: f64) -> Result<ParamVector> {
    let mut out = theta_prev.clone();
    out.axpy(-eta, g)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn equal_weights_give_arithmetic_mean() {
        let items = vec![
            WeightedUpdate::new(pv(&[1.0, 3.0]), 2.0),
            WeightedUpdate::new(pv(&[3.0, -1.0]), 2.0),
        ];
        assert_eq!(
            weighted_mean(&items).unwrap().unwrap().as_slice(),
            &[2.0, 1.0]
        );
    }

    #[test]
    fn weighted_example() {
        let items = vec![
            WeightedUpdate::new(pv(&[1.0, 0.0]), 1.0),
            WeightedUpdate::new(pv(&[0.0, 1.0]), 3.0),
        ];
        assert_eq!(
            weighted_mean(&items).unwrap().unwrap().as_slice(),
            &[0.25, 0.75]
        );
    }

    #[test]
    fn zero_weight_item_is_ignored() {
        let a = WeightedUpdate::new(pv(&[1.0, 2.0]), 0.7);
        let b = WeightedUpdate::new(pv(&[-4.0, 0.5]), 1.3);
        let z = WeightedUpdate::new(pv(&[100.0, -100.0]), 0.0);
        let with = weighted_mean(&[a.clone(), z, b.clone()]).unwrap().unwrap();
        let without = weighted_mean(&[a, b]).unwrap().unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn zero_total_weight_means_no_update() {
        let items = vec![WeightedUpdate::new(pv(&[1.0]), -2.0)];
        assert_eq!(items[0].weight, 0.0);
        assert!(weighted_mean(&items).unwrap().is_none());
        assert!(weighted_mean(&[]).unwrap().is_none());
    }

    #[test]
    fn ch_step_examples() {
        let theta = pv(&[1.0, 1.0]);
        assert_eq!(ch_step(&theta, &pv(&[0.0, 0.0]), 1.0).unwrap(), theta);
        assert_eq!(
            ch_step(&theta, &pv(&[0.5, -0.5]), 1.0).unwrap().as_slice(),
            &[0.5, 1.5]
        );
        let g = pv(&[0.3, -0.2]);
        let d1 = ch_step(&theta, &g, 1.0).unwrap().sub(&theta).unwrap();
        let d2 = ch_step(&theta, &g, 2.0).unwrap().sub(&theta).unwrap();
        for (a, b) in d2.as_slice().iter().zip(d1.scale(2.0).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ch_step(&theta, &pv(&[1.0]), 1.0).is_err());
    }
}
