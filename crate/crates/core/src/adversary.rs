//! Model-poisoning transforms applied to an attacker's outgoing update.

use serde::{Deserialize, Serialize};

use crate::numerics::ParamVector;
use crate::rng::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Gaussian,
    GradientAscent,
    Combined,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Gaussian => "gaussian",
            AttackKind::GradientAscent => "gradient_ascent",
            AttackKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackProfile {
    pub kind: AttackKind,
    pub noise_mean: f64,
    pub noise_var: f64,
}

/// Adds i.i.d. `N(mean, var)` noise to every component.
pub fn apply_gaussian(
    update: &ParamVector,
    mean: f64,
    var: f64,
    rng: &mut SeededStream,
) -> ParamVector {
    let sd = var.max(0.0).sqrt();
    let mut out = update.clone();
    for v in out.as_mut_slice() {
        *v += rng.normal(mean, sd);
    }
    out
}

/// Reverses a descent delta. With `g = -eta * grad` the result is `+eta * grad`.
pub fn apply_gradient_ascent(update: &ParamVector) -> ParamVector {
    update.neg()
}

/// Benign vehicles pass through; `Combined` negates first, then adds noise.
pub fn apply_profile(
    update: &ParamVector,
    profile: &AttackProfile,
    is_attacker: bool,
    rng: &mut SeededStream,
) -> ParamVector {
    if !is_attacker {
        return update.clone();
    }
    match profile.kind {
        AttackKind::None => update.clone(),
        AttackKind::Gaussian => apply_gaussian(update, profile.noise_mean, profile.noise_var, rng),
        AttackKind::GradientAscent => apply_gradient_ascent(update),
        AttackKind::Combined => apply_gaussian(
            &apply_gradient_ascent(update),
            profile.noise_mean,
            profile.noise_var,
            rng,
        ),
    }
}

/// `round(fraction * num_vehicles)` distinct ids drawn with a seeded shuffle,
/// returned sorted.
pub fn choose_attackers(num_vehicles: usize, fraction: f64, rng: &mut SeededStream) -> Vec<usize> {
    let count = ((fraction * num_vehicles as f64).round() as usize).min(num_vehicles);
    let mut ids: Vec<usize> = (0..num_vehicles).collect();
    rng.shuffle(&mut ids);
    let mut chosen = ids[..count].to_vec();
    chosen.sort_unstable();
    chosen
}
