use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

use super::features::{dot, FeatureMap};
use super::maximizer::exact_argmax;
use super::moments::{MomentVector, WeightVector};

/// Orbit points closer than this (sup norm) count as the same point.
pub const PERIOD_TOLERANCE: f64 = 1e-8;
/// Consecutive matching positions needed to accept a period.
pub const PERIOD_CONFIRMATIONS: usize = 100;
pub const PERIOD_MAX: usize = 1024;

/// Zero-temperature log-likelihood `w . phi_bar - max_x w . phi(x)`.
/// Concave, piecewise linear, positively homogeneous, maximal (zero) at the
/// origin.
pub fn tipi_value<F: FeatureMap + ?Sized>(w: &[f64], moments: &MomentVector, fmap: &F) -> Result<f64> {
    if !fmap.space().is_enumerable() {
        return Err(HerdingError::NotEnumerable("the tipi function needs a global maximum".into()));
    }
    if w.len() != fmap.dim() || moments.dim() != fmap.dim() {
        return Err(HerdingError::DimensionMismatch { expected: fmap.dim(), got: w.len() });
    }
    let best = exact_argmax(fmap, w, None)?;
    Ok(dot(w, moments.values()) - best.score)
}

/// `E[phi(x)]` under `P(x) ∝ exp(w . phi(x) / temperature)`, by exhaustive
/// enumeration with a max-shifted log-sum-exp.
pub fn expected_features_at_temperature<F: FeatureMap + ?Sized>(
    w: &[f64],
    fmap: &F,
    temperature: f64,
) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(HerdingError::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    if w.len() != fmap.dim() {
        return Err(HerdingError::DimensionMismatch { expected: fmap.dim(), got: w.len() });
    }
    let k = fmap.dim();
    let mut buf = vec![0.0; k];
    let mut max_logit = f64::NEG_INFINITY;
    fmap.space().for_each_state(|_, s| {
        fmap.eval_into(s, &mut buf);
        max_logit = max_logit.max(dot(w, &buf) / temperature);
    })?;
    if !max_logit.is_finite() {
        return Err(HerdingError::Overflow);
    }
    let mut z = 0.0;
    let mut acc = vec![0.0; k];
    fmap.space().for_each_state(|_, s| {
        fmap.eval_into(s, &mut buf);
        let p = (dot(w, &buf) / temperature - max_logit).exp();
        z += p;
        for (a, f) in acc.iter_mut().zip(&buf) {
            *a += p * f;
        }
    })?;
    if !(z >= 1.0) || !z.is_finite() {
        return Err(HerdingError::Overflow);
    }
    acc.iter_mut().for_each(|a| *a /= z);
    Ok(acc)
}

/// One step of gradient ascent on the temperature-`T` log-likelihood with
/// unit step in the rescaled coordinates:
/// `w' = w + phi_bar - E_{P(x; w/T)}[phi(x)]`. As `T -> 0` this becomes the
/// herding update.
pub fn temperature_map_step<F: FeatureMap + ?Sized>(
    w: &WeightVector,
    moments: &MomentVector,
    fmap: &F,
    temperature: f64,
) -> Result<WeightVector> {
    if moments.dim() != fmap.dim() {
        return Err(HerdingError::DimensionMismatch { expected: fmap.dim(), got: moments.dim() });
    }
    let e = expected_features_at_temperature(w.values(), fmap, temperature)?;
    let next: Vec<f64> = w
        .values()
        .iter()
        .zip(moments.values())
        .zip(&e)
        .map(|((wi, m), ei)| wi + (m - ei))
        .collect();
    let next = WeightVector(next);
    if let Some(index) = next.first_non_finite() {
        return Err(HerdingError::NonFiniteWeight { step: 0, index });
    }
    Ok(next)
}

/// Iterates the temperature map, returning `w_0, w_1, ..., w_steps`.
pub fn temperature_map_orbit<F: FeatureMap + ?Sized>(
    w0: WeightVector,
    moments: &MomentVector,
    fmap: &F,
    temperature: f64,
    steps: usize,
) -> Result<Vec<WeightVector>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(w0);
    for _ in 0..steps {
        let next = temperature_map_step(out.last().expect("non-empty"), moments, fmap, temperature)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Period {
    Periodic(usize),
    /// No period up to `max_period` found after this many steps.
    AperiodicAtHorizon(usize),
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Period::Periodic(p) => write!(f, "{p}"),
            Period::AperiodicAtHorizon(_) => write!(f, "aperiodic"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodConfig {
    pub burn_in: usize,
    pub max_period: usize,
    pub confirmations: usize,
    pub tolerance: f64,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig {
            burn_in: 20_000,
            max_period: PERIOD_MAX,
            confirmations: PERIOD_CONFIRMATIONS,
            tolerance: PERIOD_TOLERANCE,
        }
    }
}

impl PeriodConfig {
    pub fn horizon(&self) -> usize {
        self.burn_in + self.max_period + self.confirmations
    }
}

/// Smallest `p <= max_period` with `||w_{t+p} - w_t||_inf < tolerance` for
/// `confirmations` consecutive `t` right after the burn-in.
pub fn detect_period(orbit_tail: &[Vec<f64>], cfg: &PeriodConfig) -> Option<usize> {
    let n = orbit_tail.len();
    (1..=cfg.max_period).find(|&p| {
        p + cfg.confirmations <= n
            && (0..cfg.confirmations).all(|t| {
                orbit_tail[t]
                    .iter()
                    .zip(&orbit_tail[t + p])
                    .all(|(a, b)| (a - b).abs() < cfg.tolerance)
            })
    })
}

impl Period {
    /// Runs the temperature map from `w0` and classifies its asymptotic
    /// orbit.
    pub fn of_temperature_map<F: FeatureMap + ?Sized>(
        w0: WeightVector,
        moments: &MomentVector,
        fmap: &F,
        temperature: f64,
        cfg: &PeriodConfig,
    ) -> Result<Period> {
        let mut w = w0;
        for _ in 0..cfg.burn_in {
            w = temperature_map_step(&w, moments, fmap, temperature)?;
        }
        let window = cfg.max_period + cfg.confirmations;
        let mut tail = Vec::with_capacity(window);
        tail.push(w.values().to_vec());
        for _ in 1..window {
            w = temperature_map_step(&w, moments, fmap, temperature)?;
            tail.push(w.values().to_vec());
        }
        Ok(match detect_period(&tail, cfg) {
            Some(p) => Period::Periodic(p),
            None => Period::AperiodicAtHorizon(cfg.horizon()),
        })
    }
}
