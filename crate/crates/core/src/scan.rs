//! Multi-chain studies. Every chain is independent and sequential; chains
//! fan out over [`par`](crate::par) and results come back in input order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diag::autocorrelation;
use crate::engine::{
    herd_run, FeatureMap, Maximizer, MomentVector, Period, PeriodConfig, TraceConfig, WeightVector,
};
use crate::error::{HerdingError, Result};
use crate::models::{random_mrf, RandomModelSpec};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub temperature: f64,
    pub period: Period,
}

/// Asymptotic period of the temperature map at each temperature, every
/// orbit started from `w0`.
pub fn bifurcation_scan<F: FeatureMap + Sync + ?Sized>(
    fmap: &F,
    moments: &MomentVector,
    w0: &WeightVector,
    temperatures: &[f64],
    cfg: &PeriodConfig,
    exec: Exec,
) -> Result<Vec<BifurcationPoint>> {
    par::map(exec, temperatures, |&temperature| {
        Period::of_temperature_map(w0.clone(), moments, fmap, temperature, cfg)
            .map(|period| BifurcationPoint { temperature, period })
    })
    .into_iter()
    .collect()
}

/// `n` evenly spaced temperatures from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Period-doubling summary of a scan read from high to low temperature.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    /// Maximal runs of equal period as `(period, highest temperature, lowest temperature)`.
    pub regimes: Vec<(Period, f64, f64)>,
    /// Highest temperature of the first aperiodic regime below the first
    /// period-1, 2, 4 sequence.
    pub aperiodic_threshold: Option<f64>,
}

impl Cascade {
    pub fn from_scan(points: &[BifurcationPoint]) -> Cascade {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| b.temperature.total_cmp(&a.temperature));
        let mut regimes: Vec<(Period, f64, f64)> = Vec::new();
        for p in &pts {
            let same = |q: &Period| match (q, &p.period) {
                (Period::AperiodicAtHorizon(_), Period::AperiodicAtHorizon(_)) => true,
                (a, b) => a == b,
            };
            match regimes.last_mut() {
                Some(r) if same(&r.0) => r.2 = p.temperature,
                _ => regimes.push((p.period, p.temperature, p.temperature)),
            }
        }
        let aperiodic_threshold = Self::cascade_start(&regimes).and_then(|i| {
            regimes[i + 3..].iter().find(|r| matches!(r.0, Period::AperiodicAtHorizon(_))).map(|r| r.1)
        });
        Cascade { regimes, aperiodic_threshold }
    }

    fn cascade_start(regimes: &[(Period, f64, f64)]) -> Option<usize> {
        regimes.windows(3).position(|w| {
            matches!(w, [(Period::Periodic(1), ..), (Period::Periodic(2), ..), (Period::Periodic(4), ..)])
        })
    }

    /// True when periods 1, 2 and 4 appear consecutively as the temperature
    /// drops and a regime without a detectable period lies below them.
    pub fn doubles_to_chaos(&self) -> bool {
        self.aperiodic_threshold.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrStudy {
    pub d: usize,
    pub k: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// `R(1..=t_max)` of each herding run; `None` where undefined.
    pub herding: Vec<Vec<Option<f64>>>,
    /// `R(1)` of a uniformly shuffled copy of each run.
    pub surrogate_r1: Vec<Option<f64>>,
}

impl AutocorrStudy {
    fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let v: Vec<f64> = xs.flatten().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean `R(lag)` over models, for `lag >= 1`.
    pub fn mean_r(&self, lag: usize) -> Option<f64> {
        Self::mean(self.herding.iter().map(|r| r.get(lag - 1).copied().flatten()))
    }

    /// Empirical `q`-quantile of the surrogate `R(1)` values (nearest rank).
    pub fn surrogate_quantile(&self, q: f64) -> Option<f64> {
        let mut v: Vec<f64> = self.surrogate_r1.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Some(v[rank - 1])
    }
}

/// Herds one random `d`-state, `k`-feature model per seed with exact
/// maximization from `w0 = phi_bar`, and measures the autocorrelation of
/// the state sequence against a shuffled surrogate seeded alike.
pub fn autocorrelation_study(
    d: usize,
    k: usize,
    seeds: &[u64],
    steps: usize,
    t_max: usize,
    exec: Exec,
) -> Result<AutocorrStudy> {
    let rows = par::map(exec, seeds, |&seed| -> Result<(Vec<Option<f64>>, Option<f64>)> {
        let model = random_mrf(RandomModelSpec::new(d, k, seed))?;
        let cfg = TraceConfig { record_samples: true, ..TraceConfig::default().with_stride(usize::MAX) };
        let trace = herd_run(
            WeightVector::from(&model.moments),
            &model.moments,
            &model.features,
            &mut Maximizer::exact(),
            steps,
            &cfg,
        )?;
        let mut seq = trace
            .state_indices(&model.features)
            .ok_or_else(|| HerdingError::NotEnumerable("autocorrelation needs state indices".into()))?;
        let r = autocorrelation(&seq, t_max).into_iter().skip(1).collect();
        seq.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed5u64));
        let s1 = autocorrelation(&seq, 1).get(1).copied().flatten();
        Ok((r, s1))
    });
    let mut herding = Vec::with_capacity(seeds.len());
    let mut surrogate_r1 = Vec::with_capacity(seeds.len());
    for row in rows {
        let (r, s) = row?;
        herding.push(r);
        surrogate_r1.push(s);
    }
    Ok(AutocorrStudy { d, k, steps, seeds: seeds.to_vec(), herding, surrogate_r1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(t: f64, p: Option<usize>) -> BifurcationPoint {
        BifurcationPoint { temperature: t, period: p.map_or(Period::AperiodicAtHorizon(10), Period::Periodic) }
    }

    #[test]
    fn grid_endpoints() {
        let g = linear_grid(0.05, 0.5, 10);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.05);
        assert!((g[9] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cascade_detection() {
        let scan = vec![pt(0.1, None), pt(0.9, Some(1)), pt(0.5, Some(2)), pt(0.4, Some(4)), pt(0.3, Some(4)), pt(0.2, None)];
        let c = Cascade::from_scan(&scan);
        assert!(c.doubles_to_chaos());
        assert_eq!(c.aperiodic_threshold, Some(0.2));
        assert_eq!(c.regimes.len(), 4);
        let via8 = Cascade::from_scan(&[pt(0.9, Some(1)), pt(0.5, Some(2)), pt(0.4, Some(4)), pt(0.3, Some(8)), pt(0.2, None)]);
        assert_eq!(via8.aperiodic_threshold, Some(0.2));
        let no = Cascade::from_scan(&[pt(0.9, Some(1)), pt(0.5, Some(4)), pt(0.2, None)]);
        assert!(!no.doubles_to_chaos());
    }

    #[test]
    fn high_temperature_has_a_fixed_point() {
        let m = random_mrf(RandomModelSpec::new(4, 2, 7)).unwrap();
        let cfg = PeriodConfig { burn_in: 2000, ..PeriodConfig::default() };
        let scan =
            bifurcation_scan(&m.features, &m.moments, &WeightVector::from(&m.moments), &[5.0], &cfg, Exec::Sequential)
                .unwrap();
        assert_eq!(scan[0].period, Period::Periodic(1));
    }

    #[test]
    fn study_is_deterministic_and_parallel_safe() {
        let seeds: Vec<u64> = (0..6).collect();
        let a = autocorrelation_study(10, 7, &seeds, 2000, 3, Exec::Sequential).unwrap();
        let b = autocorrelation_study(10, 7, &seeds, 2000, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.herding[0].len(), 3);
        assert!(a.mean_r(1).unwrap() < 0.0);
    }

    #[test]
    fn nearest_rank_quantile() {
        let s = AutocorrStudy {
            d: 1,
            k: 1,
            steps: 0,
            seeds: vec![],
            herding: vec![],
            surrogate_r1: (1..=20).map(|i| Some(i as f64)).chain([None]).collect(),
        };
        assert_eq!(s.surrogate_quantile(0.05), Some(1.0));
        assert_eq!(s.surrogate_quantile(0.5), Some(10.0));
    }
}
