use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

use super::features::{dot, FeatureMap};
use super::space::advance;

pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaximizerKind {
    /// Exhaustive search; lowest state index wins ties.
    Exact,
    /// Coordinate ascent from the all-zeros state on every call.
    CoordinateAscent,
    /// Coordinate ascent warm-started from the previous result.
    PersistentCoordinateAscent,
    /// Coordinate ascent from a caller-supplied initial state.
    DataInitialized,
}

impl std::str::FromStr for MaximizerKind {
    type Err = HerdingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MaximizerKind::Exact),
            "coordinate-ascent" | "coordinate" => Ok(MaximizerKind::CoordinateAscent),
            "persistent" | "persistent-coordinate-ascent" => Ok(MaximizerKind::PersistentCoordinateAscent),
            "data-initialized" => Ok(MaximizerKind::DataInitialized),
            other => Err(HerdingError::InvalidConfig(format!("unknown maximizer kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Maximum {
    pub state: Vec<usize>,
    pub score: f64,
}

/// Strategy that returns a (full or partial) maximizer of `w . phi(x)`.
///
/// Only the exact kind guarantees the global maximum. The local kinds are
/// acceptable whenever the returned state scores at least `w . phi_bar`,
/// which the engine can verify at every step.
#[derive(Clone, Debug)]
pub struct Maximizer {
    kind: MaximizerKind,
    sweep_order: Option<Vec<usize>>,
    max_sweeps: usize,
    persistent_state: Option<Vec<usize>>,
    init_state: Option<Vec<usize>>,
}

impl Maximizer {
    pub fn new(kind: MaximizerKind, max_sweeps: usize) -> Self {
        Maximizer { kind, sweep_order: None, max_sweeps, persistent_state: None, init_state: None }
    }

    pub fn exact() -> Self {
        Self::new(MaximizerKind::Exact, 0)
    }

    pub fn coordinate_ascent(max_sweeps: usize) -> Self {
        Self::new(MaximizerKind::CoordinateAscent, max_sweeps)
    }

    pub fn persistent(max_sweeps: usize) -> Self {
        Self::new(MaximizerKind::PersistentCoordinateAscent, max_sweeps)
    }

    pub fn data_initialized(max_sweeps: usize) -> Self {
        Self::new(MaximizerKind::DataInitialized, max_sweeps)
    }

    pub fn with_sweep_order(mut self, order: Vec<usize>) -> Self {
        self.sweep_order = Some(order);
        self
    }

    pub fn kind(&self) -> MaximizerKind {
        self.kind
    }

    pub fn is_exact(&self) -> bool {
        self.kind == MaximizerKind::Exact
    }

    pub fn max_sweeps(&self) -> usize {
        self.max_sweeps
    }

    pub fn persistent_state(&self) -> Option<&[usize]> {
        self.persistent_state.as_deref()
    }

    /// Seeds the persistent chain (persistent kind) or the next start state
    /// (data-initialized kind).
    pub fn set_init(&mut self, state: Vec<usize>) {
        match self.kind {
            MaximizerKind::PersistentCoordinateAscent => self.persistent_state = Some(state),
            _ => self.init_state = Some(state),
        }
    }

    pub fn maximize<F: FeatureMap + ?Sized>(&mut self, fmap: &F, w: &[f64]) -> Result<Maximum> {
        self.maximize_clamped(fmap, w, None)
    }

    /// Maximizes over the variables not pinned by `clamp`. Pinned variables
    /// keep their clamp value regardless of the start state.
    pub fn maximize_clamped<F: FeatureMap + ?Sized>(
        &mut self,
        fmap: &F,
        w: &[f64],
        clamp: Option<&[Option<usize>]>,
    ) -> Result<Maximum> {
        if w.len() != fmap.dim() {
            return Err(HerdingError::DimensionMismatch { expected: fmap.dim(), got: w.len() });
        }
        let n = fmap.space().num_vars();
        let order: Vec<usize> = self.sweep_order.clone().unwrap_or_else(|| (0..n).collect());
        let pin = |mut s: Vec<usize>| {
            if let Some(c) = clamp {
                for (v, cv) in s.iter_mut().zip(c) {
                    if let Some(x) = cv {
                        *v = *x;
                    }
                }
            }
            s
        };
        match self.kind {
            MaximizerKind::Exact => exact_argmax(fmap, w, clamp),
            MaximizerKind::CoordinateAscent => {
                let start = pin(vec![0; n]);
                Ok(coordinate_ascent(fmap, w, start, clamp, &order, self.max_sweeps))
            }
            MaximizerKind::PersistentCoordinateAscent => {
                let start = pin(self.persistent_state.take().unwrap_or_else(|| vec![0; n]));
                fmap.space().check(&start)?;
                let m = coordinate_ascent(fmap, w, start, clamp, &order, self.max_sweeps);
                self.persistent_state = Some(m.state.clone());
                Ok(m)
            }
            MaximizerKind::DataInitialized => {
                let start = self.init_state.clone().ok_or_else(|| {
                    HerdingError::InvalidConfig("data-initialized maximizer has no start state".into())
                })?;
                let start = pin(start);
                fmap.space().check(&start)?;
                Ok(coordinate_ascent(fmap, w, start, clamp, &order, self.max_sweeps))
            }
        }
    }
}

/// Exhaustive maximization over the free variables. Ties go to the lowest
/// joint state index.
pub fn exact_argmax<F: FeatureMap + ?Sized>(
    fmap: &F,
    w: &[f64],
    clamp: Option<&[Option<usize>]>,
) -> Result<Maximum> {
    let space = fmap.space();
    let cards = space.cardinalities();
    let free_size = cards
        .iter()
        .enumerate()
        .filter(|(i, _)| clamp.is_none_or(|c| c[*i].is_none()))
        .try_fold(1usize, |acc, (_, &c)| acc.checked_mul(c))
        .filter(|&n| n <= super::space::ENUMERATION_LIMIT)
        .ok_or_else(|| HerdingError::NotEnumerable("free variables exceed the enumeration limit".into()))?;
    let mut values: Vec<usize> = match clamp {
        Some(c) => c.iter().map(|v| v.unwrap_or(0)).collect(),
        None => vec![0; cards.len()],
    };
    space.check(&values)?;
    let mut buf = vec![0.0; fmap.dim()];
    let mut best = Maximum { state: values.clone(), score: f64::NEG_INFINITY };
    for _ in 0..free_size {
        fmap.eval_into(&values, &mut buf);
        let s = dot(w, &buf);
        if s > best.score {
            best.score = s;
            best.state.copy_from_slice(&values);
        }
        advance(&mut values, cards, clamp);
    }
    if !best.score.is_finite() {
        return Err(HerdingError::InvalidConfig("non-finite score during maximization".into()));
    }
    Ok(best)
}

/// Greedy coordinate ascent: sweeps the free variables in `order`, moving a
/// variable only on strict improvement (lowest value among the best), until
/// a sweep changes nothing or `max_sweeps` is reached. Never decreases the
/// score of `start` beyond floating-point rounding.
pub fn coordinate_ascent<F: FeatureMap + ?Sized>(
    fmap: &F,
    w: &[f64],
    start: Vec<usize>,
    clamp: Option<&[Option<usize>]>,
    order: &[usize],
    max_sweeps: usize,
) -> Maximum {
    let mut state = start;
    let mut scores = Vec::new();
    for _ in 0..max_sweeps {
        let mut changed = false;
        for &var in order {
            if clamp.is_some_and(|c| c[var].is_some()) {
                continue;
            }
            fmap.conditional_scores(w, &state, var, &mut scores);
            let cur = state[var];
            let mut best = cur;
            for (v, &sc) in scores.iter().enumerate() {
                if sc > scores[best] {
                    best = v;
                }
            }
            if best != cur {
                state[var] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let score = fmap.score(w, &state);
    Maximum { state, score }
}
