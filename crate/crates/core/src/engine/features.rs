use crate::error::{HerdingError, Result};

use super::space::StateSpace;

/// Inner product with a fixed left-to-right accumulation order.
///
/// Every score in the engine goes through this function so that traces are
/// bit-reproducible: near-tie argmax decisions must not depend on how a sum
/// was associated.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Maps a discrete state to a real feature vector of fixed dimension.
///
/// Implementations must be pure: evaluating the same state twice yields the
/// same bits.
pub trait FeatureMap: Send + Sync {
    fn dim(&self) -> usize;

    fn space(&self) -> &StateSpace;

    fn eval_into(&self, state: &[usize], out: &mut [f64]);

    fn eval(&self, state: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(state, &mut out);
        out
    }

    /// `w . phi(state)`.
    fn score(&self, w: &[f64], state: &[usize]) -> f64 {
        dot(w, &self.eval(state))
    }

    /// Writes into `out[v]` the score of `state` with variable `var` set to
    /// `v`, for every value `v`. Entries may be offset by a constant shared
    /// across all values; only their differences are used. Implementations
    /// with local structure should override this.
    fn conditional_scores(&self, w: &[f64], state: &[usize], var: usize, out: &mut Vec<f64>) {
        let card = self.space().cardinality(var);
        let mut probe = state.to_vec();
        let mut buf = vec![0.0; self.dim()];
        out.clear();
        for v in 0..card {
            probe[var] = v;
            self.eval_into(&probe, &mut buf);
            out.push(dot(w, &buf));
        }
    }

    /// Upper bound on `||phi(x)||_2` over the whole space, when known.
    fn norm_bound(&self) -> Option<f64> {
        None
    }
}

impl<F: FeatureMap + ?Sized> FeatureMap for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn space(&self) -> &StateSpace {
        (**self).space()
    }
    fn eval_into(&self, state: &[usize], out: &mut [f64]) {
        (**self).eval_into(state, out)
    }
    fn score(&self, w: &[f64], state: &[usize]) -> f64 {
        (**self).score(w, state)
    }
    fn conditional_scores(&self, w: &[f64], state: &[usize], var: usize, out: &mut Vec<f64>) {
        (**self).conditional_scores(w, state, var, out)
    }
    fn norm_bound(&self) -> Option<f64> {
        (**self).norm_bound()
    }
}

/// Explicit table of feature vectors for a single discrete variable with
/// `D` values: row `d` is `phi(d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableFeatures {
    space: StateSpace,
    rows: Vec<Vec<f64>>,
    dim: usize,
    norm_bound: f64,
}

impl TableFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| HerdingError::InvalidConfig("feature table has no rows".into()))?;
        if dim == 0 {
            return Err(HerdingError::InvalidConfig("feature dimension is 0".into()));
        }
        for row in &rows {
            if row.len() != dim {
                return Err(HerdingError::DimensionMismatch { expected: dim, got: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(HerdingError::InvalidConfig("non-finite feature value".into()));
            }
        }
        let norm_bound = rows.iter().map(|r| dot(r, r).sqrt()).fold(0.0, f64::max);
        Ok(TableFeatures { space: StateSpace::single(rows.len()), rows, dim, norm_bound })
    }

    /// 1-of-D encoding: `phi(d) = e_d`.
    pub fn one_hot(d: usize) -> Self {
        let rows = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        TableFeatures::new(rows).expect("one-hot table is well formed")
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.rows[d]
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }
}

impl FeatureMap for TableFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn space(&self) -> &StateSpace {
        &self.space
    }

    fn eval_into(&self, state: &[usize], out: &mut [f64]) {
        out.copy_from_slice(&self.rows[state[0]]);
    }

    fn score(&self, w: &[f64], state: &[usize]) -> f64 {
        dot(w, &self.rows[state[0]])
    }

    fn conditional_scores(&self, w: &[f64], _state: &[usize], _var: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.rows.iter().map(|r| dot(w, r)));
    }

    fn norm_bound(&self) -> Option<f64> {
        Some(self.norm_bound)
    }
}
