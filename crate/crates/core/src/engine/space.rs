use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

/// Largest state count we are willing to enumerate exhaustively.
pub const ENUMERATION_LIMIT: usize = 1 << 24;

/// A joint assignment of discrete variables. Values are indices into each
/// variable's declared range `0..cardinality`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for State {
    fn from(v: Vec<usize>) -> Self {
        State(v)
    }
}

/// Product space of discrete variables with declared cardinalities.
///
/// Enumeration order is mixed-radix with the first variable most
/// significant, so `index_of` agrees with lexicographic order of
/// assignments. The exact maximizer's tie-break (lowest index) relies on
/// this.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    cards: Vec<usize>,
}

impl StateSpace {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if let Some(i) = cards.iter().position(|&c| c == 0) {
            return Err(HerdingError::InvalidConfig(format!(
                "variable {i} has cardinality 0"
            )));
        }
        Ok(StateSpace { cards })
    }

    /// A single variable with `d` values.
    pub fn single(d: usize) -> Self {
        assert!(d > 0, "cardinality must be positive");
        StateSpace { cards: vec![d] }
    }

    pub fn binary(n: usize) -> Self {
        StateSpace { cards: vec![2; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cards[var]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Number of joint states, `None` on overflow.
    pub fn size(&self) -> Option<usize> {
        self.cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c))
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self.size(), Some(n) if n <= ENUMERATION_LIMIT)
    }

    pub fn contains(&self, values: &[usize]) -> bool {
        values.len() == self.cards.len() && values.iter().zip(&self.cards).all(|(v, c)| v < c)
    }

    pub fn check(&self, values: &[usize]) -> Result<()> {
        if values.len() != self.cards.len() {
            return Err(HerdingError::InvalidState(format!(
                "expected {} variables, got {}",
                self.cards.len(),
                values.len()
            )));
        }
        for (i, (v, c)) in values.iter().zip(&self.cards).enumerate() {
            if v >= c {
                return Err(HerdingError::InvalidState(format!(
                    "variable {i} has value {v} outside 0..{c}"
                )));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, values: &[usize]) -> Option<usize> {
        if !self.contains(values) {
            return None;
        }
        values
            .iter()
            .zip(&self.cards)
            .try_fold(0usize, |acc, (&v, &c)| acc.checked_mul(c)?.checked_add(v))
    }

    pub fn state_at(&self, mut index: usize) -> Option<State> {
        if index >= self.size()? {
            return None;
        }
        let mut values = vec![0; self.cards.len()];
        for (slot, &c) in values.iter_mut().zip(&self.cards).rev() {
            *slot = index % c;
            index /= c;
        }
        Some(State(values))
    }

    pub fn zero_state(&self) -> State {
        State(vec![0; self.cards.len()])
    }

    /// Visits every state in index order.
    pub fn for_each_state(&self, mut f: impl FnMut(usize, &[usize])) -> Result<()> {
        let n = self.size().filter(|&n| n <= ENUMERATION_LIMIT).ok_or_else(|| {
            HerdingError::NotEnumerable(format!("{} variables", self.cards.len()))
        })?;
        let mut values = vec![0usize; self.cards.len()];
        for idx in 0..n {
            f(idx, &values);
            advance(&mut values, &self.cards, None);
        }
        Ok(())
    }
}

/// Odometer increment over the variables not pinned by `clamp`. Returns
/// false once it wraps around.
pub(crate) fn advance(values: &mut [usize], cards: &[usize], clamp: Option<&[Option<usize>]>) -> bool {
    for i in (0..values.len()).rev() {
        if clamp.is_some_and(|c| c[i].is_some()) {
            continue;
        }
        values[i] += 1;
        if values[i] < cards[i] {
            return true;
        }
        values[i] = 0;
    }
    false
}
