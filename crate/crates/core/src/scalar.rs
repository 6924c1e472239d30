//! Closed-form herding for a single binary neuron and for one discrete
//! variable with a 1-of-D encoding, plus the rabbit (Fibonacci) sequence
//! that the golden-mean neuron reproduces.

use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

/// `(sqrt(5) - 1) / 2`.
pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub pi: f64,
    pub w0: f64,
}

impl NeuronConfig {
    pub fn new(pi: f64, w0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(HerdingError::InvalidConfig(format!("firing rate {pi} outside [0, 1]")));
        }
        if !w0.is_finite() {
            return Err(HerdingError::InvalidConfig("initial weight must be finite".into()));
        }
        Ok(NeuronConfig { pi, w0 })
    }

    /// Golden-mean rate started at `2 phi - 1`: emits the rabbit sequence.
    pub fn rabbit() -> Self {
        let phi = golden_mean();
        NeuronConfig { pi: phi, w0: 2.0 * phi - 1.0 }
    }

    /// `w0 = pi - 1/2`, which halves the discrepancy bound.
    pub fn centered(pi: f64) -> Result<Self> {
        Self::new(pi, pi - 0.5)
    }

    /// Whether `w0` already lies in the invariant interval `(pi - 1, pi]`.
    pub fn starts_invariant(&self) -> bool {
        self.w0 > self.pi - 1.0 && self.w0 <= self.pi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronRun {
    pub bits: Vec<u8>,
    /// `w_0, ..., w_T`.
    pub weights: Vec<f64>,
}

impl NeuronRun {
    pub fn final_weight(&self) -> f64 {
        *self.weights.last().expect("weights include w0")
    }
}

/// `s_t = [w_{t-1} > 0]`, `w_t = w_{t-1} + pi - s_t`. The comparison is
/// strict: a weight of exactly zero does not fire.
pub fn neuron_run(cfg: &NeuronConfig, steps: usize) -> Result<NeuronRun> {
    if steps == 0 {
        return Err(HerdingError::InvalidConfig("a run needs at least one step".into()));
    }
    let mut bits = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps + 1);
    let mut w = cfg.w0;
    weights.push(w);
    for _ in 0..steps {
        let s = u8::from(w > 0.0);
        w = w + cfg.pi - f64::from(s);
        bits.push(s);
        weights.push(w);
    }
    Ok(NeuronRun { bits, weights })
}

/// `|#{ones in bits[start..start+len]} - len * pi|`.
pub fn neuron_discrepancy(bits: &[u8], pi: f64, start: usize, len: usize) -> Result<f64> {
    let window = bits.get(start..start + len).ok_or_else(|| {
        HerdingError::InvalidConfig(format!("window {start}+{len} exceeds sequence of {}", bits.len()))
    })?;
    let ones = window.iter().filter(|&&b| b == 1).count();
    Ok((ones as f64 - len as f64 * pi).abs())
}

/// First `n` symbols of the fixed point of `1 -> 10, 0 -> 1` grown from `1`.
pub fn rabbit_sequence(n: usize) -> Vec<u8> {
    let mut seq = vec![1u8];
    while seq.len() < n {
        let mut next = Vec::with_capacity(seq.len() * 2);
        for &s in &seq {
            if s == 1 {
                next.extend_from_slice(&[1, 0]);
            } else {
                next.push(1);
            }
        }
        seq = next;
    }
    seq.truncate(n);
    seq
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialConfig {
    pub pi: Vec<f64>,
    pub w0: Vec<f64>,
}

impl MultinomialConfig {
    pub fn new(pi: Vec<f64>, w0: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(HerdingError::InvalidConfig("empty distribution".into()));
        }
        if pi.len() != w0.len() {
            return Err(HerdingError::DimensionMismatch { expected: pi.len(), got: w0.len() });
        }
        if pi.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(HerdingError::InvalidConfig("probabilities must be non-negative".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(HerdingError::InvalidConfig(format!("probabilities sum to {total}, not 1")));
        }
        if w0.iter().any(|w| !w.is_finite()) {
            return Err(HerdingError::InvalidConfig("initial weights must be finite".into()));
        }
        Ok(MultinomialConfig { pi, w0 })
    }

    /// Starts at `w0 = pi`.
    pub fn from_pi(pi: Vec<f64>) -> Result<Self> {
        let w0 = pi.clone();
        Self::new(pi, w0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialRun {
    pub states: Vec<usize>,
    pub counts: Vec<usize>,
    pub final_weights: Vec<f64>,
    /// `max_t ||w_t||_inf` including `w_0`.
    pub max_abs_weight: f64,
}

impl MultinomialRun {
    pub fn empirical(&self) -> Vec<f64> {
        let t = self.states.len() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// `s_t = argmax_x w_x` (lowest index on ties), `w_t = w_{t-1} + pi - e_{s_t}`.
pub fn multinomial_run(cfg: &MultinomialConfig, steps: usize) -> Result<MultinomialRun> {
    if steps == 0 {
        return Err(HerdingError::InvalidConfig("a run needs at least one step".into()));
    }
    let d = cfg.pi.len();
    let mut w = cfg.w0.clone();
    let mut states = Vec::with_capacity(steps);
    let mut counts = vec![0usize; d];
    let mut max_abs = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..steps {
        let mut s = 0;
        for x in 1..d {
            if w[x] > w[s] {
                s = x;
            }
        }
        for (k, (wk, pk)) in w.iter_mut().zip(&cfg.pi).enumerate() {
            *wk += pk - if k == s { 1.0 } else { 0.0 };
        }
        states.push(s);
        counts[s] += 1;
        max_abs = w.iter().fold(max_abs, |m, x| m.max(x.abs()));
    }
    Ok(MultinomialRun { states, counts, final_weights: w, max_abs_weight: max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{herd_run, Maximizer, MomentVector, Provenance, TableFeatures, TraceConfig, WeightVector};
    use proptest::prelude::*;

    #[test]
    fn rabbit_examples() {
        assert_eq!(rabbit_sequence(1), vec![1]);
        assert_eq!(rabbit_sequence(8), vec![1, 0, 1, 1, 0, 1, 0, 1]);
        assert_eq!(rabbit_sequence(13), vec![1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn fibonacci_neuron_emits_the_rabbit_sequence() {
        let run = neuron_run(&NeuronConfig::rabbit(), 8).unwrap();
        assert_eq!(run.bits, vec![1, 0, 1, 1, 0, 1, 0, 1]);
        assert!((run.weights[1] + 0.145898).abs() < 1e-6);
        let long = neuron_run(&NeuronConfig::rabbit(), 10_000).unwrap();
        assert_eq!(long.bits, rabbit_sequence(10_000));
    }

    #[test]
    fn degenerate_rate_never_fires() {
        let run = neuron_run(&NeuronConfig::new(0.0, -0.5).unwrap(), 100).unwrap();
        assert!(run.bits.iter().all(|&b| b == 0));
        assert!(run.weights.iter().all(|&w| w == -0.5));
        for start in 0..50 {
            assert_eq!(neuron_discrepancy(&run.bits, 0.0, start, 50).unwrap(), 0.0);
        }
    }

    #[test]
    fn half_rate_alternates() {
        let run = neuron_run(&NeuronConfig::new(0.5, 0.0).unwrap(), 100).unwrap();
        for (t, &b) in run.bits.iter().enumerate() {
            assert_eq!(b as usize, t % 2);
        }
        for start in 0..90 {
            for len in 1..10 {
                assert!(neuron_discrepancy(&run.bits, 0.5, start, len).unwrap() <= 0.5);
            }
        }
    }

    #[test]
    fn golden_windows_are_within_one() {
        let run = neuron_run(&NeuronConfig::rabbit(), 2000).unwrap();
        let phi = golden_mean();
        let mut worst = 0.0f64;
        for start in (0..1900).step_by(7) {
            for len in [1, 2, 3, 5, 8, 13, 50, 99] {
                let d = neuron_discrepancy(&run.bits, phi, start, len).unwrap();
                assert!(d <= 1.0 + 1e-12);
                worst = worst.max(d);
            }
        }
        // Offset windows of a dense orbit do get past 1/2.
        assert!(worst > 0.5);
    }

    #[test]
    fn centered_start_halves_prefix_discrepancy() {
        let phi = golden_mean();
        let run = neuron_run(&NeuronConfig::centered(phi).unwrap(), 5000).unwrap();
        for len in 1..=5000 {
            assert!(neuron_discrepancy(&run.bits, phi, 0, len).unwrap() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(NeuronConfig::new(1.5, 0.0).is_err());
        assert!(NeuronConfig::new(-0.1, 0.0).is_err());
        assert!(neuron_run(&NeuronConfig::rabbit(), 0).is_err());
        assert!(neuron_discrepancy(&[1, 0], 0.5, 1, 2).is_err());
        assert!(MultinomialConfig::from_pi(vec![0.5, 0.4]).is_err());
        assert!(MultinomialConfig::from_pi(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn multinomial_examples() {
        let run = multinomial_run(&MultinomialConfig::from_pi(vec![0.5, 0.25, 0.25]).unwrap(), 12).unwrap();
        assert_eq!(run.states, vec![0, 1, 2, 0, 0, 1, 2, 0, 0, 1, 2, 0]);
        assert_eq!(run.empirical(), vec![0.5, 0.25, 0.25]);

        let run = multinomial_run(&MultinomialConfig::from_pi(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), 20).unwrap();
        assert!(run.states.iter().all(|&s| s == 0));

        let run = multinomial_run(&MultinomialConfig::from_pi(vec![0.25; 4]).unwrap(), 4).unwrap();
        assert_eq!(run.states, vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn invariant_interval_is_closed(pi in 0.001f64..0.999, u in 0.0f64..1.0) {
            // w0 = pi - u lies in (pi - 1, pi] for u in [0, 1).
            let cfg = NeuronConfig::new(pi, pi - u).unwrap();
            prop_assert!(cfg.starts_invariant());
            let run = neuron_run(&cfg, 2000).unwrap();
            for &w in &run.weights {
                prop_assert!(w > pi - 1.0 && w <= pi);
            }
        }

        #[test]
        fn multinomial_matches_the_general_engine(
            raw in prop::collection::vec(0.01f64..1.0, 2..6),
            offsets in prop::collection::vec(-1.0f64..1.0, 6),
            steps in 1usize..300,
        ) {
            let total: f64 = raw.iter().sum();
            let mut pi: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head: f64 = pi[1..].iter().sum();
            pi[0] = 1.0 - head;
            let d = pi.len();
            let w0: Vec<f64> = (0..d).map(|i| offsets[i]).collect();
            let cfg = MultinomialConfig::new(pi.clone(), w0.clone());
            prop_assume!(cfg.is_ok());
            let fast = multinomial_run(&cfg.unwrap(), steps).unwrap();
            let f = TableFeatures::one_hot(d);
            let m = MomentVector::from_values(pi, Provenance::Analytic);
            let tr = herd_run(WeightVector(w0), &m, &f, &mut Maximizer::exact(), steps, &TraceConfig::default()).unwrap();
            prop_assert_eq!(tr.state_indices(&f).unwrap(), fast.states);
            prop_assert_eq!(
                tr.final_weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                fast.final_weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
