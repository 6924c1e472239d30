use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

use super::features::{dot, FeatureMap};
use super::maximizer::Maximizer;
use super::moments::{MomentVector, WeightVector};
use super::space::State;

pub const DEFAULT_SNAPSHOT_STRIDE: usize = 100;

/// `w . v` is flagged once it exceeds this multiple of `||w|| ||v||`.
pub const PCT_RELATIVE_TOLERANCE: f64 = 1e-12;

pub fn pct_tolerance(w: &[f64], v: &[f64]) -> f64 {
    PCT_RELATIVE_TOLERANCE * dot(w, w).sqrt() * dot(v, v).sqrt()
}

/// What to do with the condition `w . v <= 0` at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PctCheck {
    Off,
    /// Record violating steps and keep going.
    Count,
    /// Abort with [`HerdingError::PctViolation`].
    Fail,
}

impl PctCheck {
    /// Exact maximization satisfies the condition by construction.
    pub fn default_for(maxer: &Maximizer) -> Self {
        if maxer.is_exact() {
            PctCheck::Off
        } else {
            PctCheck::Count
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// `None` picks [`PctCheck::default_for`] the maximizer in use.
    pub pct: Option<PctCheck>,
    /// Per-dimension learning rates. `None` means 1 everywhere.
    pub rates: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub features: Vec<f64>,
    /// `w_{t-1} . (phi_bar - phi(s_t))`, the PCT quantity.
    pub pct_dot: f64,
    pub pct_violated: bool,
}

/// One herding update: `s = argmax_x w . phi(x)`, then
/// `w <- w + rate * (phi_bar - phi(s))`.
pub fn herd_step<F: FeatureMap + ?Sized>(
    w: &mut WeightVector,
    moments: &MomentVector,
    fmap: &F,
    maxer: &mut Maximizer,
    opts: &StepOptions,
    step: usize,
) -> Result<StepOutcome> {
    let k = fmap.dim();
    if w.dim() != k {
        return Err(HerdingError::DimensionMismatch { expected: k, got: w.dim() });
    }
    if moments.dim() != k {
        return Err(HerdingError::DimensionMismatch { expected: k, got: moments.dim() });
    }
    if let Some(r) = &opts.rates {
        if r.len() != k {
            return Err(HerdingError::DimensionMismatch { expected: k, got: r.len() });
        }
    }
    let m = maxer.maximize(fmap, w.values())?;
    let features = fmap.eval(&m.state);
    let v: Vec<f64> = moments.values().iter().zip(&features).map(|(a, b)| a - b).collect();
    let pct = opts.pct.unwrap_or_else(|| PctCheck::default_for(maxer));
    let (pct_dot, pct_violated) = match pct {
        PctCheck::Off => (f64::NAN, false),
        _ => {
            let d = dot(w.values(), &v);
            let tol = pct_tolerance(w.values(), &v);
            if d > tol && pct == PctCheck::Fail {
                return Err(HerdingError::PctViolation { step, dot: d, tol });
            }
            (d, d > tol)
        }
    };
    match &opts.rates {
        None => w.values_mut().iter_mut().zip(&v).for_each(|(wi, vi)| *wi += vi),
        Some(r) => w.values_mut().iter_mut().zip(&v).zip(r).for_each(|((wi, vi), ri)| *wi += ri * vi),
    }
    if let Some(index) = w.first_non_finite() {
        return Err(HerdingError::NonFiniteWeight { step, index });
    }
    Ok(StepOutcome { state: State(m.state), features, pct_dot, pct_violated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub snapshot_stride: usize,
    pub record_samples: bool,
    pub step: StepOptions,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { snapshot_stride: DEFAULT_SNAPSHOT_STRIDE, record_samples: true, step: StepOptions::default() }
    }
}

impl TraceConfig {
    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_pct(mut self, pct: PctCheck) -> Self {
        self.step.pct = Some(pct);
        self
    }
}

/// Everything a run leaves behind.
///
/// `weight_norms_l2[t]` and `weight_norms_inf[t]` are the norms of `w_t`
/// for `t = 0..=steps`, so prefix maxima are available to any diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HerdingTrace {
    pub steps: usize,
    pub initial_weights: Vec<f64>,
    pub final_weights: Vec<f64>,
    pub samples: Vec<State>,
    pub running_feature_sum: Vec<f64>,
    pub weight_snapshots: Vec<(usize, Vec<f64>)>,
    pub pct_violations: Vec<usize>,
    pub max_weight_norm: f64,
    pub weight_norms_l2: Vec<f64>,
    pub weight_norms_inf: Vec<f64>,
}

impl HerdingTrace {
    pub fn new(w0: &[f64], stride: usize) -> Self {
        let w = WeightVector(w0.to_vec());
        HerdingTrace {
            steps: 0,
            initial_weights: w0.to_vec(),
            final_weights: w0.to_vec(),
            samples: Vec::new(),
            running_feature_sum: vec![0.0; w0.len()],
            weight_snapshots: if stride > 0 { vec![(0, w0.to_vec())] } else { Vec::new() },
            pct_violations: Vec::new(),
            max_weight_norm: w.norm_l2(),
            weight_norms_l2: vec![w.norm_l2()],
            weight_norms_inf: vec![w.norm_inf()],
        }
    }

    /// Appends step `steps + 1`.
    pub fn record(&mut self, state: Option<State>, features: &[f64], w: &WeightVector, pct_violated: bool, stride: usize) {
        self.steps += 1;
        let t = self.steps;
        if let Some(s) = state {
            self.samples.push(s);
        }
        for (acc, f) in self.running_feature_sum.iter_mut().zip(features) {
            *acc += f;
        }
        if pct_violated {
            self.pct_violations.push(t);
        }
        let l2 = w.norm_l2();
        self.max_weight_norm = self.max_weight_norm.max(l2);
        self.weight_norms_l2.push(l2);
        self.weight_norms_inf.push(w.norm_inf());
        if stride > 0 && t % stride == 0 {
            self.weight_snapshots.push((t, w.values().to_vec()));
        }
        self.final_weights.clear();
        self.final_weights.extend_from_slice(w.values());
    }

    /// Ensures the final weights appear as the last snapshot.
    pub fn finish(&mut self, stride: usize) {
        if stride > 0 && self.weight_snapshots.last().map(|s| s.0) != Some(self.steps) {
            self.weight_snapshots.push((self.steps, self.final_weights.clone()));
        }
    }

    /// `max_t ||w_t||_inf` over `t = 0..=upto`.
    pub fn max_abs_weight(&self, upto: usize) -> f64 {
        self.weight_norms_inf[..=upto].iter().fold(0.0, |m, &x| m.max(x))
    }

    /// Largest deviation from `w_T = w_0 + T phi_bar - sum_t phi(s_t)`.
    pub fn moment_identity_residual(&self, moments: &MomentVector) -> f64 {
        let t = self.steps as f64;
        self.final_weights
            .iter()
            .zip(&self.initial_weights)
            .zip(moments.values())
            .zip(&self.running_feature_sum)
            .map(|(((wt, w0), m), s)| (wt - (w0 + t * m - s)).abs())
            .fold(0.0, f64::max)
    }

    /// Recomputes the feature sum from the stored samples, in step order.
    pub fn recompute_feature_sum<F: FeatureMap + ?Sized>(&self, fmap: &F) -> Vec<f64> {
        let mut acc = vec![0.0; fmap.dim()];
        let mut buf = vec![0.0; fmap.dim()];
        for s in &self.samples {
            fmap.eval_into(s.values(), &mut buf);
            for (a, f) in acc.iter_mut().zip(&buf) {
                *a += f;
            }
        }
        acc
    }

    /// Sample sequence as state indices (enumerable spaces only).
    pub fn state_indices<F: FeatureMap + ?Sized>(&self, fmap: &F) -> Option<Vec<usize>> {
        self.samples.iter().map(|s| fmap.space().index_of(s.values())).collect()
    }
}

pub fn herd_run<F: FeatureMap + ?Sized>(
    w0: WeightVector,
    moments: &MomentVector,
    fmap: &F,
    maxer: &mut Maximizer,
    steps: usize,
    cfg: &TraceConfig,
) -> Result<HerdingTrace> {
    herd_run_with(w0, moments, fmap, maxer, steps, cfg, |_, _| {})
}

/// [`herd_run`] with a per-step observer, for callers that need more than
/// the trace keeps (e.g. statistics over samples that are not stored).
pub fn herd_run_with<F: FeatureMap + ?Sized>(
    w0: WeightVector,
    moments: &MomentVector,
    fmap: &F,
    maxer: &mut Maximizer,
    steps: usize,
    cfg: &TraceConfig,
    mut observer: impl FnMut(usize, &StepOutcome),
) -> Result<HerdingTrace> {
    if steps == 0 {
        return Err(HerdingError::InvalidConfig("a run needs at least one step".into()));
    }
    let mut w = w0;
    let mut trace = HerdingTrace::new(w.values(), cfg.snapshot_stride);
    for t in 1..=steps {
        let out = herd_step(&mut w, moments, fmap, maxer, &cfg.step, t)?;
        observer(t, &out);
        let state = cfg.record_samples.then(|| out.state.clone());
        trace.record(state, &out.features, &w, out.pct_violated, cfg.snapshot_stride);
    }
    trace.finish(cfg.snapshot_stride);
    Ok(trace)
}
