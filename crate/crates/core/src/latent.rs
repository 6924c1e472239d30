//! Herding for partially observed MRFs.
//!
//! Each step imputes the hidden variables of every data case in the current
//! minibatch by maximizing with the visible part clamped, averages the
//! resulting features into the positive term, and subtracts the features of
//! a joint maximizer. Imputations persist across steps and warm-start the
//! next clamped search.

use serde::{Deserialize, Serialize};

use crate::engine::{
    coordinate_ascent, dot, exact_argmax, pct_tolerance, FeatureMap, HerdingTrace, Maximum, PctCheck, State,
    WeightVector, DEFAULT_SNAPSHOT_STRIDE,
};
use crate::error::{HerdingError, Result};
use crate::par::{self, Exec};

/// How a (clamped or joint) maximization is carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Search {
    Exact,
    /// Coordinate ascent in variable order from a warm start. Zero sweeps
    /// returns the start unchanged.
    Local { max_sweeps: usize },
}

impl Search {
    fn run<F: FeatureMap + ?Sized>(
        self,
        fmap: &F,
        w: &[f64],
        start: Vec<usize>,
        clamp: Option<&[Option<usize>]>,
    ) -> Result<Maximum> {
        match self {
            Search::Exact => exact_argmax(fmap, w, clamp),
            Search::Local { max_sweeps } => {
                let order: Vec<usize> = (0..fmap.space().num_vars()).collect();
                Ok(coordinate_ascent(fmap, w, start, clamp, &order, max_sweeps))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Joint search warm-started from the previous joint sample.
    Full,
    /// Joint search started from the lowest-energy imputed data case of the
    /// minibatch; the search must not increase the energy of its start.
    Tractable,
}

/// Visible data plus a joint feature map whose first `n_visible` variables
/// are the visible ones and the rest are hidden.
#[derive(Clone, Debug)]
pub struct PomrfProblem<F> {
    fmap: F,
    n_visible: usize,
    data: Vec<Vec<usize>>,
    imputations: Vec<Vec<usize>>,
    joint: Option<Vec<usize>>,
}

impl<F: FeatureMap> PomrfProblem<F> {
    /// Imputations start at the all-zero hidden assignment.
    pub fn new(fmap: F, n_visible: usize, data: Vec<Vec<usize>>) -> Result<Self> {
        let space = fmap.space();
        if n_visible > space.num_vars() {
            return Err(HerdingError::InvalidConfig("more visible variables than the joint space has".into()));
        }
        if data.is_empty() {
            return Err(HerdingError::InvalidConfig("no data cases".into()));
        }
        for (i, x) in data.iter().enumerate() {
            if x.len() != n_visible {
                return Err(HerdingError::DimensionMismatch { expected: n_visible, got: x.len() });
            }
            if let Some(j) = x.iter().enumerate().position(|(j, &v)| v >= space.cardinality(j)) {
                return Err(HerdingError::InvalidState(format!("case {i}: visible variable {j} out of range")));
            }
        }
        let n_hidden = space.num_vars() - n_visible;
        let imputations = vec![vec![0; n_hidden]; data.len()];
        Ok(PomrfProblem { fmap, n_visible, data, imputations, joint: None })
    }

    pub fn fmap(&self) -> &F {
        &self.fmap
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.fmap.space().num_vars() - self.n_visible
    }

    pub fn data(&self) -> &[Vec<usize>] {
        &self.data
    }

    pub fn imputations(&self) -> &[Vec<usize>] {
        &self.imputations
    }

    pub fn num_cases(&self) -> usize {
        self.data.len()
    }

    /// Joint assignment `(x_i, z_i)` of case `i` under its current imputation.
    pub fn completed_case(&self, i: usize) -> Vec<usize> {
        let mut s = self.data[i].clone();
        s.extend_from_slice(&self.imputations[i]);
        s
    }

    fn clamp_for(&self, i: usize) -> Vec<Option<usize>> {
        let mut c: Vec<Option<usize>> = self.data[i].iter().map(|&v| Some(v)).collect();
        c.extend(std::iter::repeat_n(None, self.n_hidden()));
        c
    }
}

/// Energies `-w . phi(x_i, z*_i)` of the cases in a minibatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub cases: Vec<usize>,
    pub per_case_energy: Vec<f64>,
    /// Case index (into the data set) with the lowest energy; lowest index
    /// on ties.
    pub argmin_case: usize,
}

impl EnergyRecord {
    fn from_scores(cases: &[usize], scores: &[f64]) -> Self {
        let per_case_energy: Vec<f64> = scores.iter().map(|s| -s).collect();
        let mut best = 0;
        for (j, &e) in per_case_energy.iter().enumerate() {
            if e < per_case_energy[best] {
                best = j;
            }
        }
        EnergyRecord { cases: cases.to_vec(), per_case_energy, argmin_case: cases[best] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomrfConfig {
    pub variant: Variant,
    pub hidden: Search,
    pub joint: Search,
    /// Cases per minibatch; `None` uses every case every step.
    pub minibatch: Option<usize>,
    /// `None` checks whenever some search is local.
    pub pct: Option<PctCheck>,
    pub snapshot_stride: usize,
    pub record_imputations: bool,
    pub exec: Exec,
}

impl Default for PomrfConfig {
    fn default() -> Self {
        PomrfConfig {
            variant: Variant::Full,
            hidden: Search::Exact,
            joint: Search::Exact,
            minibatch: None,
            pct: None,
            snapshot_stride: DEFAULT_SNAPSHOT_STRIDE,
            record_imputations: false,
            exec: Exec::Parallel,
        }
    }
}

impl PomrfConfig {
    pub fn tractable(max_sweeps: usize) -> Self {
        PomrfConfig { variant: Variant::Tractable, joint: Search::Local { max_sweeps }, ..Default::default() }
    }

    pub fn local(max_sweeps: usize) -> Self {
        let s = Search::Local { max_sweeps };
        PomrfConfig { hidden: s, joint: s, ..Default::default() }
    }

    fn pct_mode(&self) -> PctCheck {
        self.pct.unwrap_or(if self.hidden == Search::Exact && self.joint == Search::Exact {
            PctCheck::Off
        } else {
            PctCheck::Count
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PomrfStepOutcome {
    pub cases: Vec<usize>,
    pub imputations: Vec<Vec<usize>>,
    pub joint: State,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub pct_dot: f64,
    pub pct_violated: bool,
    pub energy: Option<EnergyRecord>,
}

/// The minibatch used at step `t` (1-based): batches of consecutive cases
/// cycled in a fixed order.
pub fn minibatch_cases(num_cases: usize, batch: Option<usize>, t: usize) -> Vec<usize> {
    let b = batch.unwrap_or(num_cases).clamp(1, num_cases);
    let n_batches = num_cases.div_ceil(b);
    let k = (t - 1) % n_batches;
    (k * b..((k + 1) * b).min(num_cases)).collect()
}

/// One step of either variant on the given cases.
pub fn pomrf_step<F: FeatureMap>(
    problem: &mut PomrfProblem<F>,
    w: &mut WeightVector,
    cfg: &PomrfConfig,
    cases: &[usize],
    step: usize,
) -> Result<PomrfStepOutcome> {
    let k = problem.fmap.dim();
    if w.dim() != k {
        return Err(HerdingError::DimensionMismatch { expected: k, got: w.dim() });
    }
    if cases.is_empty() {
        return Err(HerdingError::InvalidConfig("empty minibatch".into()));
    }
    let nv = problem.n_visible;
    let wv = w.values();
    let prob = &*problem;
    let results: Vec<Result<(Maximum, Vec<f64>)>> = par::map(cfg.exec, cases, |&i| {
        let clamp = prob.clamp_for(i);
        let m = cfg.hidden.run(&prob.fmap, wv, prob.completed_case(i), Some(&clamp))?;
        let f = prob.fmap.eval(&m.state);
        Ok((m, f))
    });
    let mut positive = vec![0.0; k];
    let mut scores = Vec::with_capacity(cases.len());
    let mut imputed = Vec::with_capacity(cases.len());
    for r in results {
        let (m, f) = r?;
        for (p, x) in positive.iter_mut().zip(&f) {
            *p += x;
        }
        scores.push(dot(wv, &f));
        imputed.push(m.state[nv..].to_vec());
    }
    let n = cases.len() as f64;
    positive.iter_mut().for_each(|p| *p /= n);
    for (&i, z) in cases.iter().zip(&imputed) {
        problem.imputations[i].clone_from(z);
    }

    let (joint, energy) = match cfg.variant {
        Variant::Full => {
            let start = problem.joint.clone().unwrap_or_else(|| problem.completed_case(cases[0]));
            (cfg.joint.run(&problem.fmap, wv, start, None)?, None)
        }
        Variant::Tractable => {
            let rec = EnergyRecord::from_scores(cases, &scores);
            let start = problem.completed_case(rec.argmin_case);
            let before = problem.fmap.score(wv, &start);
            let m = cfg.joint.run(&problem.fmap, wv, start, None)?;
            if m.score < before - 1e-10 * (1.0 + before.abs()) {
                return Err(HerdingError::EnergyIncreased { before: -before, after: -m.score });
            }
            (m, Some(rec))
        }
    };
    problem.joint = Some(joint.state.clone());
    let negative = problem.fmap.eval(&joint.state);
    let v: Vec<f64> = positive.iter().zip(&negative).map(|(a, b)| a - b).collect();
    let pct = cfg.pct_mode();
    let (pct_dot, pct_violated) = match pct {
        PctCheck::Off => (f64::NAN, false),
        _ => {
            let d = dot(wv, &v);
            let tol = pct_tolerance(wv, &v);
            if d > tol && pct == PctCheck::Fail {
                return Err(HerdingError::PctViolation { step, dot: d, tol });
            }
            (d, d > tol)
        }
    };
    w.values_mut().iter_mut().zip(&v).for_each(|(wi, vi)| *wi += vi);
    if let Some(index) = w.first_non_finite() {
        return Err(HerdingError::NonFiniteWeight { step, index });
    }
    Ok(PomrfStepOutcome {
        cases: cases.to_vec(),
        imputations: imputed,
        joint: State(joint.state),
        positive,
        negative,
        pct_dot,
        pct_violated,
        energy,
    })
}

/// [`pomrf_step`] with the tractable variant forced on.
pub fn tractable_pomrf_step<F: FeatureMap>(
    problem: &mut PomrfProblem<F>,
    w: &mut WeightVector,
    cfg: &PomrfConfig,
    cases: &[usize],
    step: usize,
) -> Result<PomrfStepOutcome> {
    let cfg = PomrfConfig { variant: Variant::Tractable, ..cfg.clone() };
    pomrf_step(problem, w, &cfg, cases, step)
}

#[derive(Clone, Debug)]
pub struct PomrfTrace {
    /// Joint samples and their feature sum (the negative phase).
    pub trace: HerdingTrace,
    /// Sum over steps of the positive (data) term.
    pub positive_sum: Vec<f64>,
    /// `imputations[t][j]`: hidden assignment of the `j`-th case of the
    /// minibatch at step `t + 1`, when recorded.
    pub imputations: Vec<Vec<Vec<usize>>>,
    /// `hidden_counts[k][v]`: how often hidden variable `k` took value `v`
    /// over all imputations of the run.
    pub hidden_counts: Vec<Vec<u64>>,
}

impl PomrfTrace {
    /// `max_a |mean positive_a - mean negative_a|` over the whole run.
    pub fn moment_gap(&self) -> f64 {
        let t = self.trace.steps as f64;
        self.positive_sum
            .iter()
            .zip(&self.trace.running_feature_sum)
            .map(|(p, n)| ((p - n) / t).abs())
            .fold(0.0, f64::max)
    }

    /// Mean over hidden variables of the entropy (bits) of each variable's
    /// marginal over all imputations.
    pub fn hidden_marginal_entropy(&self) -> f64 {
        if self.hidden_counts.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .hidden_counts
            .iter()
            .map(|c| {
                let n: u64 = c.iter().sum();
                c.iter()
                    .filter(|&&x| x > 0)
                    .map(|&x| {
                        let p = x as f64 / n as f64;
                        -p * p.log2()
                    })
                    .sum::<f64>()
            })
            .sum();
        // Adding 0.0 maps -0.0 to 0.0.
        total / self.hidden_counts.len() as f64 + 0.0
    }
}

pub fn pomrf_run<F: FeatureMap>(
    problem: &mut PomrfProblem<F>,
    w0: WeightVector,
    steps: usize,
    cfg: &PomrfConfig,
) -> Result<PomrfTrace> {
    if steps == 0 {
        return Err(HerdingError::InvalidConfig("a run needs at least one step".into()));
    }
    let space = problem.fmap.space().clone();
    let nv = problem.n_visible;
    let mut hidden_counts: Vec<Vec<u64>> =
        (nv..space.num_vars()).map(|v| vec![0; space.cardinality(v)]).collect();
    let mut w = w0;
    let mut trace = HerdingTrace::new(w.values(), cfg.snapshot_stride);
    let mut positive_sum = vec![0.0; w.dim()];
    let mut imputations = Vec::new();
    for t in 1..=steps {
        let cases = minibatch_cases(problem.num_cases(), cfg.minibatch, t);
        let out = pomrf_step(problem, &mut w, cfg, &cases, t)?;
        for (a, p) in positive_sum.iter_mut().zip(&out.positive) {
            *a += p;
        }
        for z in &out.imputations {
            for (c, &v) in hidden_counts.iter_mut().zip(z) {
                c[v] += 1;
            }
        }
        if cfg.record_imputations {
            imputations.push(out.imputations);
        }
        trace.record(Some(out.joint), &out.negative, &w, out.pct_violated, cfg.snapshot_stride);
    }
    trace.finish(cfg.snapshot_stride);
    Ok(PomrfTrace { trace, positive_sum, imputations, hidden_counts })
}
