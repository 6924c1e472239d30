//! Conditional (discriminative) herding.
//!
//! The model scores a complete case `(x, y, z)` as
//! `x'Wz + y'Bz + theta'z + alpha'y + x'Vy` with `z` in `{-1, +1}^M` and `y`
//! either a one-of-K sign vector or a single `+-1` unit for two classes. The
//! `V` block (direct input-label weights) is what a model without hidden
//! units uses; with scalar labels, no hidden units and no label bias the
//! dynamics are exactly Rosenblatt's perceptron.
//!
//! Given `(x, y)` the hidden units are independent, so both the clamped and
//! the label-and-hidden maximizations are exact: `z_m = +1` iff its field is
//! strictly positive.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{dot, pct_tolerance, HerdingTrace, PctCheck, WeightVector};
use crate::error::{HerdingError, Result};
use crate::par::{self, Exec};

/// Real-valued inputs with integer class labels `0..n_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(HerdingError::DimensionMismatch { expected: inputs.len(), got: labels.len() });
        }
        if n_classes < 2 {
            return Err(HerdingError::InvalidConfig("need at least two classes".into()));
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(HerdingError::DimensionMismatch { expected: d, got: bad.len() });
            }
        }
        if inputs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(HerdingError::InvalidConfig("non-finite input".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(HerdingError::InvalidConfig(format!("label {l} out of range for {n_classes} classes")));
        }
        Ok(LabeledDataset { inputs, labels, n_classes })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// One-of-K sign vector of case `i`: `+1` at the label, `-1` elsewhere.
    pub fn label_vector(&self, i: usize) -> Vec<f64> {
        (0..self.n_classes).map(|k| if k == self.labels[i] { 1.0 } else { -1.0 }).collect()
    }

    /// Shuffles with `seed` and puts the last `test_fraction` of cases in the
    /// test part.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(HerdingError::InvalidConfig("test fraction must lie in [0, 1)".into()));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (tr, te) = idx.split_at(self.len() - n_test);
        Ok((self.subset(tr), self.subset(te)))
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Appends `sqrt(R_max^2 - ||x||^2)` with `R_max` the largest input norm.
/// Returns the augmented data and `R_max`.
pub fn augment_normalization_feature(data: &LabeledDataset) -> (LabeledDataset, f64) {
    let r_max = data.inputs.iter().map(|x| norm(x)).fold(0.0, f64::max);
    (augment_with(data, r_max), r_max)
}

/// Appends the normalization feature for a given `R_max`; inputs longer
/// than `R_max` get 0.
pub fn augment_with(data: &LabeledDataset, r_max: f64) -> LabeledDataset {
    let inputs = data
        .inputs
        .iter()
        .map(|x| {
            let rest = r_max * r_max - dot(x, x);
            let mut y = x.clone();
            y.push(if rest > 0.0 { rest.sqrt() } else { 0.0 });
            y
        })
        .collect();
    LabeledDataset { inputs, labels: data.labels.clone(), n_classes: data.n_classes }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelCoding {
    /// Two classes as a single unit: class 0 is `-1`, class 1 is `+1`.
    Scalar,
    /// One-of-K sign vector.
    OneHot,
}

/// Shape of a conditional model. Parameters are laid out as
/// `[W (n_in x M), B (L x M), theta (M), alpha (L), V (n_in x L)]`, row-major,
/// where `L` is the label-vector length; `alpha` and `V` are optional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondArch {
    pub n_in: usize,
    pub n_classes: usize,
    pub coding: LabelCoding,
    pub hidden: usize,
    pub label_bias: bool,
    pub direct: bool,
}

impl CondArch {
    /// The perceptron: scalar label, no hidden units, features `x y`.
    pub fn perceptron(n_in: usize) -> Self {
        CondArch { n_in, n_classes: 2, coding: LabelCoding::Scalar, hidden: 0, label_bias: false, direct: true }
    }

    /// dRBM with one-of-K labels and label biases.
    pub fn drbm(n_in: usize, n_classes: usize, hidden: usize) -> Self {
        CondArch { n_in, n_classes, coding: LabelCoding::OneHot, hidden, label_bias: true, direct: hidden == 0 }
    }

    pub fn label_len(&self) -> usize {
        match self.coding {
            LabelCoding::Scalar => 1,
            LabelCoding::OneHot => self.n_classes,
        }
    }

    /// `(name, offset, len)` of every parameter block, in layout order.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let (n, m, l) = (self.n_in, self.hidden, self.label_len());
        let sizes = [
            ("W", n * m),
            ("B", l * m),
            ("theta", m),
            ("alpha", if self.label_bias { l } else { 0 }),
            ("V", if self.direct { n * l } else { 0 }),
        ];
        let mut off = 0;
        sizes
            .iter()
            .map(|&(name, len)| {
                let b = (name, off, len);
                off += len;
                b
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.blocks().iter().map(|b| b.2).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(HerdingError::InvalidConfig("need at least two classes".into()));
        }
        if self.coding == LabelCoding::Scalar && self.n_classes != 2 {
            return Err(HerdingError::InvalidConfig("scalar label coding needs exactly two classes".into()));
        }
        if self.dim() == 0 {
            return Err(HerdingError::InvalidConfig("model has no parameters".into()));
        }
        Ok(())
    }

    pub fn label_vector(&self, class: usize) -> Vec<f64> {
        match self.coding {
            LabelCoding::Scalar => vec![if class == 1 { 1.0 } else { -1.0 }],
            LabelCoding::OneHot => (0..self.n_classes).map(|k| if k == class { 1.0 } else { -1.0 }).collect(),
        }
    }

    /// Feature vector of `(x, class, z)` in parameter layout.
    pub fn eval_into(&self, x: &[f64], class: usize, z: &[f64], out: &mut [f64]) {
        let y = self.label_vector(class);
        let (n, m, l) = (self.n_in, self.hidden, y.len());
        let mut o = 0;
        for xj in x.iter().take(n) {
            for zk in z.iter().take(m) {
                out[o] = xj * zk;
                o += 1;
            }
        }
        for yl in &y {
            for zk in z.iter().take(m) {
                out[o] = yl * zk;
                o += 1;
            }
        }
        out[o..o + m].copy_from_slice(&z[..m]);
        o += m;
        if self.label_bias {
            out[o..o + l].copy_from_slice(&y);
            o += l;
        }
        if self.direct {
            for xj in x.iter().take(n) {
                for yl in &y {
                    out[o] = xj * yl;
                    o += 1;
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], class: usize, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, class, z, &mut out);
        out
    }

    /// Exact `argmax_z w . phi(x, class, z)`; ties resolve to `z_m = -1`.
    pub fn best_hidden(&self, w: &[f64], x: &[f64], class: usize) -> (Vec<f64>, f64) {
        let y = self.label_vector(class);
        let m = self.hidden;
        let b = self.blocks();
        let (w_off, b_off, t_off) = (b[0].1, b[1].1, b[2].1);
        let z: Vec<f64> = (0..m)
            .map(|k| {
                let mut f = 0.0;
                for (j, xj) in x.iter().enumerate().take(self.n_in) {
                    f += xj * w[w_off + j * m + k];
                }
                for (l, yl) in y.iter().enumerate() {
                    f += yl * w[b_off + l * m + k];
                }
                f += w[t_off + k];
                if f > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let score = dot(w, &self.eval(x, class, &z));
        (z, score)
    }

    /// Exact maximization over every class (one-hot labels only) and the
    /// hidden units. Ties resolve to the lowest class.
    pub fn best_joint(&self, w: &[f64], x: &[f64]) -> (usize, Vec<f64>, f64) {
        let mut best = (0, Vec::new(), f64::NEG_INFINITY);
        for c in 0..self.n_classes {
            let (z, s) = self.best_hidden(w, x, c);
            if s > best.2 {
                best = (c, z, s);
            }
        }
        best
    }
}

/// `lambda_t = lambda_0 / 2^(floor(updates / halve_every))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBiasSchedule {
    pub lambda0: f64,
    pub halve_every: usize,
}

impl Default for EntropyBiasSchedule {
    fn default() -> Self {
        EntropyBiasSchedule { lambda0: 1.0, halve_every: 500 }
    }
}

impl EntropyBiasSchedule {
    pub fn lambda_at(&self, updates: usize) -> f64 {
        let halvings = (updates / self.halve_every.max(1)).min(1100) as i32;
        self.lambda0 * 0.5f64.powi(halvings)
    }
}

/// Hidden-bias update that favours a uniform hidden marginal:
/// `theta <- theta + eta ((1 - lambda) <z'> - <z*>)`, with `<.>` the
/// minibatch means of the positive and negative hidden states.
pub fn entropy_bias_update(theta: &mut [f64], z_pos_mean: &[f64], z_neg_mean: &[f64], lambda: f64, eta: &[f64]) {
    for (((t, p), n), e) in theta.iter_mut().zip(z_pos_mean).zip(z_neg_mean).zip(eta) {
        *t += e * ((1.0 - lambda) * p - n);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondStepOutcome {
    pub positive_hidden: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    pub negative_hidden: Vec<Vec<f64>>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    /// Cases with `y* != y`.
    pub errors: usize,
    pub pct_dot: f64,
    pub pct_violated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondStepOptions {
    pub pct: PctCheck,
    /// Per-parameter learning rates; `None` means 1.
    pub rates: Option<Vec<f64>>,
    /// `Some(lambda)` applies the entropy-encouraging hidden-bias update.
    pub entropy_lambda: Option<f64>,
    pub exec: Exec,
}

impl Default for CondStepOptions {
    fn default() -> Self {
        CondStepOptions { pct: PctCheck::Count, rates: None, entropy_lambda: None, exec: Exec::Parallel }
    }
}

/// One update on a minibatch given as `(input, class)` pairs.
pub fn cond_step(
    arch: &CondArch,
    w: &mut WeightVector,
    batch: &[(&[f64], usize)],
    opts: &CondStepOptions,
    step: usize,
) -> Result<CondStepOutcome> {
    let k = arch.dim();
    if w.dim() != k {
        return Err(HerdingError::DimensionMismatch { expected: k, got: w.dim() });
    }
    if batch.is_empty() {
        return Err(HerdingError::InvalidConfig("empty minibatch".into()));
    }
    let wv = w.values();
    let per_case = par::map(opts.exec, batch, |&(x, c)| {
        let (zp, _) = arch.best_hidden(wv, x, c);
        let (cs, zn, _) = arch.best_joint(wv, x);
        (arch.eval(x, c, &zp), zp, cs, arch.eval(x, cs, &zn), zn)
    });
    let n = batch.len() as f64;
    let mut positive = vec![0.0; k];
    let mut negative = vec![0.0; k];
    let mut positive_hidden = Vec::with_capacity(batch.len());
    let mut negative_hidden = Vec::with_capacity(batch.len());
    let mut predicted = Vec::with_capacity(batch.len());
    let mut errors = 0;
    for ((fp, zp, cs, fn_, zn), &(_, c)) in per_case.into_iter().zip(batch) {
        for (a, b) in positive.iter_mut().zip(&fp) {
            *a += b;
        }
        for (a, b) in negative.iter_mut().zip(&fn_) {
            *a += b;
        }
        errors += usize::from(cs != c);
        positive_hidden.push(zp);
        negative_hidden.push(zn);
        predicted.push(cs);
    }
    positive.iter_mut().for_each(|p| *p /= n);
    negative.iter_mut().for_each(|p| *p /= n);
    let v: Vec<f64> = positive.iter().zip(&negative).map(|(a, b)| a - b).collect();
    let (pct_dot, pct_violated) = match opts.pct {
        PctCheck::Off => (f64::NAN, false),
        mode => {
            let d = dot(wv, &v);
            let tol = pct_tolerance(wv, &v);
            if d > tol && mode == PctCheck::Fail {
                return Err(HerdingError::PctViolation { step, dot: d, tol });
            }
            (d, d > tol)
        }
    };
    let wm = w.values_mut();
    match &opts.rates {
        None => wm.iter_mut().zip(&v).for_each(|(wi, vi)| *wi += vi),
        Some(r) => wm.iter_mut().zip(&v).zip(r).for_each(|((wi, vi), ri)| *wi += ri * vi),
    }
    if let Some(lambda) = opts.entropy_lambda {
        let (_, t_off, m) = arch.blocks()[2];
        if m > 0 {
            let mean = |zs: &[Vec<f64>]| -> Vec<f64> {
                (0..m).map(|j| zs.iter().map(|z| z[j]).sum::<f64>() / n).collect()
            };
            let (zp, zn) = (mean(&positive_hidden), mean(&negative_hidden));
            let eta: Vec<f64> = match &opts.rates {
                None => vec![1.0; m],
                Some(r) => r[t_off..t_off + m].to_vec(),
            };
            // Undo the plain bias step, then apply the interpolated one.
            for j in 0..m {
                wm[t_off + j] -= eta[j] * v[t_off + j];
            }
            entropy_bias_update(&mut wm[t_off..t_off + m], &zp, &zn, lambda, &eta);
        }
    }
    if let Some(index) = w.first_non_finite() {
        return Err(HerdingError::NonFiniteWeight { step, index });
    }
    Ok(CondStepOutcome { positive_hidden, predicted, negative_hidden, positive, negative, errors, pct_dot, pct_violated })
}

/// Per-test-case label vote counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteAccumulator {
    /// `counts[j][c]`: prediction steps that voted class `c` for case `j`.
    pub counts: Vec<Vec<u64>>,
    pub steps: usize,
}

impl VoteAccumulator {
    pub fn new(cases: usize, n_classes: usize) -> Self {
        VoteAccumulator { counts: vec![vec![0; n_classes]; cases], steps: 0 }
    }

    /// Majority label per case; lowest class on ties.
    pub fn predict(&self) -> Vec<usize> {
        self.counts
            .iter()
            .map(|c| c.iter().enumerate().fold(0, |b, (k, &x)| if x > c[b] { k } else { b }))
            .collect()
    }

    pub fn error_rate(&self, labels: &[usize]) -> f64 {
        let p = self.predict();
        p.iter().zip(labels).filter(|(a, b)| a != b).count() as f64 / labels.len().max(1) as f64
    }
}

/// Adds one vote per test case for the maximizing label under `w`.
pub fn cond_predict_step(arch: &CondArch, w: &[f64], inputs: &[Vec<f64>], votes: &mut VoteAccumulator, exec: Exec) {
    let labels = par::map(exec, inputs, |x| arch.best_joint(w, x).0);
    for (c, l) in votes.counts.iter_mut().zip(labels) {
        c[l] += 1;
    }
    votes.steps += 1;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    /// One herder over all labels.
    Joint,
    /// One scalar-label herder per class; predicts the class with the
    /// largest average vote.
    OneVsAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondConfig {
    pub procedure: Procedure,
    pub hidden: usize,
    /// Scalar label coding for the joint procedure (two classes only).
    pub scalar_labels: bool,
    pub label_bias: bool,
    /// Direct input-label block; `None` enables it exactly when there are no
    /// hidden units.
    pub direct: Option<bool>,
    pub minibatch: usize,
    pub burn_in: usize,
    /// Initial weights are `N(0, (sigma / n)^2)` per block of `n` elements.
    pub sigma: f64,
    /// Learning rates are `eta / n` per block of `n` elements when
    /// `scale_by_block` is set, `eta` otherwise.
    pub eta: f64,
    pub scale_by_block: bool,
    pub entropy_bias: Option<EntropyBiasSchedule>,
    pub seed: u64,
    pub pct: PctCheck,
    pub stop_on_zero_error: bool,
    pub snapshot_stride: usize,
    pub exec: Exec,
}

impl Default for CondConfig {
    fn default() -> Self {
        CondConfig {
            procedure: Procedure::Joint,
            hidden: 20,
            scalar_labels: false,
            label_bias: true,
            direct: None,
            minibatch: 100,
            burn_in: 1000,
            sigma: 1.0,
            eta: 1.0,
            scale_by_block: true,
            entropy_bias: Some(EntropyBiasSchedule::default()),
            seed: 0,
            pct: PctCheck::Count,
            stop_on_zero_error: true,
            snapshot_stride: 100,
            exec: Exec::Parallel,
        }
    }
}

impl CondConfig {
    /// Rosenblatt's perceptron: scalar labels, no hidden units, no bias,
    /// zero initial weights, unit rates, minibatches of one.
    pub fn perceptron() -> Self {
        CondConfig {
            hidden: 0,
            scalar_labels: true,
            label_bias: false,
            direct: Some(true),
            minibatch: 1,
            burn_in: 0,
            sigma: 0.0,
            scale_by_block: false,
            entropy_bias: None,
            ..Default::default()
        }
    }

    fn arch(&self, n_in: usize, n_classes: usize, binary: bool) -> CondArch {
        let scalar = binary || self.scalar_labels;
        CondArch {
            n_in,
            n_classes: if binary { 2 } else { n_classes },
            coding: if scalar { LabelCoding::Scalar } else { LabelCoding::OneHot },
            hidden: self.hidden,
            label_bias: self.label_bias,
            direct: self.direct.unwrap_or(self.hidden == 0),
        }
    }

    /// Per-parameter learning rates for `arch`.
    pub fn rates(&self, arch: &CondArch) -> Vec<f64> {
        let mut r = vec![0.0; arch.dim()];
        for (_, off, len) in arch.blocks() {
            let e = if self.scale_by_block { self.eta / len.max(1) as f64 } else { self.eta };
            r[off..off + len].iter_mut().for_each(|x| *x = e);
        }
        r
    }

    /// Initial weights for `arch`, drawn block by block in layout order.
    pub fn init_weights(&self, arch: &CondArch, rng: &mut ChaCha8Rng) -> Result<WeightVector> {
        let mut w = vec![0.0; arch.dim()];
        for (_, off, len) in arch.blocks() {
            if len == 0 || self.sigma == 0.0 {
                continue;
            }
            let sd = self.sigma / len as f64;
            let d = Normal::new(0.0, sd).map_err(|e| HerdingError::InvalidConfig(e.to_string()))?;
            for x in &mut w[off..off + len] {
                *x = d.sample(rng);
            }
        }
        Ok(WeightVector(w))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason", content = "step")]
pub enum StopReason {
    /// Zero training error over a full pass of minibatches, ending at this
    /// step.
    Converged(usize),
    MaxSteps(usize),
}

/// Record of one herder.
#[derive(Clone, Debug)]
pub struct HerderTrace {
    pub arch: CondArch,
    /// Negative-phase features summed in `running_feature_sum`; weights and
    /// norms as for any run.
    pub trace: HerdingTrace,
    pub positive_sum: Vec<f64>,
    pub errors: Vec<usize>,
    pub rates: Vec<f64>,
}

impl HerderTrace {
    /// Per-parameter `|mean positive - mean negative|`.
    pub fn moment_gaps(&self) -> Vec<f64> {
        let t = self.trace.steps as f64;
        self.positive_sum.iter().zip(&self.trace.running_feature_sum).map(|(p, n)| ((p - n) / t).abs()).collect()
    }

    /// Per-parameter `2 max_t |w_t| / (rate tau)`, the bound on
    /// [`Self::moment_gaps`]; `R` is taken as the largest weight magnitude
    /// of the whole run.
    pub fn moment_bounds(&self) -> Vec<f64> {
        let r = self.trace.max_abs_weight(self.trace.steps);
        let t = self.trace.steps as f64;
        self.rates.iter().map(|e| 2.0 * r / (e * t)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CondRun {
    pub procedure: Procedure,
    pub herders: Vec<HerderTrace>,
    pub final_weights: Vec<WeightVector>,
    /// Votes on the test inputs. For one-vs-all, `counts[j][k]` is the number
    /// of `+1` votes of herder `k`.
    pub votes: VoteAccumulator,
    pub stop: StopReason,
}

impl CondRun {
    pub fn predict(&self) -> Vec<usize> {
        self.votes.predict()
    }

    pub fn test_error(&self, test: &LabeledDataset) -> f64 {
        self.votes.error_rate(test.labels())
    }
}

/// Trains on `train`, voting on `test` after the burn-in. Minibatches of
/// consecutive cases cycle in a fixed order. When no vote was cast (the run
/// stopped inside the burn-in) the final weights cast one.
pub fn cond_run(train: &LabeledDataset, test: &[Vec<f64>], cfg: &CondConfig, steps: usize) -> Result<CondRun> {
    if steps == 0 {
        return Err(HerdingError::InvalidConfig("a run needs at least one step".into()));
    }
    if train.is_empty() {
        return Err(HerdingError::InvalidConfig("empty training set".into()));
    }
    if cfg.minibatch == 0 {
        return Err(HerdingError::InvalidConfig("minibatch size must be positive".into()));
    }
    let n_in = train.input_dim();
    if let Some(x) = test.iter().find(|x| x.len() != n_in) {
        return Err(HerdingError::DimensionMismatch { expected: n_in, got: x.len() });
    }
    let k = train.n_classes();
    let (archs, targets): (Vec<CondArch>, Vec<Vec<usize>>) = match cfg.procedure {
        Procedure::Joint => (vec![cfg.arch(n_in, k, false)], vec![train.labels().to_vec()]),
        Procedure::OneVsAll => (0..k)
            .map(|c| (cfg.arch(n_in, k, true), train.labels().iter().map(|&l| usize::from(l == c)).collect()))
            .unzip(),
    };
    for a in &archs {
        a.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = archs.iter().map(|a| cfg.init_weights(a, &mut rng)).collect::<Result<Vec<_>>>()?;
    let rates: Vec<Vec<f64>> = archs.iter().map(|a| cfg.rates(a)).collect();
    let mut herders: Vec<HerderTrace> = archs
        .iter()
        .zip(&weights)
        .zip(&rates)
        .map(|((a, w), r)| HerderTrace {
            arch: *a,
            trace: HerdingTrace::new(w.values(), cfg.snapshot_stride),
            positive_sum: vec![0.0; a.dim()],
            errors: Vec::new(),
            rates: r.clone(),
        })
        .collect();
    let d = train.len();
    let b = cfg.minibatch.min(d);
    let n_batches = d.div_ceil(b);
    let mut votes = VoteAccumulator::new(test.len(), k);
    let mut clean_run = 0;
    let mut stop = StopReason::MaxSteps(steps);
    let mut plus_votes: Vec<Vec<u64>> = vec![vec![0; k]; test.len()];
    for t in 1..=steps {
        let kb = (t - 1) % n_batches;
        let cases: Vec<usize> = (kb * b..((kb + 1) * b).min(d)).collect();
        let mut step_errors = 0;
        for (h, ((arch, w), tgt)) in archs.iter().zip(weights.iter_mut()).zip(&targets).enumerate() {
            let batch: Vec<(&[f64], usize)> = cases.iter().map(|&i| (train.inputs()[i].as_slice(), tgt[i])).collect();
            let opts = CondStepOptions {
                pct: cfg.pct,
                rates: Some(rates[h].clone()),
                entropy_lambda: cfg.entropy_bias.map(|s| s.lambda_at(t - 1)),
                exec: cfg.exec,
            };
            let out = cond_step(arch, w, &batch, &opts, t)?;
            let rec = &mut herders[h];
            for (a, p) in rec.positive_sum.iter_mut().zip(&out.positive) {
                *a += p;
            }
            rec.errors.push(out.errors);
            rec.trace.record(None, &out.negative, w, out.pct_violated, cfg.snapshot_stride);
            step_errors += out.errors;
        }
        if t > cfg.burn_in {
            vote(&archs, &weights, test, cfg, &mut votes, &mut plus_votes);
        }
        clean_run = if step_errors == 0 { clean_run + 1 } else { 0 };
        if cfg.stop_on_zero_error && clean_run >= n_batches {
            stop = StopReason::Converged(t);
            break;
        }
    }
    if votes.steps == 0 {
        vote(&archs, &weights, test, cfg, &mut votes, &mut plus_votes);
    }
    for h in &mut herders {
        h.trace.finish(cfg.snapshot_stride);
    }
    Ok(CondRun { procedure: cfg.procedure, herders, final_weights: weights, votes, stop })
}

fn vote(
    archs: &[CondArch],
    weights: &[WeightVector],
    test: &[Vec<f64>],
    cfg: &CondConfig,
    votes: &mut VoteAccumulator,
    plus_votes: &mut [Vec<u64>],
) {
    match cfg.procedure {
        Procedure::Joint => cond_predict_step(&archs[0], weights[0].values(), test, votes, cfg.exec),
        Procedure::OneVsAll => {
            for (c, (arch, w)) in archs.iter().zip(weights).enumerate() {
                let mut binary = VoteAccumulator::new(test.len(), 2);
                cond_predict_step(arch, w.values(), test, &mut binary, cfg.exec);
                for (pv, bc) in plus_votes.iter_mut().zip(&binary.counts) {
                    pv[c] += bc[1];
                }
            }
            votes.counts.clone_from_slice(plus_votes);
            votes.steps += 1;
        }
    }
}

/// Two interleaving noisy half-moons ("banana" data), classes alternating.
pub fn banana(n: usize, noise: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let a = rng.random::<f64>() * std::f64::consts::PI;
        let (mut x, mut y) = if c == 0 { (a.cos(), a.sin()) } else { (1.0 - a.cos(), 0.5 - a.sin()) };
        let ex: f64 = StandardNormal.sample(&mut rng);
        let ey: f64 = StandardNormal.sample(&mut rng);
        x += noise * ex;
        y += noise * ey;
        inputs.push(vec![x - 0.5, y - 0.25]);
        labels.push(c);
    }
    LabeledDataset { inputs, labels, n_classes: 2 }
}

/// Linearly separable two-class data: points with a margin around a random
/// hyperplane through the origin.
pub fn separable(n: usize, dim: usize, margin: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nn = norm(&normal);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while inputs.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let s = dot(&x, &normal) / nn;
        if s.abs() >= margin {
            labels.push(usize::from(s > 0.0));
            inputs.push(x);
        }
    }
    LabeledDataset { inputs, labels, n_classes: 2 }
}
