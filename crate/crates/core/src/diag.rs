//! Diagnostics over finished traces.
//!
//! Everything here is a pure function of its inputs: running a diagnostic
//! twice on the same trace gives the same bits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{dot, pct_tolerance, FeatureMap, HerdingTrace, MomentVector, Period, TableFeatures};
use crate::error::{HerdingError, Result};

/// Slope of the least-squares line through `(x, y)` points.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Distinct integers in `1..=t_max`, roughly `per_decade` per factor of 10,
/// always including 1 and `t_max`.
pub fn log_spaced(t_max: usize, per_decade: usize) -> Vec<usize> {
    if t_max == 0 {
        return Vec::new();
    }
    let mut out = vec![1];
    let ratio = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut x = 1.0f64;
    loop {
        x *= ratio;
        let t = x.round() as usize;
        if t >= t_max {
            break;
        }
        if t > *out.last().expect("non-empty") {
            out.push(t);
        }
    }
    if *out.last().expect("non-empty") != t_max {
        out.push(t_max);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentErrorPoint {
    pub t: usize,
    /// `||phi_bar - (1/T) sum_t phi(s_t)||_2`.
    pub l2: f64,
    /// Largest per-feature absolute error.
    pub max_abs: f64,
    /// `2 max_{s <= T} ||w_s||_inf / T`.
    pub bound: f64,
}

impl MomentErrorPoint {
    pub fn within_bound(&self) -> bool {
        self.max_abs <= self.bound * (1.0 + 1e-12) + 1e-15
    }
}

/// Moment error at log-spaced prefixes (50 per decade).
///
/// Uses the stored samples when present. Otherwise falls back to the weight
/// snapshots and the identity `mean phi = phi_bar - (w_T - w_0) / T`.
pub fn moment_error<F: FeatureMap + ?Sized>(
    trace: &HerdingTrace,
    moments: &MomentVector,
    fmap: &F,
) -> Result<Vec<MomentErrorPoint>> {
    if trace.steps == 0 {
        return Err(HerdingError::InvalidConfig("empty trace".into()));
    }
    let target = moments.values();
    let k = target.len();
    let point = |t: usize, mean: &[f64]| {
        let mut l2 = 0.0;
        let mut max_abs = 0.0f64;
        for (m, g) in mean.iter().zip(target) {
            let e = g - m;
            l2 += e * e;
            max_abs = max_abs.max(e.abs());
        }
        MomentErrorPoint { t, l2: l2.sqrt(), max_abs, bound: 2.0 * trace.max_abs_weight(t) / t as f64 }
    };
    let mut out = Vec::new();
    if trace.samples.len() == trace.steps {
        let prefixes = log_spaced(trace.steps, 50);
        let mut acc = vec![0.0; k];
        let mut buf = vec![0.0; k];
        let mut next = 0;
        for (i, s) in trace.samples.iter().enumerate() {
            fmap.eval_into(s.values(), &mut buf);
            for (a, f) in acc.iter_mut().zip(&buf) {
                *a += f;
            }
            let t = i + 1;
            if prefixes.get(next) == Some(&t) {
                let mean: Vec<f64> = acc.iter().map(|a| a / t as f64).collect();
                out.push(point(t, &mean));
                next += 1;
            }
        }
    } else {
        let w0 = &trace.initial_weights;
        for (t, w) in trace.weight_snapshots.iter().filter(|(t, _)| *t > 0) {
            let mean: Vec<f64> =
                target.iter().zip(w).zip(w0).map(|((g, wt), w0)| g - (wt - w0) / *t as f64).collect();
            out.push(point(*t, &mean));
        }
    }
    Ok(out)
}

/// Log-log slope of the L2 error over prefixes in `[t_lo, t_hi]`.
pub fn error_slope(curve: &[MomentErrorPoint], t_lo: usize, t_hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|p| p.t >= t_lo && p.t <= t_hi && p.l2 > 0.0)
        .map(|p| ((p.t as f64).ln(), p.l2.ln()))
        .collect();
    (pts.len() >= 2).then(|| least_squares_slope(&pts))
}

/// Normalized autocorrelation of a discrete sequence,
///
/// `R(t) = [(1/(T-t)) sum_tau I[s_tau = s_{tau+t}] - sum_x P(x)^2] / (1 - sum_x P(x)^2)`
///
/// with `P` the empirical distribution of the whole sequence. Entries are
/// `None` when the denominator vanishes (a constant sequence) or no pairs
/// exist at that lag.
pub fn autocorrelation(seq: &[usize], t_max: usize) -> Vec<Option<f64>> {
    let n = seq.len();
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for &s in seq {
        *counts.entry(s).or_default() += 1;
    }
    let p2: f64 = counts.values().map(|&c| (c as f64 / n as f64).powi(2)).sum();
    let denom = 1.0 - p2;
    (0..=t_max)
        .map(|t| {
            if n == 0 || t >= n || denom <= 0.0 {
                return None;
            }
            let hits = seq.iter().zip(&seq[t..]).filter(|(a, b)| a == b).count();
            Some((hits as f64 / (n - t) as f64 - p2) / denom)
        })
        .collect()
}

/// Number of distinct length-`L` windows for `L = 1..=l_max` (element
/// `L - 1` of the result).
///
/// Window starts are sorted by their suffix truncated to `l_max`; distinct
/// windows of each length are then counted from running minima of adjacent
/// common-prefix lengths.
pub fn subsequence_complexity(seq: &[usize], l_max: usize) -> Vec<usize> {
    let n = seq.len();
    if n == 0 || l_max == 0 {
        return vec![0; l_max];
    }
    let key = |i: usize| &seq[i..(i + l_max).min(n)];
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by(|&a, &b| key(a).cmp(key(b)));
    let lcp: Vec<usize> = starts
        .windows(2)
        .map(|w| key(w[0]).iter().zip(key(w[1])).take_while(|(a, b)| a == b).count())
        .collect();
    let mut out = Vec::with_capacity(l_max);
    for len in 1..=l_max {
        let mut distinct = 0;
        let mut run_min = usize::MAX;
        let mut seen_valid = false;
        for (pos, &s) in starts.iter().enumerate() {
            if pos > 0 {
                run_min = run_min.min(lcp[pos - 1]);
            }
            if s + len > n {
                continue;
            }
            if !seen_valid || run_min < len {
                distinct += 1;
            }
            seen_valid = true;
            run_min = usize::MAX;
        }
        out.push(distinct);
    }
    out
}

/// Log-log slope of `M(L)` over `L` in `[l_lo, l_hi]`.
pub fn complexity_growth_exponent(curve: &[usize], l_lo: usize, l_hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .map(|(i, &m)| (i + 1, m))
        .filter(|&(l, m)| l >= l_lo && l <= l_hi && m > 0)
        .map(|(l, m)| ((l as f64).ln(), (m as f64).ln()))
        .collect();
    (pts.len() >= 2).then(|| least_squares_slope(&pts))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum PctStatus {
    Ok,
    Violation { dot: f64, tol: f64 },
}

/// Classifies one update `w . v` against the relative tolerance.
pub fn pct_status(w: &[f64], v: &[f64]) -> PctStatus {
    let d = dot(w, v);
    let tol = pct_tolerance(w, v);
    if d > tol {
        PctStatus::Violation { dot: d, tol }
    } else {
        PctStatus::Ok
    }
}

/// Running tally of PCT checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PctMonitor {
    pub checked: usize,
    pub violations: Vec<usize>,
}

impl PctMonitor {
    pub fn observe(&mut self, step: usize, w: &[f64], v: &[f64]) -> PctStatus {
        self.checked += 1;
        let s = pct_status(w, v);
        if matches!(s, PctStatus::Violation { .. }) {
            self.violations.push(step);
        }
        s
    }
}

/// How far the second half of a norm sequence rises above the first half:
/// `max(second half) - max(first half)`.
pub fn second_half_excess(norms: &[f64]) -> f64 {
    let mid = norms.len() / 2;
    let first = norms[..mid].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let second = norms[mid..].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    second - first
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusReport {
    /// Per-step rotation `B^{-1} (phi_bar - phi(x_0))`.
    pub rotation: Vec<f64>,
    /// Largest distance to the nearest integer of any lattice increment
    /// after removing the rotation.
    pub max_deviation: f64,
    /// Fractional lattice coordinates of `w_t - w_0` at every snapshot.
    pub torus_points: Vec<Vec<f64>>,
}

/// Checks that the weights move as a rotation of the torus `R^K / Z^K`
/// spanned by `phi(x_d) - phi(x_0)`, `d = 1..=K`.
///
/// Needs exactly `K + 1` states with affinely independent features. Works on
/// any snapshot stride: between snapshots `a` and `b`, the lattice
/// coordinates must advance by `(b - a)` rotations plus an integer vector.
pub fn torus_rotation_check(
    snapshots: &[(usize, Vec<f64>)],
    fmap: &TableFeatures,
    moments: &MomentVector,
) -> Result<TorusReport> {
    let k = fmap.dim();
    if fmap.num_states() != k + 1 {
        return Err(HerdingError::InvalidConfig(format!(
            "torus check needs {} states for {} features, got {}",
            k + 1,
            k,
            fmap.num_states()
        )));
    }
    let phi0 = fmap.row(0);
    let basis = DMatrix::from_fn(k, k, |i, j| fmap.row(j + 1)[i] - phi0[i]);
    let sv = basis.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(HerdingError::SingularBasis);
    }
    let lu = basis.lu();
    let solve = |v: Vec<f64>| -> Result<Vec<f64>> {
        lu.solve(&DVector::from_vec(v)).map(|x| x.as_slice().to_vec()).ok_or(HerdingError::SingularBasis)
    };
    let rotation = solve(moments.values().iter().zip(phi0).map(|(m, p)| m - p).collect())?;
    let Some((_, w0)) = snapshots.first() else {
        return Ok(TorusReport { rotation, max_deviation: 0.0, torus_points: Vec::new() });
    };
    let coords: Vec<(usize, Vec<f64>)> = snapshots
        .iter()
        .map(|(t, w)| Ok((*t, solve(w.iter().zip(w0).map(|(a, b)| a - b).collect())?)))
        .collect::<Result<_>>()?;
    let mut max_deviation = 0.0f64;
    for pair in coords.windows(2) {
        let (ta, ca) = &pair[0];
        let (tb, cb) = &pair[1];
        let dt = (tb - ta) as f64;
        for i in 0..k {
            let x = cb[i] - ca[i] - dt * rotation[i];
            max_deviation = max_deviation.max((x - x.round()).abs());
        }
    }
    let torus_points = coords.into_iter().map(|(_, c)| c.iter().map(|x| x - x.floor()).collect()).collect();
    Ok(TorusReport { rotation, max_deviation, torus_points })
}

/// Largest distance between `w_t - w_0` and the span of
/// `{phi(x) - phi(x_0)}` over all snapshots.
pub fn subspace_check<F: FeatureMap + ?Sized>(snapshots: &[(usize, Vec<f64>)], fmap: &F) -> Result<f64> {
    let k = fmap.dim();
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    let mut phi0: Option<Vec<f64>> = None;
    fmap.space().for_each_state(|_, s| {
        let f = fmap.eval(s);
        match &phi0 {
            None => phi0 = Some(f),
            Some(p) => diffs.push(f.iter().zip(p).map(|(a, b)| a - b).collect()),
        }
    })?;
    let Some((_, w0)) = snapshots.first() else {
        return Ok(0.0);
    };
    let basis: Vec<DVector<f64>> = if diffs.is_empty() {
        Vec::new()
    } else {
        let m = DMatrix::from_fn(k, diffs.len(), |i, j| diffs[j][i]);
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let tol = smax * 1e-10 * (k.max(diffs.len()) as f64);
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > tol)
            .map(|(i, _)| u.column(i).into_owned())
            .collect()
    };
    let mut worst = 0.0f64;
    for (_, w) in snapshots {
        let mut r = DVector::from_iterator(k, w.iter().zip(w0).map(|(a, b)| a - b));
        for b in &basis {
            let c = b.dot(&r);
            r -= b * c;
        }
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Largest change of `sum_i w_i` relative to the first snapshot.
pub fn weight_sum_drift(snapshots: &[(usize, Vec<f64>)]) -> f64 {
    let Some((_, w0)) = snapshots.first() else {
        return 0.0;
    };
    let s0: f64 = w0.iter().sum();
    snapshots.iter().map(|(_, w)| (w.iter().sum::<f64>() - s0).abs()).fold(0.0, f64::max)
}

/// Weight points recorded at or after `burn_in`.
pub fn attractor_record(snapshots: &[(usize, Vec<f64>)], burn_in: usize) -> Vec<Vec<f64>> {
    snapshots.iter().filter(|(t, _)| *t >= burn_in).map(|(_, w)| w.clone()).collect()
}

/// Greedy clustering: a point joins the first representative within `tol`
/// in the max norm, otherwise it becomes a new representative.
pub fn count_distinct_points(points: &[Vec<f64>], tol: f64) -> usize {
    let mut reps: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        let near = reps.iter().any(|r| r.iter().zip(p).all(|(a, b)| (a - b).abs() < tol));
        if !near {
            reps.push(p);
        }
    }
    reps.len()
}

/// Largest Euclidean distance between two points of the cloud.
pub fn point_cloud_diameter(points: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PctSummary {
    pub violations: usize,
    pub steps: Vec<usize>,
}

/// Everything `diagnose` computes for one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagReport {
    pub steps: usize,
    pub moment_error_curve: Vec<MomentErrorPoint>,
    pub error_slope: Option<f64>,
    #[serde(rename = "R")]
    pub autocorr: Vec<Option<f64>>,
    /// `(L, M(L))`.
    pub complexity_curve: Vec<(usize, usize)>,
    pub complexity_exponent: Option<f64>,
    pub pct_summary: PctSummary,
    /// `(t, ||w_t||_2)` at log-spaced steps.
    pub weight_norm_curve: Vec<(usize, f64)>,
    pub max_weight_norm: f64,
    /// `max_t ||w_t||_2 - ||w_0||_2`.
    pub norm_growth: f64,
    pub period: Option<Period>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagOptions {
    pub t_max: usize,
    pub l_max: usize,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions { t_max: 20, l_max: 20 }
    }
}

/// Runs every trace-level diagnostic. Sequence statistics need the samples
/// of an enumerable space; they are left empty otherwise.
pub fn diagnose<F: FeatureMap + ?Sized>(
    trace: &HerdingTrace,
    moments: &MomentVector,
    fmap: &F,
    opts: &DiagOptions,
) -> Result<DiagReport> {
    let curve = moment_error(trace, moments, fmap)?;
    let slope = error_slope(&curve, (trace.steps / 100).max(1), trace.steps);
    let seq = if trace.samples.len() == trace.steps { trace.state_indices(fmap) } else { None };
    let (autocorr, complexity_curve) = match &seq {
        Some(s) => {
            let m = subsequence_complexity(s, opts.l_max.min(s.len()));
            (autocorrelation(s, opts.t_max), m.into_iter().enumerate().map(|(i, m)| (i + 1, m)).collect())
        }
        None => (Vec::new(), Vec::new()),
    };
    let m_only: Vec<usize> = complexity_curve.iter().map(|p: &(usize, usize)| p.1).collect();
    let complexity_exponent = complexity_growth_exponent(&m_only, (opts.l_max / 4).max(1), opts.l_max);
    let weight_norm_curve = log_spaced(trace.steps, 20).into_iter().map(|t| (t, trace.weight_norms_l2[t])).collect();
    let w0 = trace.weight_norms_l2[0];
    Ok(DiagReport {
        steps: trace.steps,
        moment_error_curve: curve,
        error_slope: slope,
        autocorr,
        complexity_curve,
        complexity_exponent,
        pct_summary: PctSummary { violations: trace.pct_violations.len(), steps: trace.pct_violations.clone() },
        weight_norm_curve,
        max_weight_norm: trace.max_weight_norm,
        norm_growth: trace.max_weight_norm - w0,
        period: None,
    })
}
