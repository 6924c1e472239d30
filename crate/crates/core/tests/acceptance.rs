//! Acceptance suite. Runs every criterion in order, prints one
//! `[PASS]`/`[FAIL]` line per criterion with its runtime, and exits non-zero
//! when any criterion fails or overruns its time limit.

use std::collections::HashSet;
use std::error::Error;
use std::f64::consts::SQRT_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use herding::cond::{augment_normalization_feature, augment_with, banana, cond_run, separable, CondConfig, CondRun};
use herding::diag::{second_half_excess, subsequence_complexity, subspace_check, torus_rotation_check};
use herding::io::{write_trace_to, StateColumn};
use herding::latent::{pomrf_run, PomrfConfig, PomrfProblem, PomrfTrace, Variant};
use herding::models::{
    batch_means_standard_error, critical_beta, ising_herd_run, random_mrf, swendsen_wang_sample, IsingHerdConfig,
    IsingHerdRun, IsingLattice, IsingMoments, RandomModelSpec, RandomMrf, RbmFeatures,
};
use herding::scalar::{golden_mean, neuron_discrepancy, neuron_run, rabbit_sequence, NeuronConfig};
use herding::scan::{autocorrelation_study, bifurcation_scan, linear_grid, Cascade};
use herding::engine::{Period, PeriodConfig};
use herding::{
    herd_run, Exec, FeatureMap, HerdingTrace, Maximizer, MomentVector, PctCheck, Provenance, State, TableFeatures,
    TraceConfig, WeightVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Outcome = Result<String, Box<dyn Error>>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+).into());
        }
    };
}

fn main() {
    let criteria: [(u32, &str, Option<u64>, fn() -> Outcome); 12] = [
        (1, "rabbit-sequence identity", Some(1), rabbit_identity),
        (2, "discrepancy bounds", Some(10), discrepancy_bounds),
        (3, "moment-matching rate", Some(30), moment_matching_rate),
        (4, "negative autocorrelation", Some(120), negative_autocorrelation),
        (5, "boundedness and PCT", None, boundedness),
        (6, "Sturmian complexity", Some(10), sturmian_complexity),
        (7, "period-doubling bifurcation", Some(120), bifurcation),
        (8, "POMRF moment matching", Some(30), pomrf_moment_matching),
        (9, "conditional herding", Some(120), conditional_herding),
        (10, "Ising self-consistency", Some(300), ising_self_consistency),
        (11, "torus and subspace geometry", Some(10), geometry),
        (12, "determinism", None, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let limit = limit.map(Duration::from_secs);
        let timing = match limit {
            Some(l) => format!("{:.2} s, limit {} s", elapsed.as_secs_f64(), l.as_secs()),
            None => format!("{:.2} s", elapsed.as_secs_f64()),
        };
        let (ok, detail) = match result {
            Ok(Ok(d)) if limit.is_some_and(|l| elapsed > l) => (false, format!("over time limit; {d}")),
            Ok(Ok(d)) => (true, d),
            Ok(Err(e)) => (false, e.to_string()),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!ok);
        println!("[{}] {id:>2} {name} ({timing}): {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ------------------------------------------------------------ shared runs

/// Neuron run packed into a trace so it can be written as CSV.
fn neuron_trace(cfg: &NeuronConfig, steps: usize) -> herding::Result<HerdingTrace> {
    let run = neuron_run(cfg, steps)?;
    let mut trace = HerdingTrace::new(&[cfg.w0], 1);
    for (b, w) in run.bits.iter().zip(&run.weights[1..]) {
        trace.record(Some(State(vec![usize::from(*b)])), &[f64::from(*b)], &WeightVector(vec![*w]), false, 1);
    }
    trace.finish(1);
    Ok(trace)
}

fn rate_model() -> herding::Result<RandomMrf> {
    random_mrf(RandomModelSpec::new(10, 7, 0))
}

fn rate_run(model: &RandomMrf) -> herding::Result<HerdingTrace> {
    let cfg = TraceConfig::default().with_stride(1000).with_pct(PctCheck::Count);
    herd_run(WeightVector::from(&model.moments), &model.moments, &model.features, &mut Maximizer::exact(), 100_000, &cfg)
}

fn bifurcation_model() -> herding::Result<RandomMrf> {
    random_mrf(RandomModelSpec::new(4, 2, 7))
}

fn pomrf_tiny(variant: Variant) -> herding::Result<PomrfTrace> {
    let fmap = RbmFeatures::new(2, 1, true)?;
    let dim = fmap.dim();
    let mut problem = PomrfProblem::new(fmap, 2, vec![vec![1, 1], vec![0, 1]])?;
    let cfg = PomrfConfig { variant, pct: Some(PctCheck::Count), snapshot_stride: 1, ..PomrfConfig::default() };
    pomrf_run(&mut problem, WeightVector::zeros(dim), 10_000, &cfg)
}

fn perceptron_run() -> herding::Result<(herding::cond::LabeledDataset, CondRun)> {
    let data = separable(100, 5, 0.05, 1);
    let cfg = CondConfig { stop_on_zero_error: false, snapshot_stride: 1, ..CondConfig::perceptron() };
    let run = cond_run(&data, &[], &cfg, 1000)?;
    Ok((data, run))
}

fn small_conditional_run() -> herding::Result<CondRun> {
    let data = banana(4, 0.1, 3);
    let cfg = CondConfig {
        hidden: 2,
        minibatch: 4,
        burn_in: 0,
        scale_by_block: false,
        entropy_bias: None,
        stop_on_zero_error: false,
        snapshot_stride: 1,
        ..CondConfig::default()
    };
    cond_run(&data, &[], &cfg, 10_000)
}

fn banana_error(hidden: usize) -> herding::Result<f64> {
    let (train, test) = banana(800, 0.15, 0).split(0.5, 0)?;
    let (train, r_max) = augment_normalization_feature(&train);
    let test = augment_with(&test, r_max);
    let cfg = CondConfig { hidden, burn_in: 100, ..CondConfig::default() };
    Ok(cond_run(&train, test.inputs(), &cfg, 4000)?.test_error(&test))
}

struct IsingOutcome {
    oracle_edge: f64,
    moments: IsingMoments,
    run: IsingHerdRun,
}

fn ising_run() -> herding::Result<IsingOutcome> {
    let lattice = IsingLattice::new(32, 32, true)?;
    let sw = swendsen_wang_sample(&lattice, critical_beta(), 2000, 200, 0)?;
    let moments = IsingMoments::uniform(&lattice, 0.0, sw.edge_moment)?;
    let cfg = IsingHerdConfig { histogram_every: 10, initial_state: Some(sw.last_state), ..IsingHerdConfig::default() };
    let run = ising_herd_run(&lattice, &moments, 10_000, &cfg)?;
    Ok(IsingOutcome { oracle_edge: sw.edge_moment, moments, run })
}

fn torus_model() -> herding::Result<RandomMrf> {
    random_mrf(RandomModelSpec::new(3, 2, 0))
}

fn snapshot_run(fmap: &TableFeatures, moments: &MomentVector) -> herding::Result<HerdingTrace> {
    let cfg = TraceConfig::default().with_stride(1);
    herd_run(WeightVector::from(moments), moments, fmap, &mut Maximizer::exact(), 10_000, &cfg)
}

fn one_hot_model() -> herding::Result<(TableFeatures, MomentVector)> {
    let f = TableFeatures::one_hot(5);
    let m = MomentVector::new(vec![0.1, 0.2, 0.3, 0.15, 0.25], Provenance::Analytic, &f)?;
    Ok((f, m))
}

// ------------------------------------------------------------ oracles

/// Fibonacci word by concatenation: `S_1 = 1`, `S_2 = 10`,
/// `S_n = S_{n-1} S_{n-2}`.
fn fibonacci_word(n: usize) -> Vec<u8> {
    let (mut a, mut b) = (vec![1u8], vec![1u8, 0]);
    while b.len() < n {
        let next = [b.as_slice(), a.as_slice()].concat();
        a = b;
        b = next;
    }
    b.truncate(n);
    b
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}

/// Unit-lag normalized autocorrelation computed from scratch.
fn r1(seq: &[usize], n_states: usize) -> f64 {
    let n = seq.len();
    let mut counts = vec![0usize; n_states];
    for &s in seq {
        counts[s] += 1;
    }
    let p2: f64 = counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum();
    let same = seq.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (n - 1) as f64;
    (same - p2) / (1.0 - p2)
}

/// Temperature map written out directly: `w += phi_bar - E_T[phi]` with a
/// softmax over the rows of `phi`.
fn temperature_step(w: &mut [f64], rows: &[Vec<f64>], target: &[f64], t: f64) {
    let logits: Vec<f64> = rows.iter().map(|r| r.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / t).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = p.iter().sum();
    for (i, wi) in w.iter_mut().enumerate() {
        let e: f64 = rows.iter().zip(&p).map(|(r, pk)| r[i] * pk).sum::<f64>() / z;
        *wi += target[i] - e;
    }
}

/// Smallest period `p <= 1024` confirmed over 100 steps after `burn_in`.
fn oracle_period(rows: &[Vec<f64>], target: &[f64], t: f64, burn_in: usize) -> Option<usize> {
    let mut w = target.to_vec();
    for _ in 0..burn_in {
        temperature_step(&mut w, rows, target, t);
    }
    let mut tail = vec![w.clone()];
    for _ in 1..(1024 + 100) {
        temperature_step(&mut w, rows, target, t);
        tail.push(w.clone());
    }
    (1..=1024).find(|&p| (0..100).all(|i| tail[i].iter().zip(&tail[i + p]).all(|(a, b)| (a - b).abs() < 1e-8)))
}

/// Exact `E[mean over edges of x_a x_b]` by enumerating all spin states.
fn exact_edge_moment(lattice: &IsingLattice, beta: f64) -> f64 {
    let n = lattice.num_nodes();
    let m = lattice.edges().len() as f64;
    let (mut z, mut acc) = (0.0, 0.0);
    for bits in 0u32..(1 << n) {
        let spin = |i: usize| if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
        let e: f64 = lattice.edges().iter().map(|&(a, b)| spin(a) * spin(b)).sum();
        let p = (beta * e).exp();
        z += p;
        acc += p * e / m;
    }
    acc / z
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn csv_bytes(trace: &HerdingTrace, states: StateColumn<'_>) -> herding::Result<Vec<u8>> {
    let mut out = Vec::new();
    write_trace_to(&mut out, trace, states, &[("config", json!({ "steps": trace.steps }))])?;
    Ok(out)
}

// ------------------------------------------------------------ criteria

fn rabbit_identity() -> Outcome {
    let n = 10_000;
    let bits = neuron_run(&NeuronConfig::rabbit(), n)?.bits;
    ensure!(bits == rabbit_sequence(n), "neuron output differs from rabbit_sequence");
    ensure!(bits == fibonacci_word(n), "neuron output differs from the concatenated Fibonacci word");
    Ok(format!("{n} symbols identical"))
}

fn discrepancy_bounds() -> Outcome {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_window, mut worst_centered) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let pi: f64 = rng.random();
        let w0 = pi - rng.random::<f64>();
        let cfg = NeuronConfig::new(pi, w0)?;
        ensure!(cfg.starts_invariant(), "w0 {w0} outside the invariant interval for pi {pi}");
        let bits = neuron_run(&cfg, n)?.bits;
        let mut ones = vec![0usize; n + 1];
        for (i, b) in bits.iter().enumerate() {
            ones[i + 1] = ones[i] + usize::from(*b);
        }
        for j in 0..100 {
            let len = rng.random_range(1..=n);
            let a = rng.random_range(0..=n - len);
            let d = ((ones[a + len] - ones[a]) as f64 - len as f64 * pi).abs();
            if j == 0 {
                ensure!(d == neuron_discrepancy(&bits, pi, a, len)?, "window count disagrees with neuron_discrepancy");
            }
            worst_window = worst_window.max(d);
        }
        let centered = neuron_run(&NeuronConfig::centered(pi)?, n)?.bits;
        let mut count = 0usize;
        for (t, b) in centered.iter().enumerate() {
            count += usize::from(*b);
            worst_centered = worst_centered.max((count as f64 - (t + 1) as f64 * pi).abs());
        }
    }
    ensure!(worst_window <= 1.0 + 1e-12, "window discrepancy {worst_window} exceeds 1");
    ensure!(worst_centered <= 0.5 + 1e-12, "prefix discrepancy {worst_centered} exceeds 1/2 with w0 = pi - 1/2");
    Ok(format!("max window discrepancy {worst_window:.6}, max centered prefix discrepancy {worst_centered:.6}"))
}

fn moment_matching_rate() -> Outcome {
    let model = rate_model()?;
    let trace = rate_run(&model)?;
    let idx = trace.state_indices(&model.features).ok_or("states not enumerable")?;
    let target = model.moments.values();
    let w0 = &trace.initial_weights;
    let k = target.len();
    let mut sum = vec![0.0; k];
    let mut r = inf_norm(w0);
    let mut w = w0.clone();
    let mut violations = 0;
    let mut pts = Vec::new();
    let mut next_log = 1000.0f64;
    for (i, &s) in idx.iter().enumerate() {
        let t = (i + 1) as f64;
        for (a, f) in sum.iter_mut().zip(model.features.row(s)) {
            *a += f;
        }
        for j in 0..k {
            w[j] = w0[j] + t * target[j] - sum[j];
        }
        r = r.max(inf_norm(&w));
        let err: Vec<f64> = sum.iter().zip(target).map(|(a, m)| a / t - m).collect();
        if inf_norm(&err) > 2.0 * r / t {
            violations += 1;
        }
        if t >= next_log.round() {
            pts.push((t.ln(), err.iter().map(|e| e * e).sum::<f64>().sqrt().ln()));
            next_log *= 10f64.powf(1.0 / 20.0);
        }
    }
    let drift = w.iter().zip(&trace.final_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(drift <= 1e-9 * trace.steps as f64, "reconstructed weights drift {drift} from the trace");
    ensure!(violations == 0, "{violations} prefixes exceed 2 max|w|/T");
    let s = slope(&pts);
    ensure!((-1.2..=-0.8).contains(&s), "log-log slope {s:.3} outside [-1.2, -0.8]");
    Ok(format!("bound holds at all {} prefixes; slope over [1e3, 1e5] = {s:.3}", idx.len()))
}

fn negative_autocorrelation() -> Outcome {
    let seeds: Vec<u64> = (0..100).collect();
    let steps = 10_000;
    let study = autocorrelation_study(10, 7, &seeds, steps, 1, Exec::Parallel)?;
    let model = random_mrf(RandomModelSpec::new(10, 7, 0))?;
    let cfg = TraceConfig::default().with_stride(usize::MAX);
    let trace =
        herd_run(WeightVector::from(&model.moments), &model.moments, &model.features, &mut Maximizer::exact(), steps, &cfg)?;
    let own = r1(&trace.state_indices(&model.features).ok_or("states not enumerable")?, 10);
    let lib = study.herding[0][0].ok_or("R(1) undefined for seed 0")?;
    ensure!((own - lib).abs() < 1e-12, "seed 0: R(1) {lib} vs recomputed {own}");
    let mean = study.mean_r(1).ok_or("no defined R(1)")?;
    let q05 = study.surrogate_quantile(0.05).ok_or("no surrogate R(1)")?;
    ensure!(mean < 0.0, "mean R(1) = {mean:.4} is not negative");
    ensure!(mean < q05, "mean R(1) = {mean:.4} is not below the surrogate 5th percentile {q05:.4}");
    Ok(format!("mean R(1) = {mean:.4}, surrogate 5th percentile = {q05:.4}"))
}

fn boundedness() -> Outcome {
    let model = rate_model()?;
    let trace = rate_run(&model)?;
    let violations = trace.pct_violations.len();
    ensure!(violations == 0, "{violations} PCT violations");
    let norms = &trace.weight_norms_l2;
    ensure!(norms.len() == trace.steps + 1, "norm history has {} entries", norms.len());
    let mid = norms.len() / 2;
    let first = norms[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let second = norms[mid..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ensure!(second_half_excess(norms) == second - first, "second_half_excess disagrees with direct maxima");
    ensure!(second <= first + 1e-9, "second-half max {second} exceeds first-half max {first}");
    Ok(format!("0 PCT violations over {} steps; max ||w||_2 first half {first:.4}, second half {second:.4}", trace.steps))
}

fn sturmian_complexity() -> Outcome {
    let n = 100_000;
    for (name, pi) in [("golden mean", golden_mean()), ("sqrt 2 - 1", SQRT_2 - 1.0)] {
        let bits = neuron_run(&NeuronConfig::new(pi, pi)?, n)?.bits;
        let seq: Vec<usize> = bits.iter().map(|&b| usize::from(b)).collect();
        let lib = subsequence_complexity(&seq, 100);
        let mut seen: HashSet<u128> = HashSet::with_capacity(n);
        for l in 1..=100usize {
            seen.clear();
            let mask = if l == 128 { u128::MAX } else { (1u128 << l) - 1 };
            let mut key = 0u128;
            for (i, &b) in bits.iter().enumerate() {
                key = ((key << 1) | u128::from(b)) & mask;
                if i + 1 >= l {
                    seen.insert(key);
                }
            }
            ensure!(seen.len() == l + 1, "{name}: {} distinct words of length {l}", seen.len());
            ensure!(lib[l - 1] == l + 1, "{name}: subsequence_complexity gives M({l}) = {}", lib[l - 1]);
        }
    }
    Ok("M(L) = L + 1 for L = 1..=100 at both rates".into())
}

fn bifurcation() -> Outcome {
    let model = bifurcation_model()?;
    let w0 = WeightVector::from(&model.moments);
    let scan = bifurcation_scan(
        &model.features,
        &model.moments,
        &w0,
        &linear_grid(0.05, 0.5, 200),
        &PeriodConfig::default(),
        Exec::Parallel,
    )?;
    let cascade = Cascade::from_scan(&scan);
    ensure!(cascade.doubles_to_chaos(), "no 1, 2, 4 sequence followed by an aperiodic regime: {:?}", cascade.regimes);
    let start = cascade
        .regimes
        .windows(3)
        .position(|w| w.iter().map(|r| r.0).eq([1, 2, 4].map(Period::Periodic)))
        .ok_or("no consecutive 1, 2, 4 regimes")?;
    let rows = model.features.rows();
    let target = model.moments.values();
    let mut temps = Vec::new();
    for (p, hi, _) in &cascade.regimes[start..start + 3] {
        let Period::Periodic(p) = *p else { unreachable!() };
        let own = oracle_period(rows, target, *hi, 20_000);
        ensure!(own == Some(p), "independent map at T = {hi:.4} gives period {own:?}, scan says {p}");
        temps.push(*hi);
    }
    let t_chaos = cascade.aperiodic_threshold.ok_or("no aperiodic threshold")?;
    let own = oracle_period(rows, target, t_chaos, 100_000);
    ensure!(own.is_none(), "independent map at T = {t_chaos:.4} finds period {own:?} after 1e5 steps");
    Ok(format!(
        "periods 1, 2, 4 at T = {:.4}, {:.4}, {:.4}; no period <= 1024 from T = {t_chaos:.4}",
        temps[0], temps[1], temps[2]
    ))
}

fn pomrf_moment_matching() -> Outcome {
    let mut parts = Vec::new();
    for (name, variant) in [("full", Variant::Full), ("tractable", Variant::Tractable)] {
        let run = pomrf_tiny(variant)?;
        let tau = run.trace.steps as f64;
        let r = run.trace.weight_snapshots.iter().map(|(_, w)| inf_norm(w)).fold(0.0, f64::max);
        ensure!(run.trace.weight_snapshots.len() == run.trace.steps + 1, "{name}: missing weight snapshots");
        let gap = run
            .positive_sum
            .iter()
            .zip(&run.trace.running_feature_sum)
            .map(|(p, q)| ((p - q) / tau).abs())
            .fold(0.0, f64::max);
        let violations = run.trace.pct_violations.len();
        ensure!(violations == 0, "{name}: {violations} PCT violations");
        ensure!(gap <= 2.0 * r / tau, "{name}: gap {gap:e} exceeds 2R/tau = {:e}", 2.0 * r / tau);
        parts.push(format!("{name} gap {gap:.2e} <= {:.2e}", 2.0 * r / tau));
    }
    Ok(format!("{} at tau = 1e4, 0 PCT violations", parts.join(", ")))
}

fn conditional_herding() -> Outcome {
    // (a) Rosenblatt's rule written out: predict sign(w . x) with 0 -> -1,
    // and on a mistake add (y - y_hat) x.
    let (data, run) = perceptron_run()?;
    let snaps = &run.herders[0].trace.weight_snapshots;
    ensure!(snaps.len() == 1001, "expected 1001 weight snapshots, got {}", snaps.len());
    let mut w = vec![0.0f64; data.input_dim()];
    let mut mistakes = 0;
    for t in 1..=1000 {
        let i = (t - 1) % data.len();
        let x = &data.inputs()[i];
        let y = if data.labels()[i] == 1 { 1.0 } else { -1.0 };
        let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let y_hat = if s > 0.0 { 1.0 } else { -1.0 };
        if y_hat != y {
            mistakes += 1;
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj += (y - y_hat) * xj;
            }
        }
        let (st, ws) = &snaps[t];
        ensure!(*st == t, "snapshot {t} is labelled {st}");
        let same = ws.len() == w.len() && ws.iter().zip(&w).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "weights differ from the hand-coded perceptron at update {t}");
    }

    // (b) Moment gap bound on a 4-case, 2-hidden-unit model.
    let small = small_conditional_run()?;
    let h = &small.herders[0];
    let tau = h.trace.steps as f64;
    ensure!(h.rates.iter().all(|&e| e == 1.0), "unit rates expected");
    let r = h.trace.weight_snapshots.iter().map(|(_, w)| inf_norm(w)).fold(0.0, f64::max);
    let gap = h.positive_sum.iter().zip(&h.trace.running_feature_sum).map(|(p, q)| ((p - q) / tau).abs()).fold(0.0, f64::max);
    ensure!(gap <= 2.0 * r / tau, "4-case gap {gap:e} exceeds 2R/tau = {:e}", 2.0 * r / tau);

    // (c) Hidden units help on banana data.
    let (e20, e0) = (banana_error(20)?, banana_error(0)?);
    ensure!(e20 < e0, "20 hidden units: test error {e20:.4}, 0 hidden units: {e0:.4}");
    Ok(format!(
        "(a) 1000 updates bit-identical ({mistakes} mistakes); (b) gap {gap:.2e} <= {:.2e}; (c) test error {e20:.4} (20 hidden) < {e0:.4} (0 hidden)",
        2.0 * r / tau
    ))
}

fn ising_self_consistency() -> Outcome {
    let beta = 0.3;
    let mut checks = Vec::new();
    for periodic in [false, true] {
        let small = IsingLattice::new(3, 3, periodic)?;
        let exact = exact_edge_moment(&small, beta);
        let sw = swendsen_wang_sample(&small, beta, 20_000, 1000, 0)?;
        let se = batch_means_standard_error(&sw.edge_series, 20).ok_or("too few sweeps for batch means")?;
        let z = (sw.edge_moment - exact).abs() / se;
        ensure!(z <= 3.0, "3x3 (periodic: {periodic}): SW {:.5} vs exact {exact:.5}, {z:.2} SE", sw.edge_moment);
        checks.push(format!("{:.2} SE", z));
    }

    let out = ising_run()?;
    let trace = &out.run.trace;
    let violations = trace.pct_violations.len();
    ensure!(violations == 0, "{violations} PCT violations; the moment claim needs none");
    let t = trace.steps as f64;
    let bound = 2.0 * trace.max_abs_weight(trace.steps) / t;
    let edge_err = (out.run.mean_edge_average() - out.oracle_edge).abs();
    let max_err = out.run.max_moment_error(&out.moments);
    ensure!(max_err <= bound, "max moment error {max_err:e} exceeds 2R/T = {bound:e}");
    let slope = out.run.histogram.log_log_slope().ok_or("component-size histogram too sparse for a slope")?;
    Ok(format!(
        "3x3 oracle within {} of exact (free, periodic); 32x32 edge error {edge_err:.2e}, max error {max_err:.2e} <= {bound:.2e}, 0 PCT violations; size-histogram slope {slope:.3}",
        checks.join(" and ")
    ))
}

fn geometry() -> Outcome {
    let model = torus_model()?;
    let trace = snapshot_run(&model.features, &model.moments)?;
    let lib = torus_rotation_check(&trace.weight_snapshots, &model.features, &model.moments)?.max_deviation;

    // Lattice coordinates by Cramer's rule on the 2x2 basis.
    let rows = model.features.rows();
    let b = [[rows[1][0] - rows[0][0], rows[2][0] - rows[0][0]], [rows[1][1] - rows[0][1], rows[2][1] - rows[0][1]]];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let solve = |v: [f64; 2]| [(v[0] * b[1][1] - b[0][1] * v[1]) / det, (b[0][0] * v[1] - b[1][0] * v[0]) / det];
    let m = model.moments.values();
    let rot = solve([m[0] - rows[0][0], m[1] - rows[0][1]]);
    let w0 = &trace.weight_snapshots[0].1;
    let mut own = 0.0f64;
    for (t, w) in &trace.weight_snapshots {
        let c = solve([w[0] - w0[0], w[1] - w0[1]]);
        for i in 0..2 {
            let x = c[i] - *t as f64 * rot[i];
            own = own.max((x - x.round()).abs());
        }
    }
    ensure!(lib < 1e-9, "torus deviation {lib:e}");
    ensure!(own < 1e-9, "independently computed torus deviation {own:e}");

    let (f, moments) = one_hot_model()?;
    let trace = snapshot_run(&f, &moments)?;
    let residual = subspace_check(&trace.weight_snapshots, &f)?;
    let w0 = &trace.weight_snapshots[0].1;
    let s0: f64 = w0.iter().sum();
    let own_residual = trace
        .weight_snapshots
        .iter()
        .map(|(_, w)| (w.iter().sum::<f64>() - s0).abs() / (w.len() as f64).sqrt())
        .fold(0.0, f64::max);
    ensure!(residual < 1e-9, "subspace residual {residual:e}");
    ensure!(own_residual < 1e-9, "independently computed subspace residual {own_residual:e}");
    Ok(format!("torus deviation {lib:.1e} over 1e4 steps; 1-of-5 subspace residual {residual:.1e}"))
}

fn determinism() -> Outcome {
    let traces: [(&str, fn() -> herding::Result<Vec<u8>>); 10] = [
        ("rabbit neuron", || csv_bytes(&neuron_trace(&NeuronConfig::rabbit(), 10_000)?, StateColumn::Assignments)),
        ("sqrt 2 neuron", || {
            let pi = SQRT_2 - 1.0;
            csv_bytes(&neuron_trace(&NeuronConfig::new(pi, pi)?, 100_000)?, StateColumn::Assignments)
        }),
        ("D=10 K=7 herding", || csv_bytes(&rate_run(&rate_model()?)?, StateColumn::Assignments)),
        ("full POMRF", || csv_bytes(&pomrf_tiny(Variant::Full)?.trace, StateColumn::Assignments)),
        ("tractable POMRF", || csv_bytes(&pomrf_tiny(Variant::Tractable)?.trace, StateColumn::Assignments)),
        ("perceptron", || csv_bytes(&perceptron_run()?.1.herders[0].trace, StateColumn::Labels(&[]))),
        ("4-case conditional", || csv_bytes(&small_conditional_run()?.herders[0].trace, StateColumn::Labels(&[]))),
        ("32x32 Ising", || csv_bytes(&ising_run()?.run.trace, StateColumn::Assignments)),
        ("torus", || {
            let m = torus_model()?;
            csv_bytes(&snapshot_run(&m.features, &m.moments)?, StateColumn::Assignments)
        }),
        ("1-of-5", || {
            let (f, m) = one_hot_model()?;
            csv_bytes(&snapshot_run(&f, &m)?, StateColumn::Assignments)
        }),
    ];
    let mut bytes = 0;
    for (name, make) in traces {
        let (a, b) = (make()?, make()?);
        ensure!(a == b, "{name}: trace CSVs differ between runs");
        bytes += a.len();
    }

    let seeds: Vec<u64> = (0..100).collect();
    let par = autocorrelation_study(10, 7, &seeds, 10_000, 1, Exec::Parallel)?;
    let seq = autocorrelation_study(10, 7, &seeds, 10_000, 1, Exec::Sequential)?;
    ensure!(serde_json::to_vec(&par)? == serde_json::to_vec(&seq)?, "autocorrelation study depends on execution mode");
    let model = bifurcation_model()?;
    let scan = |exec| {
        bifurcation_scan(
            &model.features,
            &model.moments,
            &WeightVector::from(&model.moments),
            &linear_grid(0.05, 0.5, 200),
            &PeriodConfig::default(),
            exec,
        )
    };
    ensure!(
        serde_json::to_vec(&scan(Exec::Parallel)?)? == serde_json::to_vec(&scan(Exec::Sequential)?)?,
        "bifurcation scan depends on execution mode"
    );
    Ok(format!("10 trace CSVs ({bytes} bytes) identical on rerun; study and scan identical across execution modes"))
}
