//! One function per subcommand. Each resolves its config, runs, writes its
//! outputs and returns the one-line summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use herding::cond::{augment_normalization_feature, augment_with, cond_run, CondConfig, LabeledDataset};
use herding::diag::{diagnose, DiagOptions};
use herding::engine::{PeriodConfig, StepOptions};
use herding::io::{self, Dataset, StateColumn};
use herding::latent::{pomrf_run, PomrfConfig, PomrfProblem, Search, Variant};
use herding::models::{
    batch_means_standard_error, critical_beta, ising_herd_run, swendsen_wang_sample, IsingHerdConfig, IsingLattice,
    IsingMoments, RbmFeatures,
};
use herding::scalar::{neuron_discrepancy, neuron_run, NeuronConfig};
use herding::scan::{bifurcation_scan, linear_grid, Cascade};
use herding::{
    herd_run, Exec, FeatureMap, HerdingTrace, Maximizer, MaximizerKind, MomentVector, PctCheck, Provenance, State,
    TableFeatures, TraceConfig, WeightVector,
};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};

use crate::config::{input_err, merge, parse, resolve, take_keys, CliError, CliResult};
use crate::spec::{parse_grid, parse_list, parse_model, parse_neuron_w0, parse_rate, parse_size, TableModel};

fn true_or_null<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
    if *b {
        s.serialize_bool(true)
    } else {
        s.serialize_none()
    }
}

fn false_or_null<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
    if *b {
        s.serialize_bool(false)
    } else {
        s.serialize_none()
    }
}

/// Parses a value by its serde (kebab-case) name.
fn serde_name<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn pct_mode(strict: bool, maxer: &Maximizer) -> PctCheck {
    if strict {
        PctCheck::Fail
    } else {
        PctCheck::default_for(maxer)
    }
}

fn model_meta(features: &TableFeatures, moments: &MomentVector) -> Value {
    json!({ "features": features.rows(), "moments": moments.values() })
}

fn write_trace(path: &Option<String>, trace: &HerdingTrace, states: StateColumn<'_>, meta: &[(&str, Value)]) -> CliResult<()> {
    if let Some(p) = path {
        let mut all = meta.to_vec();
        all.push(("pct_violations", json!(trace.pct_violations)));
        io::write_trace(p, trace, states, &all)?;
    }
    Ok(())
}

fn write_report(path: &Option<String>, report: &impl Serialize) -> CliResult<()> {
    if let Some(p) = path {
        io::write_json(p, report)?;
    }
    Ok(())
}

fn max_moment_error(trace: &HerdingTrace, moments: &[f64]) -> f64 {
    let t = trace.steps as f64;
    trace.running_feature_sum.iter().zip(moments).map(|(s, m)| (s / t - m).abs()).fold(0.0, f64::max)
}

fn summary(name: &str, trace: &HerdingTrace, moment_error: f64, extra: &str) -> String {
    format!(
        "{name}: steps={} moment_error={moment_error:.3e} pct_violations={} max_weight_norm={:.6}{extra}",
        trace.steps,
        trace.pct_violations.len(),
        trace.max_weight_norm
    )
}

fn load_moments(model: &TableModel, path: &Option<String>) -> CliResult<MomentVector> {
    match path {
        None => Ok(model.moments.clone()),
        Some(p) => {
            let (_, values) = io::read_moments(p).map_err(input_err("moments file"))?;
            Ok(MomentVector::new(values, Provenance::DataAverage, &model.features)?)
        }
    }
}

fn initial_weights(spec: &str, moments: &MomentVector) -> CliResult<WeightVector> {
    let w = match spec {
        "phibar" => WeightVector::from(moments),
        "zero" => WeightVector::zeros(moments.dim()),
        list => WeightVector(parse_list(list)?),
    };
    if w.dim() != moments.dim() {
        return Err(CliError::config(format!("w0 has {} components, model has {}", w.dim(), moments.dim())));
    }
    Ok(w)
}

// ---------------------------------------------------------------- herd

#[derive(Args, Serialize)]
pub struct HerdArgs {
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `random:D=..,K=..,seed=..[,scale=..]` or `one-hot:D=..`.
    #[arg(long)]
    pub model: Option<String>,
    /// Moments CSV overriding the model's own.
    #[arg(long)]
    pub moments: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// exact, coordinate, persistent or data-initialized.
    #[arg(long)]
    pub maximizer: Option<MaximizerKind>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// `phibar`, `zero` or a comma-separated vector.
    #[arg(long)]
    pub w0: Option<String>,
    #[arg(long = "stride")]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    #[serde(serialize_with = "true_or_null")]
    pub strict_pct: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HerdConfig {
    pub model: String,
    pub moments: Option<String>,
    pub steps: usize,
    pub maximizer: MaximizerKind,
    pub max_sweeps: usize,
    pub w0: String,
    pub snapshot_stride: usize,
    pub strict_pct: bool,
    pub out: Option<String>,
    pub report: Option<String>,
    pub t_max: usize,
    pub l_max: usize,
}

impl Default for HerdConfig {
    fn default() -> Self {
        HerdConfig {
            model: "random:D=10,K=7,seed=0".into(),
            moments: None,
            steps: 10_000,
            maximizer: MaximizerKind::Exact,
            max_sweeps: 100,
            w0: "phibar".into(),
            snapshot_stride: 100,
            strict_pct: false,
            out: None,
            report: None,
            t_max: 20,
            l_max: 20,
        }
    }
}

pub fn herd(args: HerdArgs) -> CliResult<String> {
    let (cfg, resolved): (HerdConfig, _) = resolve(HerdConfig::default(), args.config.as_deref(), &args)?;
    let model = parse_model(&cfg.model)?;
    let moments = load_moments(&model, &cfg.moments)?;
    let w0 = initial_weights(&cfg.w0, &moments)?;
    let mut maxer = Maximizer::new(cfg.maximizer, cfg.max_sweeps);
    let tcfg = TraceConfig {
        snapshot_stride: cfg.snapshot_stride,
        record_samples: true,
        step: StepOptions { pct: Some(pct_mode(cfg.strict_pct, &maxer)), rates: None },
    };
    let trace = herd_run(w0, &moments, &model.features, &mut maxer, cfg.steps, &tcfg)?;
    let labels = index_labels(&trace, &model.features);
    write_trace(
        &cfg.out,
        &trace,
        StateColumn::Labels(&labels),
        &[("config", resolved), ("model", model_meta(&model.features, &moments))],
    )?;
    if cfg.report.is_some() {
        let rep = diagnose(&trace, &moments, &model.features, &DiagOptions { t_max: cfg.t_max, l_max: cfg.l_max })?;
        write_report(&cfg.report, &rep)?;
    }
    Ok(summary("herd", &trace, max_moment_error(&trace, moments.values()), ""))
}

fn index_labels(trace: &HerdingTrace, fmap: &TableFeatures) -> Vec<String> {
    trace.state_indices(fmap).unwrap_or_default().iter().map(usize::to_string).collect()
}

// ---------------------------------------------------------------- neuron

#[derive(Args, Serialize)]
pub struct NeuronArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Firing rate: `golden`, `sqrt2` or a number in [0, 1].
    #[arg(long)]
    pub pi: Option<String>,
    /// `pi`, `rabbit` (2 pi - 1), `centered` (pi - 1/2) or a number.
    #[arg(long)]
    pub w0: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "stride")]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronCliConfig {
    pub pi: String,
    pub w0: String,
    pub steps: usize,
    pub snapshot_stride: usize,
    pub out: Option<String>,
    pub report: Option<String>,
}

impl Default for NeuronCliConfig {
    fn default() -> Self {
        NeuronCliConfig { pi: "golden".into(), w0: "pi".into(), steps: 1000, snapshot_stride: 1, out: None, report: None }
    }
}

/// Bit sequences as a herding trace over the features `0` and `1`.
fn neuron_model(pi: f64) -> CliResult<TableModel> {
    let features = TableFeatures::new(vec![vec![0.0], vec![1.0]])?;
    let moments = MomentVector::new(vec![pi], Provenance::Analytic, &features)?;
    Ok(TableModel { features, moments })
}

pub fn neuron(args: NeuronArgs) -> CliResult<String> {
    let (cfg, resolved): (NeuronCliConfig, _) = resolve(NeuronCliConfig::default(), args.config.as_deref(), &args)?;
    let pi = parse_rate(&cfg.pi)?;
    let ncfg = NeuronConfig::new(pi, parse_neuron_w0(&cfg.w0, pi)?)?;
    let run = neuron_run(&ncfg, cfg.steps)?;
    let mut trace = HerdingTrace::new(&[ncfg.w0], cfg.snapshot_stride);
    for (b, w) in run.bits.iter().zip(&run.weights[1..]) {
        trace.record(Some(State(vec![usize::from(*b)])), &[f64::from(*b)], &WeightVector(vec![*w]), false, cfg.snapshot_stride);
    }
    trace.finish(cfg.snapshot_stride);
    let model = neuron_model(pi)?;
    let labels: Vec<String> = run.bits.iter().map(u8::to_string).collect();
    write_trace(
        &cfg.out,
        &trace,
        StateColumn::Labels(&labels),
        &[("config", resolved), ("model", model_meta(&model.features, &model.moments))],
    )?;
    if cfg.report.is_some() {
        write_report(&cfg.report, &diagnose(&trace, &model.moments, &model.features, &DiagOptions::default())?)?;
    }
    let worst_prefix = (1..=run.bits.len())
        .map(|n| neuron_discrepancy(&run.bits, pi, 0, n))
        .collect::<herding::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(summary("neuron", &trace, max_moment_error(&trace, &[pi]), &format!(" max_prefix_discrepancy={worst_prefix:.6}")))
}

// ---------------------------------------------------------------- multinomial

#[derive(Args, Serialize)]
pub struct MultinomialArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',')]
    pub pi: Option<Vec<f64>>,
    /// Comma-separated initial weights (default: the probabilities).
    #[arg(long, value_delimiter = ',')]
    pub w0: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "stride")]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultinomialCliConfig {
    pub pi: Vec<f64>,
    pub w0: Option<Vec<f64>>,
    pub steps: usize,
    pub snapshot_stride: usize,
    pub out: Option<String>,
    pub report: Option<String>,
}

impl Default for MultinomialCliConfig {
    fn default() -> Self {
        MultinomialCliConfig { pi: vec![0.5, 0.5], w0: None, steps: 1000, snapshot_stride: 1, out: None, report: None }
    }
}

pub fn multinomial(args: MultinomialArgs) -> CliResult<String> {
    let (cfg, resolved): (MultinomialCliConfig, _) =
        resolve(MultinomialCliConfig::default(), args.config.as_deref(), &args)?;
    let mcfg = match &cfg.w0 {
        Some(w0) => herding::scalar::MultinomialConfig::new(cfg.pi.clone(), w0.clone())?,
        None => herding::scalar::MultinomialConfig::from_pi(cfg.pi.clone())?,
    };
    let features = TableFeatures::one_hot(mcfg.pi.len());
    let moments = MomentVector::new(mcfg.pi.clone(), Provenance::Analytic, &features)?;
    let tcfg = TraceConfig { snapshot_stride: cfg.snapshot_stride, record_samples: true, step: StepOptions::default() };
    let trace = herd_run(WeightVector(mcfg.w0.clone()), &moments, &features, &mut Maximizer::exact(), cfg.steps, &tcfg)?;
    let labels = index_labels(&trace, &features);
    write_trace(
        &cfg.out,
        &trace,
        StateColumn::Labels(&labels),
        &[("config", resolved), ("model", model_meta(&features, &moments))],
    )?;
    if cfg.report.is_some() {
        write_report(&cfg.report, &diagnose(&trace, &moments, &features, &DiagOptions::default())?)?;
    }
    Ok(summary("multinomial", &trace, max_moment_error(&trace, moments.values()), ""))
}

// ---------------------------------------------------------------- bifurcate

#[derive(Args, Serialize)]
pub struct BifurcateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub moments: Option<String>,
    /// Temperatures `lo:hi:n`, evenly spaced.
    #[arg(long)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub w0: Option<String>,
    /// Run temperatures one after another.
    #[arg(long)]
    #[serde(serialize_with = "true_or_null")]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcateConfig {
    pub model: String,
    pub moments: Option<String>,
    pub t_grid: String,
    pub burn_in: usize,
    pub max_period: usize,
    pub confirmations: usize,
    pub tolerance: f64,
    pub w0: String,
    pub sequential: bool,
    pub out: Option<String>,
    pub report: Option<String>,
}

impl Default for BifurcateConfig {
    fn default() -> Self {
        let p = PeriodConfig::default();
        BifurcateConfig {
            model: "random:D=4,K=2,seed=7".into(),
            moments: None,
            t_grid: "0.05:0.5:200".into(),
            burn_in: p.burn_in,
            max_period: p.max_period,
            confirmations: p.confirmations,
            tolerance: p.tolerance,
            w0: "phibar".into(),
            sequential: false,
            out: None,
            report: None,
        }
    }
}

pub fn bifurcate(args: BifurcateArgs) -> CliResult<String> {
    let (cfg, resolved): (BifurcateConfig, _) = resolve(BifurcateConfig::default(), args.config.as_deref(), &args)?;
    let model = parse_model(&cfg.model)?;
    let moments = load_moments(&model, &cfg.moments)?;
    let w0 = initial_weights(&cfg.w0, &moments)?;
    let (lo, hi, n) = parse_grid(&cfg.t_grid)?;
    let pcfg = PeriodConfig {
        burn_in: cfg.burn_in,
        max_period: cfg.max_period,
        confirmations: cfg.confirmations,
        tolerance: cfg.tolerance,
    };
    let exec = if cfg.sequential { Exec::Sequential } else { Exec::Parallel };
    let scan = bifurcation_scan(&model.features, &moments, &w0, &linear_grid(lo, hi, n), &pcfg, exec)?;
    let cascade = Cascade::from_scan(&scan);
    if let Some(p) = &cfg.out {
        let mut w = BufWriter::new(File::create(p).map_err(herding::HerdingError::from)?);
        let body = (|| -> std::io::Result<()> {
            writeln!(w, "# config: {resolved}")?;
            writeln!(w, "temperature,period")?;
            for pt in &scan {
                let period = match pt.period {
                    herding::engine::Period::Periodic(p) => p.to_string(),
                    herding::engine::Period::AperiodicAtHorizon(_) => "none".into(),
                };
                writeln!(w, "{},{period}", io::fmt_f64(&pt.temperature))?;
            }
            w.flush()
        })();
        body.map_err(herding::HerdingError::from)?;
    }
    write_report(&cfg.report, &json!({ "config": resolved, "points": scan, "cascade": cascade }))?;
    let regimes: Vec<String> = cascade.regimes.iter().map(|r| r.0.to_string()).collect();
    Ok(format!(
        "bifurcate: temperatures={} regimes={} period_doubling_to_aperiodic={} aperiodic_threshold={}",
        scan.len(),
        regimes.join(">"),
        cascade.doubles_to_chaos(),
        cascade.aperiodic_threshold.map_or("none".into(), |t| format!("{t:.6}"))
    ))
}

// ---------------------------------------------------------------- pomrf

#[derive(Args, Serialize)]
pub struct PomrfArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// CSV of -1/+1 visible data.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Leave out the hidden-bias features.
    #[arg(long)]
    #[serde(rename = "hidden_bias", serialize_with = "false_or_null")]
    pub no_hidden_bias: bool,
    /// full or tractable.
    #[arg(long)]
    pub variant: Option<String>,
    /// exact or local.
    #[arg(long)]
    pub search: Option<String>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "stride")]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    #[serde(serialize_with = "true_or_null")]
    pub strict_pct: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PomrfCliConfig {
    pub data: Option<String>,
    pub hidden: usize,
    pub hidden_bias: bool,
    pub variant: Variant,
    pub search: String,
    pub max_sweeps: usize,
    pub minibatch: Option<usize>,
    pub steps: usize,
    pub snapshot_stride: usize,
    pub strict_pct: bool,
    pub out: Option<String>,
    pub report: Option<String>,
}

impl Default for PomrfCliConfig {
    fn default() -> Self {
        PomrfCliConfig {
            data: None,
            hidden: 1,
            hidden_bias: true,
            variant: Variant::Full,
            search: "exact".into(),
            max_sweeps: 100,
            minibatch: None,
            steps: 10_000,
            snapshot_stride: 100,
            strict_pct: false,
            out: None,
            report: None,
        }
    }
}

pub fn pomrf(args: PomrfArgs) -> CliResult<String> {
    let (cfg, resolved): (PomrfCliConfig, _) = resolve(PomrfCliConfig::default(), args.config.as_deref(), &args)?;
    let path = cfg.data.as_ref().ok_or_else(|| CliError::config("pomrf needs --data"))?;
    let data = io::read_visible_matrix(path).map_err(input_err("visible data"))?;
    let nv = data[0].len();
    let fmap = RbmFeatures::new(nv, cfg.hidden, cfg.hidden_bias)?;
    let local = match cfg.search.as_str() {
        "exact" => Search::Exact,
        "local" => Search::Local { max_sweeps: cfg.max_sweeps },
        other => return Err(CliError::config(format!("search must be exact or local, got {other:?}"))),
    };
    let joint = if cfg.variant == Variant::Tractable { Search::Local { max_sweeps: cfg.max_sweeps } } else { local };
    let pcfg = PomrfConfig {
        variant: cfg.variant,
        hidden: local,
        joint,
        minibatch: cfg.minibatch,
        pct: cfg.strict_pct.then_some(PctCheck::Fail),
        snapshot_stride: cfg.snapshot_stride,
        ..PomrfConfig::default()
    };
    let dim = fmap.dim();
    let mut problem = PomrfProblem::new(fmap, nv, data)?;
    let run = pomrf_run(&mut problem, WeightVector::zeros(dim), cfg.steps, &pcfg)?;
    write_trace(&cfg.out, &run.trace, StateColumn::Assignments, &[("config", resolved.clone())])?;
    let t = run.trace.steps as f64;
    let gap = run.moment_gap();
    let bound = 2.0 * run.trace.max_abs_weight(run.trace.steps) / t;
    let entropy = run.hidden_marginal_entropy();
    write_report(
        &cfg.report,
        &json!({
            "config": resolved,
            "steps": run.trace.steps,
            "moment_gap": gap,
            "moment_bound": bound,
            "pct_violations": run.trace.pct_violations,
            "max_weight_norm": run.trace.max_weight_norm,
            "hidden_marginal_entropy_bits": entropy,
            "positive_mean": run.positive_sum.iter().map(|s| s / t).collect::<Vec<_>>(),
            "negative_mean": run.trace.running_feature_sum.iter().map(|s| s / t).collect::<Vec<_>>(),
        }),
    )?;
    Ok(summary("pomrf", &run.trace, gap, &format!(" bound={bound:.3e} hidden_entropy_bits={entropy:.4}")))
}

// ---------------------------------------------------------------- cond

#[derive(Args, Serialize)]
pub struct CondArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Start from the voted-perceptron preset.
    #[arg(long)]
    #[serde(skip)]
    pub perceptron: bool,
    /// Labeled training CSV.
    #[arg(long)]
    pub train: Option<String>,
    /// Labeled test CSV; without it a seeded split of the training file is used.
    #[arg(long)]
    pub test: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// joint or one-vs-all.
    #[arg(long, value_parser = serde_name::<herding::cond::Procedure>)]
    pub procedure: Option<herding::cond::Procedure>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(serialize_with = "true_or_null")]
    pub strict_pct: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondIo {
    pub train: Option<String>,
    pub test: Option<String>,
    pub test_fraction: f64,
    pub normalize: bool,
    pub steps: usize,
    pub strict_pct: bool,
    pub out: Option<String>,
    pub report: Option<String>,
}

const COND_IO_KEYS: [&str; 8] = ["train", "test", "test_fraction", "normalize", "steps", "strict_pct", "out", "report"];

impl Default for CondIo {
    fn default() -> Self {
        CondIo {
            train: None,
            test: None,
            test_fraction: 0.5,
            normalize: true,
            steps: 10_000,
            strict_pct: false,
            out: None,
            report: None,
        }
    }
}

fn labeled(path: &str, what: &str) -> CliResult<LabeledDataset> {
    match io::read_dataset(path).map_err(input_err(what))? {
        Dataset::Labeled(d) => Ok(d),
        Dataset::Unlabeled { .. } => Err(CliError::config(format!("{what} {path} has no label column"))),
    }
}

pub fn cond(args: CondArgs) -> CliResult<String> {
    let base = if args.perceptron { CondConfig::perceptron() } else { CondConfig::default() };
    let mut base_json = serde_json::to_value(&base).map_err(|e| CliError::config(e.to_string()))?;
    if let (Value::Object(m), Value::Object(io)) = (&mut base_json, serde_json::to_value(CondIo::default()).unwrap_or_default()) {
        m.extend(io);
    }
    let mut merged = merge(base_json, args.config.as_deref(), &args)?;
    let io_obj = take_keys(&mut merged, &COND_IO_KEYS);
    let mut ccfg: CondConfig = parse(merged)?;
    let iocfg: CondIo = parse(io_obj)?;
    if iocfg.strict_pct {
        ccfg.pct = PctCheck::Fail;
    }
    let mut resolved = serde_json::to_value(&ccfg).map_err(|e| CliError::config(e.to_string()))?;
    if let (Value::Object(m), Ok(Value::Object(io))) = (&mut resolved, serde_json::to_value(&iocfg)) {
        m.extend(io);
    }
    let path = iocfg.train.as_deref().ok_or_else(|| CliError::config("cond needs --train"))?;
    let data = labeled(path, "training data")?;
    let (train, test) = match &iocfg.test {
        Some(p) => (data, labeled(p, "test data")?),
        None => data.split(iocfg.test_fraction, ccfg.seed)?,
    };
    let (train, test) = if iocfg.normalize {
        let (tr, r) = augment_normalization_feature(&train);
        let te = augment_with(&test, r);
        (tr, te)
    } else {
        (train, test)
    };
    let run = cond_run(&train, test.inputs(), &ccfg, iocfg.steps)?;
    let err = run.test_error(&test);
    let pct: usize = run.herders.iter().map(|h| h.trace.pct_violations.len()).sum();
    let max_norm = run.herders.iter().map(|h| h.trace.max_weight_norm).fold(0.0, f64::max);
    write_trace(&iocfg.out, &run.herders[0].trace, StateColumn::Assignments, &[("config", resolved.clone())])?;
    let herders: Vec<Value> = run
        .herders
        .iter()
        .map(|h| {
            json!({
                "steps": h.trace.steps,
                "pct_violations": h.trace.pct_violations,
                "max_weight_norm": h.trace.max_weight_norm,
                "max_moment_gap": h.moment_gaps().into_iter().fold(0.0, f64::max),
                "moment_gaps": h.moment_gaps(),
                "moment_bounds": h.moment_bounds(),
                "training_errors": h.errors,
            })
        })
        .collect();
    write_report(
        &iocfg.report,
        &json!({ "config": resolved, "test_error": err, "stop": run.stop, "predictions": run.predict(), "herders": herders }),
    )?;
    Ok(format!(
        "cond: test_error={err:.4} stop={:?} pct_violations={pct} max_weight_norm={max_norm:.6}",
        run.stop
    ))
}

// ---------------------------------------------------------------- ising

#[derive(Args, Serialize)]
pub struct IsingArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Lattice size `HxW`.
    #[arg(long)]
    pub size: Option<String>,
    /// Free instead of periodic boundary.
    #[arg(long)]
    #[serde(rename = "periodic", serialize_with = "false_or_null")]
    pub free_boundary: bool,
    /// Coupling for the oracle (default: critical).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sw_sweeps: Option<usize>,
    #[arg(long)]
    pub sw_burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use this edge moment instead of running the oracle.
    #[arg(long)]
    pub edge_moment: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Collect component sizes every this many steps (0 disables).
    #[arg(long)]
    pub histogram_every: Option<usize>,
    #[arg(long = "stride")]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    #[serde(serialize_with = "true_or_null")]
    pub strict_pct: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsingCliConfig {
    pub size: String,
    pub periodic: bool,
    pub beta: Option<f64>,
    pub sw_sweeps: usize,
    pub sw_burn_in: usize,
    pub seed: u64,
    pub edge_moment: Option<f64>,
    pub node_moment: f64,
    pub steps: usize,
    pub max_sweeps: usize,
    pub histogram_every: usize,
    pub snapshot_stride: usize,
    pub strict_pct: bool,
    pub out: Option<String>,
    pub report: Option<String>,
}

impl Default for IsingCliConfig {
    fn default() -> Self {
        IsingCliConfig {
            size: "32x32".into(),
            periodic: true,
            beta: None,
            sw_sweeps: 2000,
            sw_burn_in: 200,
            seed: 0,
            edge_moment: None,
            node_moment: 0.0,
            steps: 10_000,
            max_sweeps: 50,
            histogram_every: 10,
            snapshot_stride: 100,
            strict_pct: false,
            out: None,
            report: None,
        }
    }
}

pub fn ising(args: IsingArgs) -> CliResult<String> {
    let (cfg, resolved): (IsingCliConfig, _) = resolve(IsingCliConfig::default(), args.config.as_deref(), &args)?;
    let (h, w) = parse_size(&cfg.size)?;
    let lattice = IsingLattice::new(h, w, cfg.periodic)?;
    let beta = cfg.beta.unwrap_or_else(critical_beta);
    let (edge, oracle, start) = match cfg.edge_moment {
        Some(e) => (e, Value::Null, None),
        None => {
            let sw = swendsen_wang_sample(&lattice, beta, cfg.sw_sweeps, cfg.sw_burn_in, cfg.seed)?;
            let se = batch_means_standard_error(&sw.edge_series, 20);
            let o = json!({ "beta": beta, "edge_moment": sw.edge_moment, "standard_error": se, "node_moment": sw.node_moment });
            (sw.edge_moment, o, Some(sw.last_state))
        }
    };
    let moments = IsingMoments::uniform(&lattice, cfg.node_moment, edge)?;
    let hcfg = IsingHerdConfig {
        max_sweeps: cfg.max_sweeps,
        pct: if cfg.strict_pct { PctCheck::Fail } else { PctCheck::Count },
        snapshot_stride: cfg.snapshot_stride,
        histogram_every: cfg.histogram_every,
        record_samples: false,
        initial_state: start,
    };
    let run = ising_herd_run(&lattice, &moments, cfg.steps, &hcfg)?;
    write_trace(&cfg.out, &run.trace, StateColumn::Assignments, &[("config", resolved.clone())])?;
    let t = run.trace.steps as f64;
    let bound = 2.0 * run.trace.max_abs_weight(run.trace.steps) / t;
    let err = run.max_moment_error(&moments);
    let slope = run.histogram.log_log_slope();
    write_report(
        &cfg.report,
        &json!({
            "config": resolved,
            "oracle": oracle,
            "edge_moment_target": edge,
            "herding_edge_average": run.mean_edge_average(),
            "max_moment_error": err,
            "moment_bound": bound,
            "pct_violations": run.trace.pct_violations,
            "max_weight_norm": run.trace.max_weight_norm,
            "component_size_counts": run.histogram.counts,
            "component_size_log_log_slope": slope,
        }),
    )?;
    Ok(summary(
        "ising",
        &run.trace,
        err,
        &format!(
            " bound={bound:.3e} edge_target={edge:.6} edge_average={:.6} size_slope={}",
            run.mean_edge_average(),
            slope.map_or("none".into(), |s| format!("{s:.3}"))
        ),
    ))
}

// ---------------------------------------------------------------- diagnose

#[derive(Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Trace CSV written by herd, neuron or multinomial.
    #[arg(long)]
    pub trace: Option<String>,
    #[arg(long)]
    pub report: Option<String>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub l_max: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub trace: Option<String>,
    pub report: Option<String>,
    pub t_max: Option<usize>,
    pub l_max: Option<usize>,
}

/// Rebuilds a full trace from its state column, the initial weights and
/// the model table by replaying the updates.
fn replay(file: &io::TraceFile, model: &TableModel, stride: usize) -> CliResult<HerdingTrace> {
    let w0 = match file.weight_snapshots.first() {
        Some((0, w)) => w.clone(),
        _ => return Err(CliError::config("trace has no step-0 weights")),
    };
    let idx = file.state_indices().ok_or_else(|| CliError::config("trace states are not state indices"))?;
    let mut w = WeightVector(w0.clone());
    let mut trace = HerdingTrace::new(&w0, stride);
    let m = model.moments.values();
    for (t, &s) in idx.iter().enumerate() {
        if s >= model.features.num_states() {
            return Err(CliError::config(format!("state {s} at step {} is out of range", t + 1)));
        }
        let f = model.features.row(s);
        for ((wi, mi), fi) in w.values_mut().iter_mut().zip(m).zip(f) {
            *wi += mi - fi;
        }
        trace.record(Some(State(vec![s])), f, &w, false, stride);
    }
    trace.finish(stride);
    Ok(trace)
}

pub fn diagnose_cmd(args: DiagnoseArgs) -> CliResult<String> {
    let (cfg, _): (DiagnoseConfig, _) = resolve(DiagnoseConfig::default(), args.config.as_deref(), &args)?;
    let path = cfg.trace.as_deref().ok_or_else(|| CliError::config("diagnose needs --trace"))?;
    let file = io::read_trace(Path::new(path)).map_err(input_err("trace"))?;
    let model = file
        .meta
        .get("model")
        .ok_or_else(|| CliError::config("trace carries no model table (written by herd, neuron or multinomial?)"))?;
    let rows: Vec<Vec<f64>> = serde_json::from_value(model["features"].clone())
        .map_err(|e| CliError::config(format!("model features: {e}")))?;
    let values: Vec<f64> = serde_json::from_value(model["moments"].clone())
        .map_err(|e| CliError::config(format!("model moments: {e}")))?;
    let features = TableFeatures::new(rows)?;
    let moments = MomentVector::from_values(values, Provenance::DataAverage);
    let table = TableModel { features, moments };
    let stride = file.meta.get("config").and_then(|c| c["snapshot_stride"].as_u64()).unwrap_or(100) as usize;
    let mut trace = replay(&file, &table, stride.max(1))?;
    if let Some(v) = file.meta.get("pct_violations") {
        trace.pct_violations = serde_json::from_value(v.clone()).unwrap_or_default();
    }
    let defaults = DiagOptions::default();
    let opts = DiagOptions { t_max: cfg.t_max.unwrap_or(defaults.t_max), l_max: cfg.l_max.unwrap_or(defaults.l_max) };
    let rep = diagnose(&trace, &table.moments, &table.features, &opts)?;
    write_report(&cfg.report, &rep)?;
    Ok(format!(
        "diagnose: steps={} moment_error={:.3e} error_slope={} pct_violations={} max_weight_norm={:.6}",
        rep.steps,
        max_moment_error(&trace, table.moments.values()),
        rep.error_slope.map_or("none".into(), |s| format!("{s:.3}")),
        rep.pct_summary.violations,
        rep.max_weight_norm
    ))
}
