//! Problem generators and moment oracles.
//!
//! The pseudorandom generator here is ChaCha8 seeded with `seed_from_u64`.
//! It is used for model generation and the Swendsen-Wang oracle only; the
//! herding dynamics themselves never draw random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{
    expected_features_at_temperature, herd_run_with, FeatureMap, HerdingTrace, Maximizer, MomentVector,
    PctCheck, Provenance, StateSpace, TableFeatures, TraceConfig, WeightVector,
};
use crate::error::{HerdingError, Result};

/// Random fully-visible MRF with `d` states and `k` features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomModelSpec {
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub weight_scale: f64,
}

impl RandomModelSpec {
    pub fn new(d: usize, k: usize, seed: u64) -> Self {
        RandomModelSpec { d, k, seed, weight_scale: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct RandomMrf {
    pub spec: RandomModelSpec,
    pub features: TableFeatures,
    pub true_weights: Vec<f64>,
    pub moments: MomentVector,
}

/// Draws the `d x k` feature table from `N(0, 1)` row by row, then the true
/// weights from `N(0, weight_scale^2)`, and computes the moments exactly at
/// temperature 1.
pub fn random_mrf(spec: RandomModelSpec) -> Result<RandomMrf> {
    if spec.d == 0 || spec.k == 0 {
        return Err(HerdingError::InvalidConfig("random model needs d >= 1 and k >= 1".into()));
    }
    if !(spec.weight_scale.is_finite() && spec.weight_scale >= 0.0) {
        return Err(HerdingError::InvalidConfig("weight_scale must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<f64>> =
        (0..spec.d).map(|_| (0..spec.k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let true_weights: Vec<f64> = (0..spec.k)
        .map(|_| spec.weight_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let features = TableFeatures::new(rows)?;
    let m = expected_features_at_temperature(&true_weights, &features, 1.0)?;
    let moments = MomentVector::from_values(m, Provenance::Analytic);
    Ok(RandomMrf { spec, features, true_weights, moments })
}

#[inline]
pub(crate) fn spin(v: usize) -> f64 {
    if v == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Rectangular lattice of `height x width` spins. Variable value 0 encodes
/// spin -1 and value 1 encodes spin +1. Nodes are numbered row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingLattice {
    pub height: usize,
    pub width: usize,
    pub periodic: bool,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl IsingLattice {
    /// Edges are listed per node in raster order: right neighbour, then down
    /// neighbour. Periodic lattices need both sides at least 3 so that no
    /// edge is duplicated.
    pub fn new(height: usize, width: usize, periodic: bool) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(HerdingError::InvalidConfig("lattice sides must be positive".into()));
        }
        if periodic && (height < 3 || width < 3) {
            return Err(HerdingError::InvalidConfig("periodic lattices need sides of at least 3".into()));
        }
        let idx = |r: usize, c: usize| r * width + c;
        let mut edges = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if c + 1 < width {
                    edges.push((idx(r, c), idx(r, c + 1)));
                } else if periodic {
                    edges.push((idx(r, c), idx(r, 0)));
                }
                if r + 1 < height {
                    edges.push((idx(r, c), idx(r + 1, c)));
                } else if periodic {
                    edges.push((idx(r, c), idx(0, c)));
                }
            }
        }
        let mut lat = IsingLattice { height, width, periodic, edges, adjacency: Vec::new() };
        lat.build_adjacency();
        Ok(lat)
    }

    fn build_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((e, b));
            adj[b].push((e, a));
        }
        self.adjacency = adj;
    }

    pub fn num_nodes(&self) -> usize {
        self.height * self.width
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(edge index, neighbour)` pairs of `node`.
    pub fn neighbours(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }
}

/// Inverse critical temperature of the square-lattice Ising model,
/// `ln(1 + sqrt 2) / 2`.
pub fn critical_beta() -> f64 {
    (1.0 + 2f64.sqrt()).ln() / 2.0
}

/// Target statistics for Ising herding: one moment per node, one per edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingMoments {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

impl IsingMoments {
    /// Node moments `node_value` everywhere and the same cross moment on
    /// every edge.
    pub fn uniform(lattice: &IsingLattice, node_value: f64, edge_value: f64) -> Result<Self> {
        let m = IsingMoments {
            node: vec![node_value; lattice.num_nodes()],
            edge: vec![edge_value; lattice.edges().len()],
        };
        m.validate(lattice)?;
        Ok(m)
    }

    pub fn validate(&self, lattice: &IsingLattice) -> Result<()> {
        if self.node.len() != lattice.num_nodes() {
            return Err(HerdingError::DimensionMismatch { expected: lattice.num_nodes(), got: self.node.len() });
        }
        if self.edge.len() != lattice.edges().len() {
            return Err(HerdingError::DimensionMismatch { expected: lattice.edges().len(), got: self.edge.len() });
        }
        if self.node.iter().chain(&self.edge).any(|x| !(x.abs() <= 1.0)) {
            return Err(HerdingError::InvalidConfig("Ising moments must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    /// Node moments followed by edge moments, matching [`IsingFeatures`].
    pub fn to_vector(&self) -> MomentVector {
        let mut v = self.node.clone();
        v.extend_from_slice(&self.edge);
        MomentVector::from_values(v, Provenance::OracleEstimate)
    }
}

/// Features `x_i` for every node followed by `x_i x_j` for every edge.
#[derive(Clone, Debug)]
pub struct IsingFeatures {
    lattice: IsingLattice,
    space: StateSpace,
}

impl IsingFeatures {
    pub fn new(lattice: IsingLattice) -> Self {
        let space = StateSpace::binary(lattice.num_nodes());
        IsingFeatures { lattice, space }
    }

    pub fn lattice(&self) -> &IsingLattice {
        &self.lattice
    }
}

impl FeatureMap for IsingFeatures {
    fn dim(&self) -> usize {
        self.lattice.num_nodes() + self.lattice.edges().len()
    }

    fn space(&self) -> &StateSpace {
        &self.space
    }

    fn eval_into(&self, state: &[usize], out: &mut [f64]) {
        let n = self.lattice.num_nodes();
        for (o, &s) in out[..n].iter_mut().zip(state) {
            *o = spin(s);
        }
        for (o, &(a, b)) in out[n..].iter_mut().zip(self.lattice.edges()) {
            *o = spin(state[a]) * spin(state[b]);
        }
    }

    fn conditional_scores(&self, w: &[f64], state: &[usize], var: usize, out: &mut Vec<f64>) {
        let n = self.lattice.num_nodes();
        let mut field = w[var];
        for &(e, nb) in self.lattice.neighbours(var) {
            field += w[n + e] * spin(state[nb]);
        }
        out.clear();
        out.push(-field);
        out.push(field);
    }

    fn norm_bound(&self) -> Option<f64> {
        Some((self.dim() as f64).sqrt())
    }
}

/// Summary of a Swendsen-Wang chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwendsenWangRun {
    pub beta: f64,
    pub sweeps: usize,
    /// Grand average of `x_i x_j` over edges and recorded sweeps.
    pub edge_moment: f64,
    /// Per-sweep average of `x_i x_j` over edges.
    pub edge_series: Vec<f64>,
    /// Grand average of `x_i`.
    pub node_moment: f64,
    /// Per-edge time averages.
    pub edge_means: Vec<f64>,
    /// Spin values (0 or 1) after the last sweep.
    pub last_state: Vec<usize>,
}

/// Cluster-flip Markov chain for the zero-field, unit-coupling Ising model
/// `P(x) ~ exp(beta sum_edges x_i x_j)`.
pub struct SwendsenWang<'a> {
    lattice: &'a IsingLattice,
    bond_p: f64,
    rng: ChaCha8Rng,
    state: Vec<usize>,
    parent: Vec<usize>,
    flip: Vec<Option<bool>>,
}

impl<'a> SwendsenWang<'a> {
    /// Starts from independent uniform spins.
    pub fn new(lattice: &'a IsingLattice, beta: f64, seed: u64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(HerdingError::InvalidConfig("beta must be finite and non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = lattice.num_nodes();
        let state = (0..n).map(|_| rng.random_range(0..2usize)).collect();
        Ok(SwendsenWang {
            lattice,
            bond_p: 1.0 - (-2.0 * beta).exp(),
            rng,
            state,
            parent: (0..n).collect(),
            flip: vec![None; n],
        })
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// One full update: bond aligned neighbours with probability
    /// `1 - exp(-2 beta)`, then flip every cluster with probability 1/2.
    pub fn sweep(&mut self) {
        let n = self.state.len();
        for i in 0..n {
            self.parent[i] = i;
            self.flip[i] = None;
        }
        for e in 0..self.lattice.edges().len() {
            let (a, b) = self.lattice.edges()[e];
            if self.state[a] == self.state[b] && self.rng.random::<f64>() < self.bond_p {
                let (ra, rb) = (self.find(a), self.find(b));
                if ra != rb {
                    self.parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        for i in 0..n {
            let r = self.find(i);
            let f = match self.flip[r] {
                Some(f) => f,
                None => {
                    let f = self.rng.random_bool(0.5);
                    self.flip[r] = Some(f);
                    f
                }
            };
            if f {
                self.state[i] ^= 1;
            }
        }
    }
}

/// Runs `burn_in` discarded sweeps and then `sweeps` recorded ones.
pub fn swendsen_wang_sample(
    lattice: &IsingLattice,
    beta: f64,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SwendsenWangRun> {
    if sweeps == 0 {
        return Err(HerdingError::InvalidConfig("need at least one recorded sweep".into()));
    }
    let mut chain = SwendsenWang::new(lattice, beta, seed)?;
    for _ in 0..burn_in {
        chain.sweep();
    }
    let m = lattice.edges().len();
    let mut edge_sums = vec![0.0; m];
    let mut edge_series = Vec::with_capacity(sweeps);
    let mut node_sum = 0.0;
    for _ in 0..sweeps {
        chain.sweep();
        let s = chain.state();
        let mut total = 0.0;
        for (acc, &(a, b)) in edge_sums.iter_mut().zip(lattice.edges()) {
            let v = spin(s[a]) * spin(s[b]);
            *acc += v;
            total += v;
        }
        edge_series.push(if m > 0 { total / m as f64 } else { 0.0 });
        node_sum += s.iter().map(|&v| spin(v)).sum::<f64>() / s.len() as f64;
    }
    let edge_means: Vec<f64> = edge_sums.iter().map(|x| x / sweeps as f64).collect();
    let edge_moment = edge_series.iter().sum::<f64>() / sweeps as f64;
    Ok(SwendsenWangRun {
        beta,
        sweeps,
        edge_moment,
        edge_series,
        node_moment: node_sum / sweeps as f64,
        edge_means,
        last_state: chain.state().to_vec(),
    })
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means. Trailing samples that do not fill a batch are dropped.
pub fn batch_means_standard_error(series: &[f64], batches: usize) -> Option<f64> {
    if batches < 2 || series.len() < batches {
        return None;
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Some((var / batches as f64).sqrt())
}

/// Sizes of the connected same-spin clusters of a configuration, in order of
/// their lowest node.
pub fn component_sizes(lattice: &IsingLattice, state: &[usize]) -> Vec<usize> {
    let n = lattice.num_nodes();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(a) = stack.pop() {
            size += 1;
            for &(_, b) in lattice.neighbours(a) {
                if !seen[b] && state[b] == state[a] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Histogram of component sizes: `hist[s]` counts components of size `s`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub counts: Vec<u64>,
}

impl SizeHistogram {
    pub fn add(&mut self, sizes: &[usize]) {
        for &s in sizes {
            if s >= self.counts.len() {
                self.counts.resize(s + 1, 0);
            }
            self.counts[s] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Least-squares slope of log density against log size over
    /// logarithmic bins (powers of two). `None` with fewer than 3 populated
    /// bins.
    pub fn log_log_slope(&self) -> Option<f64> {
        let mut pts = Vec::new();
        let mut lo = 1usize;
        while lo < self.counts.len() {
            let hi = (2 * lo).min(self.counts.len());
            let c: u64 = self.counts[lo..hi].iter().sum();
            if c > 0 {
                let width = (hi - lo) as f64;
                let center = ((lo as f64) * ((hi - 1) as f64)).sqrt();
                pts.push((center.ln(), (c as f64 / width).ln()));
            }
            lo *= 2;
        }
        if pts.len() < 3 {
            return None;
        }
        Some(crate::diag::least_squares_slope(&pts))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingHerdConfig {
    pub max_sweeps: usize,
    pub pct: PctCheck,
    pub snapshot_stride: usize,
    /// Collect component sizes every this many steps (0 disables).
    pub histogram_every: usize,
    /// Keep the spin samples in the trace.
    pub record_samples: bool,
    /// Start of the first coordinate-ascent search (all zeros when absent).
    /// Uniform weights never break the lattice symmetry on their own, so an
    /// oracle sample is the usual choice.
    pub initial_state: Option<Vec<usize>>,
}

impl Default for IsingHerdConfig {
    fn default() -> Self {
        IsingHerdConfig { max_sweeps: 50, pct: PctCheck::Count, snapshot_stride: 100, histogram_every: 0, record_samples: false, initial_state: None }
    }
}

#[derive(Clone, Debug)]
pub struct IsingHerdRun {
    pub trace: HerdingTrace,
    /// Time average of every node statistic.
    pub node_averages: Vec<f64>,
    /// Time average of every edge statistic.
    pub edge_averages: Vec<f64>,
    pub histogram: SizeHistogram,
    pub last_state: Vec<usize>,
}

impl IsingHerdRun {
    /// Grand time average of `x_i x_j` over edges.
    pub fn mean_edge_average(&self) -> f64 {
        self.edge_averages.iter().sum::<f64>() / self.edge_averages.len().max(1) as f64
    }

    /// Largest per-feature gap between time averages and targets.
    pub fn max_moment_error(&self, moments: &IsingMoments) -> f64 {
        self.node_averages
            .iter()
            .zip(&moments.node)
            .chain(self.edge_averages.iter().zip(&moments.edge))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Herding on the Ising lattice with persistent coordinate ascent over nodes
/// in raster order, warm-started from the previous sample. Starts from
/// `w_0 = phi_bar`.
pub fn ising_herd_run(
    lattice: &IsingLattice,
    moments: &IsingMoments,
    steps: usize,
    cfg: &IsingHerdConfig,
) -> Result<IsingHerdRun> {
    moments.validate(lattice)?;
    let fmap = IsingFeatures::new(lattice.clone());
    let mv = moments.to_vector();
    let w0 = WeightVector::from(&mv);
    let mut maxer = Maximizer::persistent(cfg.max_sweeps);
    if let Some(s) = &cfg.initial_state {
        fmap.space().check(s)?;
        maxer.set_init(s.clone());
    }
    let tcfg = TraceConfig { snapshot_stride: cfg.snapshot_stride, record_samples: cfg.record_samples, ..Default::default() }
        .with_pct(cfg.pct);
    let mut histogram = SizeHistogram::default();
    let mut last_state = Vec::new();
    let trace = herd_run_with(w0, &mv, &fmap, &mut maxer, steps, &tcfg, |t, out| {
        if cfg.histogram_every > 0 && t % cfg.histogram_every == 0 {
            histogram.add(&component_sizes(lattice, out.state.values()));
        }
        if t == steps {
            last_state = out.state.values().to_vec();
        }
    })?;
    let n = lattice.num_nodes();
    let t = trace.steps as f64;
    let node_averages = trace.running_feature_sum[..n].iter().map(|s| s / t).collect();
    let edge_averages = trace.running_feature_sum[n..].iter().map(|s| s / t).collect();
    Ok(IsingHerdRun { trace, node_averages, edge_averages, histogram, last_state })
}

/// Restricted-Boltzmann-machine features over visible `x` and hidden `z`,
/// both in the `{-1, +1}` encoding: the `x_j`, optionally the `z_k`, then
/// every `x_j z_k` (visible-major).
#[derive(Clone, Debug)]
pub struct RbmFeatures {
    visible: usize,
    hidden: usize,
    hidden_bias: bool,
    space: StateSpace,
}

impl RbmFeatures {
    pub fn new(visible: usize, hidden: usize, hidden_bias: bool) -> Result<Self> {
        if visible == 0 || hidden == 0 {
            return Err(HerdingError::InvalidConfig("RBM needs at least one visible and one hidden unit".into()));
        }
        Ok(RbmFeatures { visible, hidden, hidden_bias, space: StateSpace::binary(visible + hidden) })
    }

    pub fn visible(&self) -> usize {
        self.visible
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn has_hidden_bias(&self) -> bool {
        self.hidden_bias
    }

    fn pair_offset(&self) -> usize {
        self.visible + if self.hidden_bias { self.hidden } else { 0 }
    }

    pub fn pair_index(&self, j: usize, k: usize) -> usize {
        self.pair_offset() + j * self.hidden + k
    }
}

impl FeatureMap for RbmFeatures {
    fn dim(&self) -> usize {
        self.pair_offset() + self.visible * self.hidden
    }

    fn space(&self) -> &StateSpace {
        &self.space
    }

    fn eval_into(&self, state: &[usize], out: &mut [f64]) {
        let (v, h) = (self.visible, self.hidden);
        let x = &state[..v];
        let z = &state[v..v + h];
        for j in 0..v {
            out[j] = spin(x[j]);
        }
        if self.hidden_bias {
            for k in 0..h {
                out[v + k] = spin(z[k]);
            }
        }
        let off = self.pair_offset();
        for j in 0..v {
            for k in 0..h {
                out[off + j * h + k] = spin(x[j]) * spin(z[k]);
            }
        }
    }

    fn conditional_scores(&self, w: &[f64], state: &[usize], var: usize, out: &mut Vec<f64>) {
        let (v, h) = (self.visible, self.hidden);
        let mut field = 0.0;
        if var < v {
            field += w[var];
            for k in 0..h {
                field += w[self.pair_index(var, k)] * spin(state[v + k]);
            }
        } else {
            let k = var - v;
            if self.hidden_bias {
                field += w[v + k];
            }
            for j in 0..v {
                field += w[self.pair_index(j, k)] * spin(state[j]);
            }
        }
        out.clear();
        out.push(-field);
        out.push(field);
    }

    fn norm_bound(&self) -> Option<f64> {
        Some((self.dim() as f64).sqrt())
    }
}

/// Average feature vector of a set of states.
pub fn average_features<F: FeatureMap + ?Sized>(fmap: &F, states: &[Vec<usize>]) -> Vec<f64> {
    let mut acc = vec![0.0; fmap.dim()];
    let mut buf = vec![0.0; fmap.dim()];
    for s in states {
        fmap.eval_into(s, &mut buf);
        for (a, f) in acc.iter_mut().zip(&buf) {
            *a += f;
        }
    }
    let n = states.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}
