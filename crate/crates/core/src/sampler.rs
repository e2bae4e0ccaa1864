//! Collapsed Gibbs sampler for the MRF-constrained Dirichlet-process mixture
//! of piecewise-constant Poisson processes.
//!
//! Each iteration draws every cluster intensity from its Gamma full
//! conditional, then sweeps the boxes in index order and reassigns each one
//! from its full conditional over the occupied clusters plus a fresh cluster.
//! For an occupied cluster `c` (box `i` removed) the unnormalized log weight is
//!
//! ```text
//! ln n_c + eta * sum_{j ~ i} d_ij 1(z_j = c) + N_i ln(lambda_c mu_i) - lambda_c mu_i
//! ```
//!
//! and for a fresh cluster it is `ln alpha` plus the Poisson-Gamma marginal of
//! the box count. Setting `eta = 0` gives the plain CRP mixture. The Poisson
//! `1 / N_i!` factor is common to every branch and is dropped throughout.
//!
//! Labels are kept dense: they are always `0..K` with no empty cluster.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{BinnedPattern, NeighborGraph};
use crate::inference::rand_index;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Gamma shape of the base measure.
    pub a: f64,
    /// Gamma rate of the base measure.
    pub b: f64,
    /// Dirichlet-process concentration.
    pub alpha: f64,
    /// MRF smoothing strength.
    pub eta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            alpha: 1.0,
            eta: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn new(a: f64, b: f64, alpha: f64, eta: f64) -> Result<Self> {
        let h = Self { a, b, alpha, eta };
        h.validate()?;
        Ok(h)
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.a) && pos(self.b) && pos(self.alpha)) {
            return Err(Error::InvalidParameter(format!(
                "a, b and alpha must be positive (a={}, b={}, alpha={})",
                self.a, self.b, self.alpha
            )));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta={} must be >= 0",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Starting partition of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Every box in one cluster.
    SingleCluster,
    /// Labels drawn uniformly from `k0` values, then compacted.
    RandomLabels { k0: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub retained: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: InitPolicy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: 2000,
            retained: 2000,
            thin: 10,
            seed: 0,
            init: InitPolicy::RandomLabels { k0: 10 },
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retained == 0 || self.thin == 0 {
            return Err(Error::InvalidParameter(format!(
                "retained ({}) and thin ({}) must be at least 1",
                self.retained, self.thin
            )));
        }
        if let InitPolicy::RandomLabels { k0: 0 } = self.init {
            return Err(Error::InvalidParameter("random init needs k0 >= 1".into()));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        self.retained / self.thin
    }
}

/// Current labels, intensities and cluster sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    z: Vec<usize>,
    lambda: Vec<f64>,
    sizes: Vec<usize>,
}

const UNASSIGNED: usize = usize::MAX;

impl SamplerState {
    /// Builds a state from arbitrary labels, compacting them to `0..K` in order
    /// of first appearance. `lambda` is indexed by the compacted labels.
    pub fn new(labels: &[usize], lambda: Vec<f64>) -> Result<Self> {
        let z = compact_labels(labels);
        let k = z.iter().max().map_or(0, |m| m + 1);
        if lambda.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: lambda.len(),
            });
        }
        if let Some(v) = lambda.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "intensity {v} must be positive"
            )));
        }
        let mut sizes = vec![0; k];
        for &c in &z {
            sizes[c] += 1;
        }
        Ok(Self { z, lambda, sizes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.z
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn n_clusters(&self) -> usize {
        self.lambda.len()
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    /// Intensity of every box under the current labels.
    pub fn surface(&self) -> Vec<f64> {
        self.z.iter().map(|&c| self.lambda[c]).collect()
    }

    fn detach(&mut self, i: usize) {
        let c = self.z[i];
        self.z[i] = UNASSIGNED;
        self.sizes[c] -= 1;
        if self.sizes[c] == 0 {
            let last = self.lambda.len() - 1;
            self.lambda.swap_remove(c);
            self.sizes.swap_remove(c);
            if c != last {
                for l in self.z.iter_mut().filter(|l| **l == last) {
                    *l = c;
                }
            }
        }
    }

    fn attach(&mut self, i: usize, c: usize) {
        self.z[i] = c;
        self.sizes[c] += 1;
    }

    fn open(&mut self, i: usize, lambda: f64) {
        self.z[i] = self.lambda.len();
        self.lambda.push(lambda);
        self.sizes.push(1);
    }
}

/// Relabels to `0..K` in order of first appearance.
pub fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Prior part of the label full conditional. The likelihood part is shared
/// by all models.
pub trait ClusterPrior {
    /// Log prior weight of joining an occupied cluster holding `size` other
    /// boxes, `neighbor_weight` being `sum_{j ~ i} d_ij 1(z_j = c)`.
    fn log_existing(&self, size: usize, neighbor_weight: f64) -> f64;

    /// Log prior weight of opening a cluster when `n_clusters` are occupied
    /// by the other boxes.
    fn log_new(&self, n_clusters: usize) -> f64;

    /// Whether `log_existing` reads the neighbor weight.
    fn uses_neighbors(&self) -> bool;
}

/// Chinese-restaurant weights tilted by `exp(eta * neighbor_weight)`.
#[derive(Debug, Clone, Copy)]
pub struct MrfCrpPrior {
    pub ln_alpha: f64,
    pub eta: f64,
}

impl MrfCrpPrior {
    pub fn new(hyper: &Hyperparams) -> Self {
        Self {
            ln_alpha: hyper.alpha.ln(),
            eta: hyper.eta,
        }
    }
}

impl ClusterPrior for MrfCrpPrior {
    fn log_existing(&self, size: usize, neighbor_weight: f64) -> f64 {
        (size as f64).ln() + self.eta * neighbor_weight
    }

    fn log_new(&self, _n_clusters: usize) -> f64 {
        self.ln_alpha
    }

    fn uses_neighbors(&self) -> bool {
        self.eta != 0.0
    }
}

/// `ln int Pois(N | lambda mu) Gamma(lambda; a, b) d lambda`, without the
/// `1 / N!` factor.
pub fn log_marginal_count(count: u64, area: f64, a: f64, b: f64) -> f64 {
    let n = count as f64;
    let count_term = if count == 0 { 0.0 } else { n * area.ln() };
    a * b.ln() + ln_gamma(n + a) + count_term - (n + a) * (b + area).ln() - ln_gamma(a)
}

/// `N ln(lambda mu) - lambda mu`, the Poisson log likelihood without `1 / N!`.
pub fn log_poisson_kernel(count: u64, lambda: f64, area: f64) -> f64 {
    let rate = lambda * area;
    if count == 0 {
        -rate
    } else {
        count as f64 * rate.ln() - rate
    }
}

fn neighbor_weight(graph: &NeighborGraph, z: &[usize], i: usize, c: usize) -> f64 {
    graph
        .neighbors(i)
        .iter()
        .filter(|&&(j, _)| z[j] == c)
        .map(|&(_, d)| d)
        .sum()
}

/// Log weight of moving box `i` to the occupied cluster `c`, computed with
/// box `i` excluded from the cluster sizes.
pub fn log_weight_existing(
    i: usize,
    c: usize,
    state: &SamplerState,
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    hyper: &Hyperparams,
) -> Result<f64> {
    let own = usize::from(state.z[i] == c);
    let size = state.sizes.get(c).map_or(0, |s| s - own);
    if size == 0 {
        return Err(Error::UnoccupiedCluster { label: c, index: i });
    }
    let prior = MrfCrpPrior::new(hyper);
    let nw = neighbor_weight(graph, &state.z, i, c);
    Ok(prior.log_existing(size, nw)
        + log_poisson_kernel(binned.counts()[i], state.lambda[c], binned.area(i)))
}

/// Log weight of opening a fresh cluster for box `i`.
pub fn log_weight_new(i: usize, binned: &BinnedPattern, hyper: &Hyperparams) -> f64 {
    hyper.alpha.ln() + log_marginal_count(binned.counts()[i], binned.area(i), hyper.a, hyper.b)
}

/// Draws an index with probability proportional to `exp(log_w)`.
pub fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in log_w.iter().enumerate() {
        u -= (w - max).exp();
        if u < 0.0 {
            return k;
        }
    }
    log_w.len() - 1
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    // Shapes below one can underflow to zero; keep intensities positive.
    g.sample(rng).max(f64::MIN_POSITIVE)
}

/// Reusable per-chain buffers and box constants.
pub(crate) struct Workspace {
    log_new_marginal: Vec<f64>,
    log_area: Vec<f64>,
    log_lambda: Vec<f64>,
    nbr: Vec<f64>,
    log_w: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(binned: &BinnedPattern, hyper: &Hyperparams) -> Self {
        let n = binned.n_boxes();
        Self {
            log_new_marginal: (0..n)
                .map(|i| log_marginal_count(binned.counts()[i], binned.area(i), hyper.a, hyper.b))
                .collect(),
            log_area: (0..n).map(|i| binned.area(i).ln()).collect(),
            log_lambda: Vec::new(),
            nbr: Vec::new(),
            log_w: Vec::new(),
        }
    }
}

/// Reassigns box `i` from its full conditional and returns its new label.
pub fn sample_z<P: ClusterPrior, R: Rng + ?Sized>(
    i: usize,
    state: &mut SamplerState,
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    prior: &P,
    hyper: &Hyperparams,
    rng: &mut R,
) -> usize {
    let mut ws = Workspace::new(binned, hyper);
    ws.log_lambda = state.lambda.iter().map(|l| l.ln()).collect();
    sample_z_in(i, state, binned, graph, prior, hyper, &mut ws, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn sample_z_in<P: ClusterPrior, R: Rng + ?Sized>(
    i: usize,
    state: &mut SamplerState,
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    prior: &P,
    hyper: &Hyperparams,
    ws: &mut Workspace,
    rng: &mut R,
) -> usize {
    let old_k = state.n_clusters();
    let old = state.z[i];
    state.detach(i);
    let k = state.n_clusters();
    if k < old_k {
        // Mirror the swap-remove on the cached logs.
        ws.log_lambda.swap_remove(old);
    }

    ws.nbr.clear();
    ws.nbr.resize(k, 0.0);
    if prior.uses_neighbors() {
        for &(j, d) in graph.neighbors(i) {
            let c = state.z[j];
            if c != UNASSIGNED {
                ws.nbr[c] += d;
            }
        }
    }

    let count = binned.counts()[i];
    let n = count as f64;
    let area = binned.area(i);
    let log_area = ws.log_area[i];
    ws.log_w.clear();
    for c in 0..k {
        let lik = if count == 0 {
            -state.lambda[c] * area
        } else {
            n * (ws.log_lambda[c] + log_area) - state.lambda[c] * area
        };
        ws.log_w
            .push(prior.log_existing(state.sizes[c], ws.nbr[c]) + lik);
    }
    ws.log_w.push(prior.log_new(k) + ws.log_new_marginal[i]);

    let pick = sample_log_weights(&ws.log_w, rng);
    if pick == k {
        let l = draw_gamma(n + hyper.a, hyper.b + area, rng);
        state.open(i, l);
        ws.log_lambda.push(l.ln());
    } else {
        state.attach(i, pick);
    }
    state.z[i]
}

/// Draws each cluster intensity from `Gamma(N_k + a, b + area_k)`.
pub fn sample_lambda<R: Rng + ?Sized>(
    state: &mut SamplerState,
    binned: &BinnedPattern,
    hyper: &Hyperparams,
    rng: &mut R,
) {
    let k = state.n_clusters();
    let mut points = vec![0u64; k];
    let mut area = vec![0.0; k];
    for (i, &c) in state.z.iter().enumerate() {
        points[c] += binned.counts()[i];
        area[c] += binned.area(i);
    }
    for c in 0..k {
        state.lambda[c] = draw_gamma(points[c] as f64 + hyper.a, hyper.b + area[c], rng);
    }
}

/// Initial state under `policy`, intensities drawn from their conditionals.
pub fn initial_state<R: Rng + ?Sized>(
    binned: &BinnedPattern,
    hyper: &Hyperparams,
    policy: InitPolicy,
    rng: &mut R,
) -> SamplerState {
    let n = binned.n_boxes();
    let labels: Vec<usize> = match policy {
        InitPolicy::SingleCluster => vec![0; n],
        InitPolicy::RandomLabels { k0 } => (0..n).map(|_| rng.random_range(0..k0.max(1))).collect(),
    };
    let z = compact_labels(&labels);
    let k = z.iter().max().map_or(0, |m| m + 1);
    let mut state = SamplerState::new(&z, vec![1.0; k]).expect("compacted labels");
    sample_lambda(&mut state, binned, hyper, rng);
    state
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub iteration: usize,
    pub z: Vec<usize>,
    pub lambda: Vec<f64>,
}

impl ChainSample {
    pub fn n_clusters(&self) -> usize {
        self.lambda.len()
    }

    pub fn surface(&self) -> Vec<f64> {
        self.z.iter().map(|&c| self.lambda[c]).collect()
    }
}

/// Output of a sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<ChainSample>,
    /// Rand index between the labels of consecutive sweeps; entry `t` compares
    /// sweep `t + 1` with sweep `t` (sweep 0 being the initial state).
    pub ri_trace: Vec<f64>,
    pub k_trace: Vec<usize>,
    pub elapsed_secs: f64,
}

#[derive(Serialize)]
struct DumpLine<'a> {
    iteration: usize,
    k: usize,
    z: &'a [usize],
    lambda: &'a [f64],
    ri_prev: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// JSON lines, one retained sample each.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let line = DumpLine {
                iteration: s.iteration,
                k: s.n_clusters(),
                z: &s.z,
                lambda: &s.lambda,
                ri_prev: self.ri_trace[s.iteration - 1],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Generic Gibbs driver: `burn_in + retained` iterations of a lambda update
/// followed by a full label sweep.
pub fn run_gibbs<P: ClusterPrior>(
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    prior: &P,
    hyper: &Hyperparams,
    config: &SamplerConfig,
) -> Result<Chain> {
    hyper.validate()?;
    config.validate()?;
    if graph.n_nodes() != binned.n_boxes() {
        return Err(Error::DimensionMismatch {
            expected: binned.n_boxes(),
            actual: graph.n_nodes(),
        });
    }
    let start = Instant::now();
    let mut rng = rng::stream(config.seed);
    let mut state = initial_state(binned, hyper, config.init, &mut rng);
    let mut ws = Workspace::new(binned, hyper);
    let total = config.burn_in + config.retained;
    let mut samples = Vec::with_capacity(config.n_retained());
    let mut ri_trace = Vec::with_capacity(total);
    let mut k_trace = Vec::with_capacity(total);
    let mut previous = state.z.clone();

    for iter in 1..=total {
        sample_lambda(&mut state, binned, hyper, &mut rng);
        ws.log_lambda.clear();
        ws.log_lambda.extend(state.lambda.iter().map(|l| l.ln()));
        for i in 0..binned.n_boxes() {
            sample_z_in(
                i, &mut state, binned, graph, prior, hyper, &mut ws, &mut rng,
            );
        }
        ri_trace.push(if previous.len() >= 2 {
            rand_index(&previous, &state.z)?
        } else {
            1.0
        });
        k_trace.push(state.n_clusters());
        previous.clone_from(&state.z);
        if iter > config.burn_in && (iter - config.burn_in).is_multiple_of(config.thin) {
            samples.push(ChainSample {
                iteration: iter,
                z: state.z.clone(),
                lambda: state.lambda.clone(),
            });
        }
    }
    Ok(Chain {
        samples,
        ri_trace,
        k_trace,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs the MRF-DPM sampler; `hyper.eta = 0` is the plain CRP mixture.
pub fn run_chain(
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    hyper: &Hyperparams,
    config: &SamplerConfig,
) -> Result<Chain> {
    hyper.validate()?;
    run_gibbs(binned, graph, &MrfCrpPrior::new(hyper), hyper, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, StudyRegion};

    fn toy(counts: Vec<u64>, n_x: usize, n_y: usize) -> (BinnedPattern, NeighborGraph) {
        let r = StudyRegion::new(0.0, n_x as f64, 0.0, n_y as f64).unwrap();
        let g = Grid::new(r, n_x, n_y).unwrap();
        (
            BinnedPattern::from_counts(g, counts).unwrap(),
            NeighborGraph::rook(&g),
        )
    }

    #[test]
    fn symmetric_clusters_get_equal_weights() {
        let (b, nb) = toy(vec![2, 2, 2], 3, 1);
        let s = SamplerState::new(&[0, 1, 2], vec![1.5, 1.5, 1.5]).unwrap();
        let h = Hyperparams::default();
        let w0 = log_weight_existing(1, 0, &s, &b, &nb, &h).unwrap();
        let w2 = log_weight_existing(1, 2, &s, &b, &nb, &h).unwrap();
        assert_eq!(w0, w2);
    }

    #[test]
    fn hand_evaluated_existing_weight() {
        // 2x2 grid, box 0 has neighbors 1 and 2; cluster 0 = {0, 1, 3}.
        let (b, nb) = toy(vec![3, 0, 0, 0], 2, 2);
        let s = SamplerState::new(&[0, 0, 1, 0], vec![2.0, 5.0]).unwrap();
        let h = Hyperparams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let w = log_weight_existing(0, 0, &s, &b, &nb, &h).unwrap();
        let expected = 2f64.ln() + 1.0 + 3.0 * 2f64.ln() - 2.0;
        assert!((w - expected).abs() < 1e-14, "{w} vs {expected}");
    }

    #[test]
    fn existing_weight_rejects_singleton_self() {
        let (b, nb) = toy(vec![1, 1], 2, 1);
        let s = SamplerState::new(&[0, 1], vec![1.0, 1.0]).unwrap();
        let h = Hyperparams::default();
        assert!(matches!(
            log_weight_existing(0, 0, &s, &b, &nb, &h),
            Err(Error::UnoccupiedCluster { label: 0, index: 0 })
        ));
        assert!(log_weight_existing(0, 5, &s, &b, &nb, &h).is_err());
    }

    #[test]
    fn new_weight_closed_forms() {
        let (b, _) = toy(vec![0, 5], 2, 1);
        let h = Hyperparams::default();
        assert!((log_weight_new(0, &b, &h) + 2f64.ln()).abs() < 1e-14);
        let expected = (120.0f64 / 64.0).ln();
        assert!((log_weight_new(1, &b, &h) - expected).abs() < 1e-12);
    }

    #[test]
    fn weights_stay_finite_at_extremes() {
        let (b, nb) = toy(vec![1_000_000, 0], 2, 1);
        for &l in &[1e-12, 1.0, 1e12] {
            let s = SamplerState::new(&[0, 0], vec![l]).unwrap();
            let h = Hyperparams::new(1.0, 1.0, 1.0, 3.0).unwrap();
            for i in 0..2 {
                assert!(log_weight_existing(i, 0, &s, &b, &nb, &h)
                    .unwrap()
                    .is_finite());
                assert!(log_weight_new(i, &b, &h).is_finite());
            }
        }
    }

    #[test]
    fn single_box_always_label_zero() {
        let (b, nb) = toy(vec![4], 1, 1);
        let h = Hyperparams::default();
        let mut s = SamplerState::new(&[0], vec![2.0]).unwrap();
        let mut rng = rng::stream(1);
        for _ in 0..100 {
            assert_eq!(
                sample_z(0, &mut s, &b, &nb, &MrfCrpPrior::new(&h), &h, &mut rng),
                0
            );
            assert_eq!(s.n_clusters(), 1);
        }
    }

    #[test]
    fn large_eta_follows_neighbors() {
        let (b, nb) = toy(vec![2, 2, 2, 2, 2, 2, 2, 2, 2], 3, 3);
        // Center box 4: all four neighbors in cluster 1.
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0];
        let s = SamplerState::new(&labels, vec![2.0, 2.0]).unwrap();
        let h = Hyperparams::new(1.0, 1.0, 1.0, 10.0).unwrap();
        let w_nbr = log_weight_existing(4, 1, &s, &b, &nb, &h).unwrap();
        let w_other = log_weight_existing(4, 0, &s, &b, &nb, &h).unwrap();
        let w_new = log_weight_new(4, &b, &h);
        let p = 1.0 / (1.0 + (w_other - w_nbr).exp() + (w_new - w_nbr).exp());
        assert!(p > 0.999_999);
    }

    #[test]
    fn sample_z_matches_exact_weights() {
        // Three boxes, box 1 redrawn from a fixed state; frequency oracle.
        let (b, nb) = toy(vec![0, 3, 6], 3, 1);
        let h = Hyperparams::new(1.0, 1.0, 1.0, 0.7).unwrap();
        let base = SamplerState::new(&[0, 0, 1], vec![0.5, 6.0]).unwrap();
        let w = [
            log_weight_existing(1, 0, &base, &b, &nb, &h).unwrap(),
            log_weight_existing(1, 1, &base, &b, &nb, &h).unwrap(),
            log_weight_new(1, &b, &h),
        ];
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tot: f64 = w.iter().map(|x| (x - max).exp()).sum();
        let p: Vec<f64> = w.iter().map(|x| (x - max).exp() / tot).collect();

        let draws = 100_000;
        let mut freq = [0usize; 3];
        let mut rng = rng::stream(42);
        let prior = MrfCrpPrior::new(&h);
        for _ in 0..draws {
            let mut s = base.clone();
            sample_z(1, &mut s, &b, &nb, &prior, &h, &mut rng);
            let slot = match s.n_clusters() {
                3 => 2,
                _ => s.labels()[1],
            };
            freq[slot] += 1;
        }
        for k in 0..3 {
            let f = freq[k] as f64 / draws as f64;
            let se = (p[k] * (1.0 - p[k]) / draws as f64).sqrt();
            assert!(
                (f - p[k]).abs() < 3.0 * se + 1e-12,
                "slot {k}: {f} vs {}",
                p[k]
            );
        }
    }

    #[test]
    fn detach_compacts_labels() {
        let mut s = SamplerState::new(&[0, 1, 2, 2], vec![1.0, 2.0, 3.0]).unwrap();
        s.detach(1);
        assert_eq!(s.n_clusters(), 2);
        assert_eq!(s.lambda(), &[1.0, 3.0]);
        assert_eq!(&s.labels()[2..], &[1, 1]);
        s.attach(1, 0);
        assert_eq!(s.cluster_size(0), 2);
    }

    #[test]
    fn lambda_posterior_for_empty_area() {
        // N_k = 0 over area 10 with a = b = 1: Gamma(1, 11), mean 1/11.
        let (b, _) = toy(vec![0; 10], 10, 1);
        let h = Hyperparams::default();
        let mut s = SamplerState::new(&[0; 10], vec![1.0]).unwrap();
        let mut rng = rng::stream(3);
        let draws = 20_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            sample_lambda(&mut s, &b, &h, &mut rng);
            sum += s.lambda()[0];
        }
        let mean = sum / draws as f64;
        let se = (1.0 / 121.0 / draws as f64).sqrt();
        assert!((mean - 1.0 / 11.0).abs() < 3.0 * se);
    }

    #[test]
    fn chain_lengths_and_compaction() {
        let (b, nb) = toy((0..16).map(|i| (i % 5) as u64).collect(), 4, 4);
        let h = Hyperparams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = SamplerConfig {
            burn_in: 5,
            retained: 10,
            thin: 10,
            seed: 9,
            ..Default::default()
        };
        let chain = run_chain(&b, &nb, &h, &cfg).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.samples[0].iteration, 15);
        assert_eq!(chain.ri_trace.len(), 15);

        let cfg = SamplerConfig {
            burn_in: 20,
            retained: 200,
            thin: 10,
            seed: 9,
            ..Default::default()
        };
        let chain = run_chain(&b, &nb, &h, &cfg).unwrap();
        assert_eq!(chain.len(), 20);
        for s in &chain.samples {
            let k = s.n_clusters();
            let mut seen = vec![false; k];
            for &c in &s.z {
                seen[c] = true;
            }
            assert!(seen.iter().all(|&x| x));
            assert!(s.lambda.iter().all(|&l| l > 0.0));
        }
        let again = run_chain(&b, &nb, &h, &cfg).unwrap();
        assert_eq!(chain.samples, again.samples);
    }

    #[test]
    fn config_validation() {
        let (b, nb) = toy(vec![1, 1], 2, 1);
        let h = Hyperparams::default();
        let bad = SamplerConfig {
            thin: 0,
            ..Default::default()
        };
        assert!(run_chain(&b, &nb, &h, &bad).is_err());
        let bad = SamplerConfig {
            retained: 0,
            ..Default::default()
        };
        assert!(run_chain(&b, &nb, &h, &bad).is_err());
        assert!(Hyperparams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(Hyperparams::new(1.0, 1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn jsonl_dump_has_one_line_per_sample() {
        let (b, nb) = toy(vec![1, 4, 0, 2], 2, 2);
        let h = Hyperparams::default();
        let cfg = SamplerConfig {
            burn_in: 3,
            retained: 6,
            thin: 2,
            seed: 1,
            ..Default::default()
        };
        let chain = run_chain(&b, &nb, &h, &cfg).unwrap();
        let mut buf = Vec::new();
        chain.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["iteration"], 5);
        assert_eq!(v["z"].as_array().unwrap().len(), 4);
        assert!(v["ri_prev"].as_f64().unwrap() <= 1.0);
    }
}
