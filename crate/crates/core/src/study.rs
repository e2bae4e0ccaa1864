//! Fitting over a grid of smoothing parameters and replicated recovery studies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bin_points, BinnedPattern, NeighborGraph};
use crate::inference::{rand_index, select_index, Criterion, FitReport};
use crate::mfm::{run_mfm_chain, MfmConfig};
use crate::rng::derive_seed;
use crate::sampler::{run_chain, Chain, Hyperparams, SamplerConfig};
use crate::sim::{simulate_nhpp, SimulationSetting};

/// `start, start + step, ..., stop` (inclusive up to roundoff).
pub fn eta_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start >= 0.0 && stop >= start && stop.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eta range {start}:{stop}:{step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

/// Checks that an eta grid is nonempty, nonnegative and sorted.
pub fn validate_eta_grid(etas: &[f64]) -> Result<()> {
    if etas.is_empty() {
        return Err(Error::InvalidParameter("eta grid is empty".into()));
    }
    if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidParameter(
            "eta values must be finite and >= 0".into(),
        ));
    }
    if etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "eta grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Fits one MRF-DPM chain per `eta`, in parallel. Chain `k` is seeded from
/// `(config.seed, k)`.
pub fn fit_eta_grid(
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    hyper: &Hyperparams,
    etas: &[f64],
    config: &SamplerConfig,
) -> Result<Vec<FitReport>> {
    Ok(
        fit_eta_grid_with_chains(binned, graph, hyper, etas, config, false)?
            .into_iter()
            .map(|(f, _)| f)
            .collect(),
    )
}

/// [`fit_eta_grid`], also returning each chain when `keep_chains` is set.
pub fn fit_eta_grid_with_chains(
    binned: &BinnedPattern,
    graph: &NeighborGraph,
    hyper: &Hyperparams,
    etas: &[f64],
    config: &SamplerConfig,
    keep_chains: bool,
) -> Result<Vec<(FitReport, Option<Chain>)>> {
    validate_eta_grid(etas)?;
    etas.par_iter()
        .enumerate()
        .map(|(k, &eta)| {
            let cfg = SamplerConfig {
                seed: derive_seed(config.seed, &[k as u64]),
                ..*config
            };
            let h = hyper.with_eta(eta);
            let chain = run_chain(binned, graph, &h, &cfg)?;
            let report = FitReport::from_chain(&chain, binned, Some(eta))?;
            Ok((report, keep_chains.then_some(chain)))
        })
        .collect()
}

/// Fits the MFM benchmark once.
pub fn fit_mfm(
    binned: &BinnedPattern,
    hyper: &Hyperparams,
    gamma: f64,
    config: &SamplerConfig,
) -> Result<FitReport> {
    fit_mfm_with_chain(binned, hyper, gamma, config).map(|(f, _)| f)
}

pub fn fit_mfm_with_chain(
    binned: &BinnedPattern,
    hyper: &Hyperparams,
    gamma: f64,
    config: &SamplerConfig,
) -> Result<(FitReport, Chain)> {
    let mfm = MfmConfig::new(binned.n_boxes(), gamma)?;
    let chain = run_mfm_chain(binned, &mfm, hyper, config)?;
    let report = FitReport::from_chain(&chain, binned, None)?;
    Ok((report, chain))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// `a`, `b`, `alpha`; the `eta` field is ignored.
    pub hyper: Hyperparams,
    pub eta_grid: Vec<f64>,
    /// Chain lengths and initialization; seeds are derived per task.
    pub chain: SamplerConfig,
    pub include_mfm: bool,
    pub mfm_gamma: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            eta_grid: eta_range(0.0, 8.0, 0.5).expect("valid range"),
            chain: SamplerConfig::default(),
            include_mfm: false,
            mfm_gamma: 1.0,
        }
    }
}

/// How the reported fit of a replicate was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The `eta = 0` (plain CRP) fit.
    Eta0,
    Bic,
    Dic,
    Lpml,
    Mfm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Eta0 => "eta0",
            Method::Bic => "BIC",
            Method::Dic => "DIC",
            Method::Lpml => "LPML",
            Method::Mfm => "MFM",
        }
    }

    fn from_criterion(c: Criterion) -> Self {
        match c {
            Criterion::Bic => Method::Bic,
            Criterion::Dic => Method::Dic,
            Criterion::Lpml => Method::Lpml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: Method,
    /// Selected smoothing parameter; `None` for the MFM fit.
    pub eta: Option<f64>,
    pub k_hat: usize,
    /// Rand index of the Dahl partition against the true components.
    pub ri: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n: usize,
    /// Fraction of replicates with `k_hat` equal to the true count.
    pub k_accuracy: f64,
    pub mean_ri: f64,
    pub mean_k_hat: f64,
}

/// Box-wise summaries of posterior-mean surfaces across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub method: Method,
    pub q025: Vec<f64>,
    pub median: Vec<f64>,
    pub q975: Vec<f64>,
    /// `|mean estimate - truth| / truth` per box.
    pub abs_relative_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub setting: u32,
    pub true_k: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub eta_grid: Vec<f64>,
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<MethodSummary>,
    pub surfaces: Vec<SurfaceSummary>,
}

impl StudyReport {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Per-replicate rows as CSV: `replicate,criterion,eta,K_hat,RI,runtime`.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "criterion", "eta", "K_hat", "RI", "runtime"])?;
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.method.name().to_string(),
                r.eta.map_or_else(String::new, |e| e.to_string()),
                r.k_hat.to_string(),
                r.ri.to_string(),
                format!("{:.3}", r.runtime_secs),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct ReplicateFits {
    rows: Vec<ReplicateRow>,
    means: Vec<(Method, Vec<f64>)>,
}

fn run_one(
    setting: &SimulationSetting,
    rep: usize,
    config: &StudyConfig,
    seed: u64,
) -> Result<ReplicateFits> {
    let pattern = simulate_nhpp(&setting.surface(), derive_seed(seed, &[rep as u64, 0]));
    let binned = bin_points(&pattern, &setting.grid)?;
    let graph = NeighborGraph::rook(&setting.grid);
    let truth = setting.truth_labels();
    let chain_cfg = SamplerConfig {
        seed: derive_seed(seed, &[rep as u64, 1]),
        ..config.chain
    };
    let fits = fit_eta_grid(&binned, &graph, &config.hyper, &config.eta_grid, &chain_cfg)?;

    let row = |method, eta, f: &FitReport| -> Result<ReplicateRow> {
        Ok(ReplicateRow {
            replicate: rep,
            method,
            eta,
            k_hat: f.k_hat,
            ri: rand_index(&f.z_hat, truth)?,
            runtime_secs: f.elapsed_secs,
        })
    };

    let mut rows = Vec::new();
    let mut means = Vec::new();
    if let Some(f0) = fits.iter().find(|f| f.eta == Some(0.0)) {
        rows.push(row(Method::Eta0, Some(0.0), f0)?);
        means.push((Method::Eta0, f0.posterior_mean.clone()));
    }
    let table: Vec<_> = fits
        .iter()
        .map(|f| (f.eta.unwrap_or(f64::NAN), f.criteria))
        .collect();
    for c in Criterion::ALL {
        let f = &fits[select_index(&table, c)?];
        let m = Method::from_criterion(c);
        rows.push(row(m, f.eta, f)?);
        means.push((m, f.posterior_mean.clone()));
    }
    if config.include_mfm {
        let cfg = SamplerConfig {
            seed: derive_seed(seed, &[rep as u64, 2]),
            ..config.chain
        };
        let f = fit_mfm(&binned, &config.hyper, config.mfm_gamma, &cfg)?;
        rows.push(row(Method::Mfm, None, &f)?);
        means.push((Method::Mfm, f.posterior_mean));
    }
    Ok(ReplicateFits { rows, means })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between order statistics.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Simulates `n_reps` patterns from `setting`, fits each across the eta grid
/// and records the fits selected by each criterion. Replicate `r` derives its
/// streams from `(seed, r)`, so results do not depend on thread scheduling.
pub fn run_replicates(
    setting: &SimulationSetting,
    n_reps: usize,
    config: &StudyConfig,
    seed: u64,
) -> Result<StudyReport> {
    validate_eta_grid(&config.eta_grid)?;
    config.hyper.validate()?;
    config.chain.validate()?;
    let per_rep: Vec<ReplicateFits> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            run_one(setting, rep, config, seed).map_err(|e| Error::Replicate {
                replicate: rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let true_k = setting.n_components();
    let mut methods = vec![Method::Eta0, Method::Bic, Method::Dic, Method::Lpml];
    if config.include_mfm {
        methods.push(Method::Mfm);
    }
    let rows: Vec<ReplicateRow> = per_rep
        .iter()
        .flat_map(|r| r.rows.iter().cloned())
        .collect();
    let mut summary = Vec::new();
    let mut surfaces = Vec::new();
    let truth = setting.surface();
    for &m in &methods {
        let sel: Vec<&ReplicateRow> = rows.iter().filter(|r| r.method == m).collect();
        if sel.is_empty() {
            continue;
        }
        let n = sel.len() as f64;
        summary.push(MethodSummary {
            method: m,
            n: sel.len(),
            k_accuracy: sel.iter().filter(|r| r.k_hat == true_k).count() as f64 / n,
            mean_ri: sel.iter().map(|r| r.ri).sum::<f64>() / n,
            mean_k_hat: sel.iter().map(|r| r.k_hat as f64).sum::<f64>() / n,
        });

        let est: Vec<&Vec<f64>> = per_rep
            .iter()
            .flat_map(|r| r.means.iter().filter(|(mm, _)| *mm == m).map(|(_, v)| v))
            .collect();
        let n_boxes = truth.values().len();
        let mut s = SurfaceSummary {
            method: m,
            q025: Vec::with_capacity(n_boxes),
            median: Vec::with_capacity(n_boxes),
            q975: Vec::with_capacity(n_boxes),
            abs_relative_bias: Vec::with_capacity(n_boxes),
        };
        for (i, &t) in truth.values().iter().enumerate() {
            let mut v: Vec<f64> = est.iter().map(|e| e[i]).collect();
            v.sort_by(f64::total_cmp);
            s.q025.push(quantile(&v, 0.025));
            s.median.push(quantile(&v, 0.5));
            s.q975.push(quantile(&v, 0.975));
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            s.abs_relative_bias.push(((mean - t) / t).abs());
        }
        surfaces.push(s);
    }

    Ok(StudyReport {
        setting: setting.id,
        true_k,
        n_reps,
        seed,
        eta_grid: config.eta_grid.clone(),
        rows,
        summary,
        surfaces,
    })
}
