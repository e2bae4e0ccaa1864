//! Mixture-of-finite-mixtures benchmark sampler.
//!
//! The partition prior is `V_n(t) prod_c gamma^(|c|)` with
//!
//! ```text
//! V_n(t) = sum_{k >= t} k! / (k - t)! / (gamma k)^(n) * p_K(k)
//! ```
//!
//! (`x^(n)` the rising factorial) and `p_K` a Poisson(1) truncated to
//! `k >= 1`. A box joins an occupied cluster with prior weight
//! `|c| + gamma` and opens a new one with `gamma V_n(t+1) / V_n(t)`; the
//! likelihood part and the intensity update are shared with [`crate::sampler`].

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{BinnedPattern, NeighborGraph};
use crate::sampler::{run_gibbs, Chain, ClusterPrior, Hyperparams, SamplerConfig};

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 1_000_000;

/// Poisson(1) truncated to positive integers, in log form.
pub fn log_truncated_poisson1(k: usize) -> f64 {
    debug_assert!(k >= 1);
    // p(k) = e^-1 / k! / (1 - e^-1)
    -1.0 - ln_gamma(k as f64 + 1.0) - (-(-1f64).exp()).ln_1p()
}

fn log_rising(x: f64, n: usize) -> f64 {
    ln_gamma(x + n as f64) - ln_gamma(x)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln V_n(t)` for `t = 0..=t_max`.
///
/// Terms decrease monotonically in `k` from `k = max(t, 1)`, so the series is
/// cut once a term falls below `1e-16` of the running sum.
pub fn compute_log_vn(n: usize, t_max: usize, gamma: f64) -> Result<Vec<f64>> {
    if t_max > n {
        return Err(Error::InvalidParameter(format!(
            "t_max {t_max} exceeds n {n}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} must be positive"
        )));
    }
    let log_tol = SERIES_REL_TOL.ln();
    let mut table = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let mut sum = f64::NEG_INFINITY;
        for k in (t.max(1)..).take(SERIES_MAX_TERMS) {
            let kf = k as f64;
            let term =
                ln_gamma(kf + 1.0) - ln_gamma((k - t) as f64 + 1.0) - log_rising(gamma * kf, n)
                    + log_truncated_poisson1(k);
            sum = log_add(sum, term);
            if term - sum < log_tol {
                break;
            }
        }
        if !sum.is_finite() {
            return Err(Error::InvalidParameter(format!("V_{n}({t}) is not finite")));
        }
        table.push(sum);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfmConfig {
    /// Symmetric Dirichlet parameter of the mixture weights.
    pub gamma: f64,
    log_vn: Vec<f64>,
}

impl MfmConfig {
    /// Precomputes `ln V_n(t)` for every reachable `t` on `n` boxes.
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        Ok(Self {
            gamma,
            log_vn: compute_log_vn(n, n, gamma)?,
        })
    }

    pub fn log_vn(&self) -> &[f64] {
        &self.log_vn
    }
}

struct MfmPrior<'a> {
    ln_gamma_param: f64,
    gamma: f64,
    log_vn: &'a [f64],
}

impl ClusterPrior for MfmPrior<'_> {
    fn log_existing(&self, size: usize, _neighbor_weight: f64) -> f64 {
        (size as f64 + self.gamma).ln()
    }

    fn log_new(&self, n_clusters: usize) -> f64 {
        self.ln_gamma_param + self.log_vn[n_clusters + 1] - self.log_vn[n_clusters]
    }

    fn uses_neighbors(&self) -> bool {
        false
    }
}

/// Runs the MFM sampler. Only `a` and `b` of `hyper` are used.
pub fn run_mfm_chain(
    binned: &BinnedPattern,
    config: &MfmConfig,
    hyper: &Hyperparams,
    chain_config: &SamplerConfig,
) -> Result<Chain> {
    if config.log_vn.len() != binned.n_boxes() + 1 {
        return Err(Error::DimensionMismatch {
            expected: binned.n_boxes() + 1,
            actual: config.log_vn.len(),
        });
    }
    let prior = MfmPrior {
        ln_gamma_param: config.gamma.ln(),
        gamma: config.gamma,
        log_vn: &config.log_vn,
    };
    // No spatial term, so the graph is never read.
    let graph = NeighborGraph::from_edges(binned.n_boxes(), &[])?;
    run_gibbs(binned, &graph, &prior, hyper, chain_config)
}
