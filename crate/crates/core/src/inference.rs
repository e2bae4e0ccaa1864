//! Post-MCMC summaries: Rand index, Dahl's representative draw, deviance based
//! criteria and selection of the smoothing parameter.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bin_points, BinnedPattern, Grid, PointPattern};
use crate::sampler::Chain;

/// Pair-count contingency of two labelings: `(sum a_i^2, sum b_j^2, sum n_ij^2)`.
fn contingency_squares(z1: &[usize], z2: &[usize]) -> (u64, u64, u64) {
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for (&a, &b) in z1.iter().zip(z2) {
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        *cells.entry((a, b)).or_default() += 1;
    }
    let sq = |m: &mut dyn Iterator<Item = u64>| m.map(|v| v * v).sum::<u64>();
    (
        sq(&mut rows.into_values()),
        sq(&mut cols.into_values()),
        sq(&mut cells.into_values()),
    )
}

/// Fraction of box pairs on which two partitions agree (both together or both
/// apart). Depends only on the partitions, not on the label values.
pub fn rand_index(z1: &[usize], z2: &[usize]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            expected: z1.len(),
            actual: z2.len(),
        });
    }
    let n = z1.len() as u64;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "rand index needs at least two items".into(),
        ));
    }
    let (a, b, c) = contingency_squares(z1, z2);
    // Discordant pairs, doubled: sum a^2 + sum b^2 - 2 sum n^2.
    let discordant2 = a + b - 2 * c;
    let pairs2 = n * (n - 1);
    Ok((pairs2 - discordant2) as f64 / pairs2 as f64)
}

/// Index of the retained draw whose co-clustering matrix is closest, in
/// squared Frobenius distance, to the posterior mean co-clustering matrix.
/// Ties go to the earliest draw.
///
/// The `n x n` matrices are never formed. With `S_lm = sum_ij H_l(i,j) H_m(i,j)`
/// (the sum of squared contingency counts of draws `l` and `m`), the distance
/// of draw `l` scaled by `L^2` is `L^2 S_ll - 2 L sum_m S_lm + sum_{m,m'} S_mm'`,
/// an exact integer.
pub fn dahl_select(partitions: &[&[usize]]) -> Result<usize> {
    let l = partitions.len();
    if l == 0 {
        return Err(Error::EmptyChain);
    }
    let n = partitions[0].len();
    if let Some(p) = partitions.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: p.len(),
        });
    }
    let mut s = vec![0u64; l * l];
    for a in 0..l {
        for b in a..l {
            let v = contingency_squares(partitions[a], partitions[b]).2;
            s[a * l + b] = v;
            s[b * l + a] = v;
        }
    }
    let total: i128 = s.iter().map(|&v| v as i128).sum();
    let lf = l as i128;
    let mut best = (i128::MAX, 0);
    for a in 0..l {
        let row: i128 = s[a * l..(a + 1) * l].iter().map(|&v| v as i128).sum();
        let d = lf * lf * s[a * l + a] as i128 - 2 * lf * row + total;
        if d < best.0 {
            best = (d, a);
        }
    }
    Ok(best.1)
}

/// [`dahl_select`] over the retained draws of a chain.
pub fn dahl_select_chain(chain: &Chain) -> Result<usize> {
    let parts: Vec<&[usize]> = chain.samples.iter().map(|s| s.z.as_slice()).collect();
    dahl_select(&parts)
}

fn check_surface(surface: &[f64], binned: &BinnedPattern) -> Result<()> {
    if surface.len() != binned.n_boxes() {
        return Err(Error::DimensionMismatch {
            expected: binned.n_boxes(),
            actual: surface.len(),
        });
    }
    if let Some(v) = surface.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "intensity {v} must be positive"
        )));
    }
    Ok(())
}

/// `sum_s ln lambda(s) - int lambda`, with `lambda` constant on boxes.
pub fn log_likelihood(surface: &[f64], binned: &BinnedPattern) -> Result<f64> {
    check_surface(surface, binned)?;
    let mut ll = 0.0;
    for (i, (&l, &c)) in surface.iter().zip(binned.counts()).enumerate() {
        if c > 0 {
            ll += c as f64 * l.ln();
        }
        ll -= l * binned.area(i);
    }
    Ok(ll)
}

/// Deviance `-2 (sum ln lambda(s_i) - int lambda)` of a box-wise surface for a
/// raw pattern.
pub fn deviance(surface: &[f64], pattern: &PointPattern, grid: &Grid) -> Result<f64> {
    let binned = bin_points(pattern, grid)?;
    deviance_binned(surface, &binned)
}

pub fn deviance_binned(surface: &[f64], binned: &BinnedPattern) -> Result<f64> {
    Ok(-2.0 * log_likelihood(surface, binned)?)
}

/// `2 mean(Dev) - Dev(estimate)`, the estimate being retained draw `dahl_index`.
pub fn dic(chain: &Chain, binned: &BinnedPattern, dahl_index: usize) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut sum = 0.0;
    for s in &chain.samples {
        sum += deviance_binned(&s.surface(), binned)?;
    }
    let mean = sum / chain.len() as f64;
    let est = chain
        .samples
        .get(dahl_index)
        .ok_or(Error::InvalidParameter(format!(
            "representative index {dahl_index} out of range"
        )))?;
    Ok(2.0 * mean - deviance_binned(&est.surface(), binned)?)
}

/// Log pseudo-marginal likelihood: `sum_s ln lambda~(s) - int lambda-bar`, with
/// `lambda~` the per-box harmonic mean and `lambda-bar` the arithmetic mean of
/// the retained surfaces.
pub fn lpml(chain: &Chain, binned: &BinnedPattern) -> Result<f64> {
    let (harmonic, arithmetic) = posterior_means(chain, binned)?;
    let mut v = 0.0;
    for i in 0..binned.n_boxes() {
        let c = binned.counts()[i];
        if c > 0 {
            v += c as f64 * harmonic[i].ln();
        }
        v -= arithmetic[i] * binned.area(i);
    }
    Ok(v)
}

/// Per-box harmonic and arithmetic means of the retained surfaces.
pub fn posterior_means(chain: &Chain, binned: &BinnedPattern) -> Result<(Vec<f64>, Vec<f64>)> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = binned.n_boxes();
    let mut inv = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let first = chain.samples[0].surface();
    let mut constant = vec![true; n];
    for s in &chain.samples {
        let surf = s.surface();
        check_surface(&surf, binned)?;
        for i in 0..n {
            inv[i] += 1.0 / surf[i];
            sum[i] += surf[i];
            constant[i] &= surf[i] == first[i];
        }
    }
    let m = chain.len() as f64;
    // A box whose value never changes gets that value back exactly, free of
    // the roundoff in `m / sum(1 / v)`.
    let pick = |i: usize, v: f64| if constant[i] { first[i] } else { v };
    Ok((
        inv.iter()
            .enumerate()
            .map(|(i, v)| pick(i, m / v))
            .collect(),
        sum.iter()
            .enumerate()
            .map(|(i, v)| pick(i, v / m))
            .collect(),
    ))
}

/// `-2 ln L(estimate) + K ln N` with `N` the number of points.
pub fn bic(surface: &[f64], k_hat: usize, binned: &BinnedPattern) -> Result<f64> {
    if binned.total() == 0 {
        return Err(Error::EmptyPattern);
    }
    Ok(-2.0 * log_likelihood(surface, binned)? + k_hat as f64 * (binned.total() as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Dic,
    Lpml,
    Bic,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Bic, Criterion::Dic, Criterion::Lpml];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Dic => "DIC",
            Criterion::Lpml => "LPML",
            Criterion::Bic => "BIC",
        }
    }

    /// Oriented so that smaller is better.
    fn loss(&self, c: &Criteria) -> f64 {
        match self {
            Criterion::Dic => c.dic,
            Criterion::Lpml => -c.lpml,
            Criterion::Bic => c.bic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub dic: f64,
    pub lpml: f64,
    pub bic: f64,
}

/// Summary of one fitted chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Smoothing parameter of the fit; `None` for models without one.
    pub eta: Option<f64>,
    pub grid: Grid,
    /// Position of the Dahl draw among the retained samples.
    pub representative: usize,
    pub k_hat: usize,
    pub z_hat: Vec<usize>,
    pub lambda_hat: Vec<f64>,
    /// Box-wise intensity of the Dahl draw.
    pub surface: Vec<f64>,
    /// Box-wise posterior mean intensity.
    pub posterior_mean: Vec<f64>,
    pub criteria: Criteria,
    pub ri_trace: Vec<f64>,
    pub k_trace: Vec<usize>,
    pub elapsed_secs: f64,
}

impl FitReport {
    pub fn from_chain(chain: &Chain, binned: &BinnedPattern, eta: Option<f64>) -> Result<Self> {
        let rep = dahl_select_chain(chain)?;
        let est = &chain.samples[rep];
        let surface = est.surface();
        let (_, posterior_mean) = posterior_means(chain, binned)?;
        let criteria = Criteria {
            dic: dic(chain, binned, rep)?,
            lpml: lpml(chain, binned)?,
            bic: bic(&surface, est.n_clusters(), binned)?,
        };
        Ok(Self {
            eta,
            grid: *binned.grid(),
            representative: rep,
            k_hat: est.n_clusters(),
            z_hat: est.z.clone(),
            lambda_hat: est.lambda.clone(),
            surface,
            posterior_mean,
            criteria,
            ri_trace: chain.ri_trace.clone(),
            k_trace: chain.k_trace.clone(),
            elapsed_secs: chain.elapsed_secs,
        })
    }
}

/// Picks the `eta` minimizing DIC or BIC, or maximizing LPML. Ties go to the
/// smaller `eta`.
pub fn select_eta(fits: &[(f64, Criteria)], criterion: Criterion) -> Result<f64> {
    select_index(fits, criterion).map(|i| fits[i].0)
}

/// Position in `fits` of the selected candidate.
pub fn select_index(fits: &[(f64, Criteria)], criterion: Criterion) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (eta, c)) in fits.iter().enumerate() {
        let loss = criterion.loss(c);
        best = match best {
            None => Some(i),
            Some(b) => {
                let (beta, bc) = &fits[b];
                let bl = criterion.loss(bc);
                if loss < bl || (loss == bl && eta < beta) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(Error::NoCandidates)
}

/// Criteria table as CSV: `eta,DIC,LPML,BIC,K_hat`.
pub fn write_criteria_csv<W: Write>(fits: &[&FitReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "DIC", "LPML", "BIC", "K_hat"])?;
    for f in fits {
        w.write_record([
            f.eta.map_or_else(String::new, |e| e.to_string()),
            f.criteria.dic.to_string(),
            f.criteria.lpml.to_string(),
            f.criteria.bic.to_string(),
            f.k_hat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
