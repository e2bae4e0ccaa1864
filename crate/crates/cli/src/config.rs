//! Run settings: a TOML file merged with command-line flags. Flags win.

use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::Args;
use mrfdpm::study::eta_range;
use mrfdpm::{Hyperparams, InitPolicy, SamplerConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    MrfDpm,
    Mfm,
}

/// `single`, `random` or `random:K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Init(pub InitPolicy);

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let default_k0 = match SamplerConfig::default().init {
            InitPolicy::RandomLabels { k0 } => k0,
            InitPolicy::SingleCluster => 10,
        };
        match s.split_once(':') {
            None if s == "single" => Ok(Init(InitPolicy::SingleCluster)),
            None if s == "random" => Ok(Init(InitPolicy::RandomLabels { k0: default_k0 })),
            Some(("random", k)) => match k.parse() {
                Ok(k0) if k0 >= 1 => Ok(Init(InitPolicy::RandomLabels { k0 })),
                _ => Err(format!("bad label count `{k}`")),
            },
            _ => Err(format!(
                "expected `single`, `random` or `random:K`, got `{s}`"
            )),
        }
    }
}

impl<'de> Deserialize<'de> for Init {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `start:stop:step` or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaGrid(pub Vec<f64>);

impl FromStr for EtaGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{t}`"))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [start, stop, step] => {
                eta_range(num(start)?, num(stop)?, num(step)?).map_err(|e| e.to_string())?
            }
            [list] => list
                .split(',')
                .map(num)
                .collect::<std::result::Result<_, _>>()?,
            _ => return Err(format!("expected start:stop:step or a list, got `{s}`")),
        };
        mrfdpm::study::validate_eta_grid(&values).map_err(|e| e.to_string())?;
        Ok(EtaGrid(values))
    }
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<Model>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub eta_grid: Option<Vec<f64>>,
    pub burn_in: Option<usize>,
    pub retained: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<Init>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Sampler flags shared by `fit` and `study`.
#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// TOML file with any of: model, a, b, alpha, gamma, eta_grid, burn_in,
    /// retained, thin, seed, init, nx, ny.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Smoothing values, `start:stop:step` or `v1,v2,...` [default: 0:8:0.5]
    #[arg(long)]
    pub eta_grid: Option<EtaGrid>,
    /// Gamma shape of the intensity prior [default: 1]
    #[arg(long)]
    pub a: Option<f64>,
    /// Gamma rate of the intensity prior [default: 1]
    #[arg(long)]
    pub b: Option<f64>,
    /// Concentration of the Dirichlet process [default: 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Dirichlet parameter of the MFM weights [default: 1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Discarded sweeps [default: 2000]
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sweeps after burn-in [default: 2000]
    #[arg(long)]
    pub retained: Option<usize>,
    /// Keep every `thin`-th sweep after burn-in [default: 10]
    #[arg(long)]
    pub thin: Option<usize>,
    /// Starting partition: `single`, `random` or `random:K` [default: random:10]
    #[arg(long)]
    pub init: Option<Init>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: Model,
    pub hyper: Hyperparams,
    pub gamma: f64,
    pub eta_grid: Vec<f64>,
    pub chain: SamplerConfig,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

pub struct Overrides {
    pub model: Option<Model>,
    pub seed: Option<u64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

pub fn resolve(args: &ChainArgs, over: Overrides) -> Result<Resolved> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let hd = Hyperparams::default();
    let cd = SamplerConfig::default();
    let hyper = Hyperparams::new(
        args.a.or(file.a).unwrap_or(hd.a),
        args.b.or(file.b).unwrap_or(hd.b),
        args.alpha.or(file.alpha).unwrap_or(hd.alpha),
        0.0,
    )?;
    let eta_grid = match (&args.eta_grid, file.eta_grid) {
        (Some(g), _) => g.0.clone(),
        (None, Some(g)) => {
            mrfdpm::study::validate_eta_grid(&g)?;
            g
        }
        (None, None) => eta_range(0.0, 8.0, 0.5)?,
    };
    let chain = SamplerConfig {
        burn_in: args.burn_in.or(file.burn_in).unwrap_or(cd.burn_in),
        retained: args.retained.or(file.retained).unwrap_or(cd.retained),
        thin: args.thin.or(file.thin).unwrap_or(cd.thin),
        seed: over.seed.or(file.seed).unwrap_or(cd.seed),
        init: args.init.or(file.init).map_or(cd.init, |i| i.0),
    };
    chain.validate()?;
    let gamma = args.gamma.or(file.gamma).unwrap_or(1.0);
    if !(gamma.is_finite() && gamma > 0.0) {
        anyhow::bail!("gamma must be positive, got {gamma}");
    }
    Ok(Resolved {
        model: over.model.or(file.model).unwrap_or(Model::MrfDpm),
        hyper,
        gamma,
        eta_grid,
        chain,
        nx: over.nx.or(file.nx),
        ny: over.ny.or(file.ny),
    })
}
