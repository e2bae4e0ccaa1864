//! Bayesian nonparametric estimation of piecewise-constant intensity surfaces
//! for spatial point patterns.
//!
//! The study region is tiled by a regular [`grid::Grid`]; each box carries a
//! constant intensity and boxes are clustered by a Dirichlet-process mixture
//! whose full conditionals are tilted by a Markov random field on the rook
//! neighbor graph ([`sampler`]). A mixture-of-finite-mixtures sampler
//! ([`mfm`]) is provided as a benchmark. Post-processing ([`inference`])
//! covers Dahl point estimates, the Rand index and DIC/LPML/BIC, which are
//! used to pick the smoothing parameter.

pub mod error;
pub mod grid;
pub mod heatmap;
pub mod inference;
pub mod ingest;
pub mod mfm;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
pub use grid::{BinnedPattern, Grid, NeighborGraph, PointPattern, StudyRegion};
pub use inference::{Criteria, Criterion, FitReport};
pub use sampler::{Chain, ChainSample, Hyperparams, InitPolicy, SamplerConfig, SamplerState};
