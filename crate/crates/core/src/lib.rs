//! Shifted Polya tree ensemble priors for Bayesian density estimation on
//! [0, 1).
//!
//! The crate builds densities in three related families:
//!
//! * **DPA** — a truncated Polya tree draw, boundary-corrected, pushed through
//!   a discrete shift-average with `q` shifts per cell and renormalized; the
//!   draws are histograms on a fine grid.
//! * **CPA** — the `q -> infinity` limit of the same construction: a periodic
//!   cardinal-spline density whose unit integral holds exactly by the
//!   coefficient normalization.
//! * **SPT** — the spline map applied directly to the tree draw, with the two
//!   edge pieces replaced by their polynomial continuations, floored at
//!   `tau > 0` and renormalized.
//!
//! On top of the samplers sit a Metropolis-within-Gibbs posterior sampler with
//! reversible-jump depth moves for the adaptive hierarchies, distance/
//! divergence metrics, and an experiment harness that checks the supporting
//! inequalities and the contraction behaviour at desk scale.
//!
//! The numerical core (`kernel`, `dyadic`, `aggregate`, `spline`, `metrics`,
//! `priors`) is generic over the scalar type via [`real::Real`], defaulting to
//! `f64`; the cumulative weights `omega(m, l)` are kept in exact rational
//! arithmetic. The posterior and experiment layers work in `f64`.
//!
//! ## Example: draw a prior, fit a posterior
//!
//! ```
//! use polya_forest::{
//!     distance, run_chain, sample_cpa, Dataset, KernelTable, Metric, PriorConfig, TptParams,
//! };
//! use polya_forest::metrics::EvaluableDensity;
//! use polya_forest::posterior::{ChainOptions, ChainTarget};
//! use rand::SeedableRng;
//!
//! let table = KernelTable::default();
//!
//! // One spline draw from the continuous-aggregation prior at depth 4.
//! let tpt = TptParams::constant(4, 1.0_f64)?;
//! let config = PriorConfig::cpa(2, 4, 8.0, tpt)?;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let draw = sample_cpa(&config, &table, &mut rng)?;
//! assert!((draw.mass(0.0, 1.0) - 1.0).abs() < 1e-12);
//!
//! // A short posterior run on a handful of observations.
//! let data = Dataset::new(vec![0.12, 0.25, 0.31, 0.47, 0.58, 0.64, 0.77, 0.89])?;
//! let tpt = TptParams::constant(2, 1.0)?;
//! let config = PriorConfig::dpa(0, 2, 1, 8.0, tpt)?;
//! let opts = ChainOptions { grid: 32, ..ChainOptions::new(400, 100, 42) };
//! let (_, summary) = run_chain(Some(&data), ChainTarget::Fixed(&config), &opts, &table)?;
//!
//! // The posterior mean is itself a density; compare it to the prior draw.
//! let mean = polya_forest::GridDensity::new(summary.mean.clone())?;
//! let h: f64 = distance(
//!     Metric::Hellinger,
//!     &EvaluableDensity::Grid(&mean),
//!     &EvaluableDensity::Spline(&draw),
//! )?;
//! assert!((0.0..=2f64.sqrt()).contains(&h));
//! # Ok::<(), polya_forest::Error>(())
//! ```

// `!(x > 0)` style guards are NaN-rejecting on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod metrics;
pub mod posterior;
pub mod priors;
pub mod real;
pub mod spline;

pub use aggregate::{aggregate_discrete, build_boundary_sequence, BoundarySequence, GridDensity};
pub use dyadic::{kappa, sample_tpt, strict_floor, tpt_log_prior, usual_floor, TptDraw, TptParams};
pub use error::{Error, Result};
pub use kernel::KernelTable;
pub use metrics::{distance, kl_and_v, Density, Metric};
pub use posterior::{run_chain, ChainState, Dataset, PosteriorSummary};
pub use priors::{
    cutoff_depth, depth_log_weight, sample_cpa, sample_dpa, sample_spt, xi, AdaptiveSchedule,
    AdaptiveVariant, PriorConfig, PriorKind,
};
pub use real::Real;
pub use spline::SplineDensity;

/// Single-precision aliases for the scalar-generic core types. Everything in
/// the crate defaults to `f64`.
pub type GridDensity32 = aggregate::GridDensity<f32>;
pub type SplineDensity32 = spline::SplineDensity<f32>;
pub type BoundarySequence32 = aggregate::BoundarySequence<f32>;
pub type TptParams32 = dyadic::TptParams<f32>;
pub type TptDraw32 = dyadic::TptDraw<f32>;
