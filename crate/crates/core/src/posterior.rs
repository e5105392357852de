//! Posterior computation: likelihood evaluation, Metropolis-within-Gibbs over
//! logit-reparameterized splits and boundary coordinates, reversible-jump
//! depth moves for the adaptive hierarchies, and posterior summaries.
//!
//! Sampling coordinates are logits: split fractions and the unit positions of
//! the edge values inside their conditional-uniform intervals. The acceptance
//! targets include the logit Jacobians, so the chain is invariant for the
//! prior in the original coordinates times the likelihood. Depth moves
//! propose all within-depth parameters fresh from the prior, which cancels
//! every within-depth term from the ratio.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_discrete, boundary_sequence_from_unit, GridDensity};
use crate::dyadic::{tpt_log_prior, TptDraw};
use crate::error::{Error, Result};
use crate::kernel::KernelTable;
use crate::metrics::Density;
use crate::priors::{AdaptiveSchedule, PriorConfig, PriorKind, SampledDensity};
use crate::spline::spline_map_density;
use rand::SeedableRng;

/// Observations on [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<f64>,
}

impl Dataset {
    pub fn new(observations: Vec<f64>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Data("dataset needs at least one observation".into()));
        }
        for (i, &x) in observations.iter().enumerate() {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::Data(format!("observation {i} = {x} outside [0, 1)")));
            }
        }
        Ok(Self { observations })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Sparse per-cell counts on a uniform grid, sorted by cell.
    pub fn cell_counts(&self, cells: usize) -> Vec<(usize, u32)> {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for &x in &self.observations {
            let c = ((x * cells as f64) as usize).min(cells - 1);
            *counts.entry(c).or_insert(0) += 1;
        }
        let mut out: Vec<(usize, u32)> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }
}

/// Sum of log density over the observations; negative infinity as soon as the
/// density vanishes at a data point.
pub fn log_likelihood<D: Density<f64>>(density: &D, data: &Dataset) -> f64 {
    let mut total = 0.0;
    for &x in data.observations() {
        let v = density.eval(x);
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += v.ln();
    }
    total
}

/// Count-weighted likelihood for piecewise-constant densities. Exact under
/// data duplication: doubling every observation doubles each count, and
/// scaling by two is exact in floating point.
pub fn log_likelihood_grid(density: &GridDensity, counts: &[(usize, u32)]) -> f64 {
    let mut total = 0.0;
    for &(cell, c) in counts {
        let v = density.values()[cell];
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += c as f64 * v.ln();
    }
    total
}

/// Likelihood evaluator that caches per-resolution cell counts of the data.
pub struct LikelihoodEval<'a> {
    data: Option<&'a Dataset>,
    counts: HashMap<usize, Vec<(usize, u32)>>,
}

impl<'a> LikelihoodEval<'a> {
    pub fn new(data: Option<&'a Dataset>) -> Self {
        Self {
            data,
            counts: HashMap::new(),
        }
    }

    pub fn log_lik(&mut self, density: &SampledDensity) -> f64 {
        let Some(data) = self.data else { return 0.0 };
        match density {
            SampledDensity::Grid(g) => {
                let counts = self
                    .counts
                    .entry(g.cells())
                    .or_insert_with(|| data.cell_counts(g.cells()));
                log_likelihood_grid(g, counts)
            }
            SampledDensity::Spline(s) => log_likelihood(s, data),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Per-depth random-walk step sizes, one per coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSizes {
    pub splits: Vec<f64>,
    pub edges: Vec<f64>,
}

/// Full MCMC state at the current depth.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub depth: u32,
    pub split_logits: Vec<f64>,
    pub edge_logits: Vec<f64>,
    /// Log prior in the sampling coordinates (Beta terms plus logit
    /// Jacobians); kept in sync with the coordinates.
    pub log_prior: f64,
    pub log_likelihood: f64,
    steps: HashMap<u32, StepSizes>,
}

impl ChainState {
    /// Draw an initial state from the prior of `config`.
    pub fn from_prior<G: Rng>(
        config: &PriorConfig,
        lik: &mut LikelihoodEval,
        trees_cap: usize,
        table: &KernelTable,
        rng: &mut G,
    ) -> Result<Self> {
        let (split_logits, edge_logits) = propose_from_prior(config, rng)?;
        let mut state = Self {
            depth: config.depth,
            split_logits,
            edge_logits,
            log_prior: 0.0,
            log_likelihood: 0.0,
            steps: HashMap::new(),
        };
        let (lp, density) = decode_state(&state, config, trees_cap, table)?;
        state.log_prior = lp;
        state.log_likelihood = lik.log_lik(&density);
        Ok(state)
    }

    pub fn step_sizes(&mut self) -> &mut StepSizes {
        let splits = self.split_logits.len();
        let edges = self.edge_logits.len();
        self.steps.entry(self.depth).or_insert_with(|| StepSizes {
            splits: vec![0.8; splits],
            edges: vec![0.8; edges],
        })
    }
}

/// Effective tree count used while evaluating the likelihood: order zero
/// makes the aggregation the identity, so a single copy suffices; otherwise
/// the configured count capped for tractability (the full count only
/// changes an O(1/q) discretization term).
pub fn effective_trees(config: &PriorConfig, cap: usize) -> usize {
    if config.order == 0 {
        1
    } else {
        config.trees.unwrap_or(1).min(cap.max(1))
    }
}

/// Decode the sampling coordinates into (log prior in those coordinates,
/// density). The boundary decode always lands in the currently legal
/// conditional-uniform interval.
pub fn decode_state(
    state: &ChainState,
    config: &PriorConfig,
    trees_cap: usize,
    table: &KernelTable,
) -> Result<(f64, SampledDensity)> {
    let splits: Vec<f64> = state.split_logits.iter().map(|&z| sigmoid(z)).collect();
    let mut log_prior = tpt_log_prior(&config.tpt, &splits);
    // Logit Jacobian: dy/dz = y (1 - y).
    for &y in &splits {
        if y <= 0.0 || y >= 1.0 {
            return Ok((
                f64::NEG_INFINITY,
                SampledDensity::Grid(GridDensity::new(vec![1.0]).expect("unit cell")),
            ));
        }
        log_prior += (y * (1.0 - y)).ln();
    }
    let draw = TptDraw::from_splits(config.depth, splits)?;

    let density = match config.kind {
        PriorKind::Spt => {
            let tau = config.floor_tau.expect("validated");
            SampledDensity::Spline(spline_map_density(&draw.theta, config.order, tau)?)
        }
        PriorKind::Dpa | PriorKind::Cpa => {
            let mut unit = Vec::with_capacity(state.edge_logits.len());
            for &z in &state.edge_logits {
                let w = sigmoid(z);
                if w <= 0.0 || w >= 1.0 {
                    return Ok((
                        f64::NEG_INFINITY,
                        SampledDensity::Grid(GridDensity::new(vec![1.0]).expect("unit cell")),
                    ));
                }
                // Uniform prior on w contributes only the Jacobian.
                log_prior += (w * (1.0 - w)).ln();
                unit.push(w);
            }
            let seq = boundary_sequence_from_unit(
                &draw.theta,
                config.order,
                config.u_bound.expect("validated"),
                table,
                &unit,
            )?;
            match config.kind {
                PriorKind::Dpa => {
                    let q = effective_trees(config, trees_cap);
                    SampledDensity::Grid(aggregate_discrete(&seq, q)?.normalized()?)
                }
                PriorKind::Cpa => {
                    SampledDensity::Spline(crate::spline::SplineDensity::from_boundary(&seq))
                }
                PriorKind::Spt => unreachable!(),
            }
        }
    };
    Ok((log_prior, density))
}

/// Fresh within-depth coordinates drawn from the prior, in logit space.
fn propose_from_prior<G: Rng>(config: &PriorConfig, rng: &mut G) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut split_logits = Vec::with_capacity(config.tpt.internal_nodes());
    for level in 1..=config.depth {
        let a = config.tpt.level_param(level);
        let gamma = Gamma::<f64>::new(a, 1.0)
            .map_err(|e| Error::Config(format!("invalid Beta parameter: {e}")))?;
        for _ in 0..(1u64 << (level - 1)) {
            let g0 = gamma.sample(rng);
            let g1 = gamma.sample(rng);
            let y = g0 / (g0 + g1);
            if !y.is_finite() || y <= 0.0 || y >= 1.0 {
                return Err(Error::Numeric(format!(
                    "degenerate Beta draw y = {y} at level {level} (a = {a})"
                )));
            }
            split_logits.push(logit(y));
        }
    }
    let edges = match config.kind {
        PriorKind::Spt => 0,
        _ => config.order as usize,
    };
    let edge_logits = (0..edges)
        .map(|_| {
            let w: f64 = rng.gen_range(f64::EPSILON..1.0);
            logit(w)
        })
        .collect();
    Ok((split_logits, edge_logits))
}

/// Metropolis acceptance: accept when log U < log_ratio. Non-finite ratios
/// other than +infinity reject.
pub(crate) fn metropolis_accept<G: Rng>(log_ratio: f64, rng: &mut G) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    u.ln() < log_ratio
}

/// Acceptance counters per move type.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MoveCounters {
    pub split_proposed: u64,
    pub split_accepted: u64,
    pub edge_proposed: u64,
    pub edge_accepted: u64,
    pub depth_proposed: u64,
    pub depth_accepted: u64,
}

/// Controls for one sweep: burn-in adaptation state and the likelihood cap.
pub struct SweepControl {
    pub adapting: bool,
    pub sweep: usize,
    pub trees_cap: usize,
    pub counters: MoveCounters,
}

impl SweepControl {
    pub fn new(trees_cap: usize) -> Self {
        Self {
            adapting: false,
            sweep: 0,
            trees_cap,
            counters: MoveCounters::default(),
        }
    }

    fn gain(&self) -> f64 {
        (self.sweep as f64 + 1.0).powf(-0.6)
    }
}

const TARGET_ACCEPTANCE: f64 = 0.44;

/// One Metropolis-within-Gibbs sweep: a Gaussian random-walk proposal per
/// coordinate, accepted against prior (with Jacobians) plus likelihood.
/// During burn-in the per-coordinate step sizes chase 44% acceptance by
/// Robbins-Monro and freeze afterwards.
pub fn mcmc_step<G: Rng>(
    state: &mut ChainState,
    lik: &mut LikelihoodEval,
    config: &PriorConfig,
    ctl: &mut SweepControl,
    table: &KernelTable,
    rng: &mut G,
) -> Result<()> {
    let n_splits = state.split_logits.len();
    let n_edges = state.edge_logits.len();
    let gain = ctl.gain();
    for c in 0..n_splits + n_edges {
        let is_split = c < n_splits;
        let sigma = {
            let steps = state.step_sizes();
            if is_split {
                steps.splits[c]
            } else {
                steps.edges[c - n_splits]
            }
        };
        let noise: f64 = StandardNormal.sample(rng);
        let old = if is_split {
            state.split_logits[c]
        } else {
            state.edge_logits[c - n_splits]
        };
        let proposal = old + sigma * noise;
        if is_split {
            state.split_logits[c] = proposal;
        } else {
            state.edge_logits[c - n_splits] = proposal;
        }
        let accepted = match decode_state(state, config, ctl.trees_cap, table) {
            Ok((lp, density)) => {
                let ll = lik.log_lik(&density);
                let log_ratio = lp + ll - state.log_prior - state.log_likelihood;
                if metropolis_accept(log_ratio, rng) {
                    state.log_prior = lp;
                    state.log_likelihood = ll;
                    true
                } else {
                    false
                }
            }
            // Non-finite proposal energy (infeasible decode): reject, count.
            Err(_) => false,
        };
        if !accepted {
            if is_split {
                state.split_logits[c] = old;
            } else {
                state.edge_logits[c - n_splits] = old;
            }
        }
        if is_split {
            ctl.counters.split_proposed += 1;
            ctl.counters.split_accepted += accepted as u64;
        } else {
            ctl.counters.edge_proposed += 1;
            ctl.counters.edge_accepted += accepted as u64;
        }
        if ctl.adapting {
            let delta = gain * ((accepted as u8 as f64) - TARGET_ACCEPTANCE);
            let steps = state.step_sizes();
            let s = if is_split {
                &mut steps.splits[c]
            } else {
                &mut steps.edges[c - n_splits]
            };
            if *s > 0.0 {
                *s = (*s * delta.exp()).clamp(1e-4, 100.0);
            }
        }
    }
    Ok(())
}

/// Outcome of one reversible-jump depth proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthOutcome {
    pub proposed: Option<u32>,
    pub log_ratio: Option<f64>,
    pub accepted: bool,
}

/// Propose depth +-1 (reflecting below the feasible range), redraw all
/// within-depth parameters from their prior, and accept with the ratio of
/// depth weights times likelihoods; the within-depth prior terms cancel
/// because the proposal is the prior.
pub fn depth_move<G: Rng>(
    state: &mut ChainState,
    lik: &mut LikelihoodEval,
    schedule: &AdaptiveSchedule,
    ctl: &mut SweepControl,
    table: &KernelTable,
    rng: &mut G,
) -> Result<DepthOutcome> {
    let l = state.depth;
    let up: bool = rng.gen_bool(0.5);
    let proposal = if up { l + 1 } else { l.wrapping_sub(1) };
    ctl.counters.depth_proposed += 1;
    if proposal < schedule.min_depth() || proposal > schedule.max_depth {
        return Ok(DepthOutcome {
            proposed: None,
            log_ratio: None,
            accepted: false,
        });
    }
    let config = schedule.config_at(proposal)?;
    let (split_logits, edge_logits) = match propose_from_prior(&config, rng) {
        Ok(v) => v,
        // Degenerate prior draw: reject and count, the chain stays put.
        Err(_) => {
            return Ok(DepthOutcome {
                proposed: Some(proposal),
                log_ratio: None,
                accepted: false,
            })
        }
    };
    let candidate = ChainState {
        depth: proposal,
        split_logits,
        edge_logits,
        log_prior: 0.0,
        log_likelihood: 0.0,
        steps: HashMap::new(),
    };
    let (lp, density) = decode_state(&candidate, &config, ctl.trees_cap, table)?;
    let ll = lik.log_lik(&density);
    let log_ratio =
        schedule.log_weight(proposal) + ll - schedule.log_weight(l) - state.log_likelihood;
    let accepted = metropolis_accept(log_ratio, rng);
    if accepted {
        state.depth = proposal;
        state.split_logits = candidate.split_logits;
        state.edge_logits = candidate.edge_logits;
        state.log_prior = lp;
        state.log_likelihood = ll;
        ctl.counters.depth_accepted += 1;
    }
    Ok(DepthOutcome {
        proposed: Some(proposal),
        log_ratio: Some(log_ratio),
        accepted,
    })
}

/// What the chain targets: one fixed-depth prior, or an adaptive hierarchy
/// with depth moves.
pub enum ChainTarget<'a> {
    Fixed(&'a PriorConfig),
    Adaptive(&'a AdaptiveSchedule),
}

/// Runtime options of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOptions {
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Output grid resolution for the posterior summary.
    pub grid: usize,
    pub credible_level: f64,
    /// Cap on stored density samples; the thinning stride follows from it.
    pub thin_target: usize,
    /// Likelihood-side cap on the tree count during MCMC.
    pub mcmc_trees_cap: usize,
}

impl ChainOptions {
    pub fn new(iters: usize, burnin: usize, seed: u64) -> Self {
        Self {
            iters,
            burnin,
            seed,
            grid: 256,
            credible_level: 0.9,
            thin_target: 1024,
            mcmc_trees_cap: 1 << 13,
        }
    }
}

/// Per-sweep scalar trace of a finished chain, plus the thinned density
/// samples recorded as cell averages on the output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub log_likelihood: Vec<f64>,
    pub depth: Vec<u32>,
    pub density_samples: Vec<Vec<f64>>,
}

/// Acceptance rates per move type; `edges`/`depth` absent when the run has no
/// such moves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub splits: f64,
    pub edges: Option<f64>,
    pub depth: Option<f64>,
}

/// Posterior summary on a fixed output grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub grid: usize,
    pub credible_level: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Post-burn-in depth occupancy, as fractions.
    pub depth_histogram: Vec<(u32, f64)>,
    pub acceptance: AcceptanceRates,
    pub ess_log_likelihood: f64,
    pub warnings: Vec<String>,
}

/// Effective sample size by the initial-positive-sequence rule on the
/// autocorrelation of the trace.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var: f64 = trace.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let max_lag = (n / 3).min(1000);
    let rho = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (trace[i] - mean) * (trace[i + lag] - mean);
        }
        s / (n as f64 * var)
    };
    let mut sum_pairs = 0.0;
    let mut lag = 1;
    while lag < max_lag {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_pairs)).min(n as f64)
}

/// Run one chain: a Metropolis-within-Gibbs sweep per iteration, plus one
/// depth move per sweep for adaptive targets. Densities are recorded as exact
/// cell averages on the output grid every thinning stride after burn-in.
pub fn run_chain(
    data: Option<&Dataset>,
    target: ChainTarget,
    opts: &ChainOptions,
    table: &KernelTable,
) -> Result<(ChainTrace, PosteriorSummary)> {
    if opts.iters <= opts.burnin {
        return Err(Error::Config(format!(
            "iterations ({}) must exceed burn-in ({})",
            opts.iters, opts.burnin
        )));
    }
    if opts.grid == 0 {
        return Err(Error::Config(
            "output grid must have at least one cell".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lik = LikelihoodEval::new(data);
    let mut ctl = SweepControl::new(opts.mcmc_trees_cap);

    let initial_config = match &target {
        ChainTarget::Fixed(c) => (*c).clone(),
        ChainTarget::Adaptive(s) => s.config_at(s.min_depth())?,
    };
    let mut config = initial_config;
    let mut state =
        ChainState::from_prior(&config, &mut lik, opts.mcmc_trees_cap, table, &mut rng)?;

    let kept = opts.iters - opts.burnin;
    let thin = (kept / opts.thin_target.max(1)).max(1);
    let mut trace = ChainTrace {
        log_likelihood: Vec::with_capacity(kept),
        depth: Vec::with_capacity(kept),
        density_samples: Vec::new(),
    };
    let mut stored: Vec<Vec<f64>> = Vec::with_capacity(kept / thin + 1);
    let mut depth_counts: HashMap<u32, u64> = HashMap::new();

    for sweep in 0..opts.iters {
        ctl.adapting = sweep < opts.burnin;
        ctl.sweep = sweep;
        mcmc_step(&mut state, &mut lik, &config, &mut ctl, table, &mut rng)?;
        if let ChainTarget::Adaptive(schedule) = &target {
            let before = state.depth;
            depth_move(&mut state, &mut lik, schedule, &mut ctl, table, &mut rng)?;
            if state.depth != before {
                config = schedule.config_at(state.depth)?;
            }
        }
        if sweep >= opts.burnin {
            trace.log_likelihood.push(state.log_likelihood);
            trace.depth.push(state.depth);
            *depth_counts.entry(state.depth).or_insert(0) += 1;
            if (sweep - opts.burnin).is_multiple_of(thin) {
                let (_, density) = decode_state(&state, &config, opts.mcmc_trees_cap, table)?;
                stored.push(cell_averages(&density, opts.grid));
            }
        }
    }

    let summary = summarize(
        &stored,
        &depth_counts,
        &ctl.counters,
        &trace,
        opts,
        kept as u64,
    );
    trace.density_samples = stored;
    Ok((trace, summary))
}

fn cell_averages(density: &SampledDensity, grid: usize) -> Vec<f64> {
    let g = grid as f64;
    (0..grid)
        .map(|i| density.mass(i as f64 / g, (i + 1) as f64 / g) * g)
        .collect()
}

fn summarize(
    stored: &[Vec<f64>],
    depth_counts: &HashMap<u32, u64>,
    counters: &MoveCounters,
    trace: &ChainTrace,
    opts: &ChainOptions,
    kept: u64,
) -> PosteriorSummary {
    let grid = opts.grid;
    let s = stored.len().max(1);
    let mut mean = vec![0.0f64; grid];
    for sample in stored {
        for (m, v) in mean.iter_mut().zip(sample) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= s as f64;
    }
    let gamma = opts.credible_level;
    let lo_q = (1.0 - gamma) / 2.0;
    let hi_q = 1.0 - lo_q;
    let mut lower = vec![0.0f64; grid];
    let mut upper = vec![0.0f64; grid];
    let mut column = vec![0.0f64; stored.len().max(1)];
    for cell in 0..grid {
        if stored.is_empty() {
            continue;
        }
        for (k, sample) in stored.iter().enumerate() {
            column[k] = sample[cell];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let last = column.len() - 1;
        let lo_idx = (lo_q * last as f64).floor() as usize;
        let hi_idx = (hi_q * last as f64).ceil() as usize;
        // Keep the band around the mean even for degenerate sample spreads.
        lower[cell] = column[lo_idx].min(mean[cell]);
        upper[cell] = column[hi_idx].max(mean[cell]);
    }

    let mut depth_histogram: Vec<(u32, f64)> = depth_counts
        .iter()
        .map(|(&l, &c)| (l, c as f64 / kept.max(1) as f64))
        .collect();
    depth_histogram.sort_unstable_by_key(|&(l, _)| l);

    let rate = |acc: u64, prop: u64| {
        if prop == 0 {
            None
        } else {
            Some(acc as f64 / prop as f64)
        }
    };
    let acceptance = AcceptanceRates {
        splits: rate(counters.split_accepted, counters.split_proposed).unwrap_or(1.0),
        edges: rate(counters.edge_accepted, counters.edge_proposed),
        depth: rate(counters.depth_accepted, counters.depth_proposed),
    };
    let mut warnings = Vec::new();
    if acceptance.splits < 0.05 {
        warnings.push(format!(
            "split-move acceptance {:.4} below 0.05",
            acceptance.splits
        ));
    }
    if let Some(e) = acceptance.edges {
        if e < 0.05 {
            warnings.push(format!("edge-move acceptance {e:.4} below 0.05"));
        }
    }
    if let Some(d) = acceptance.depth {
        if d < 0.05 {
            warnings.push(format!("depth-move acceptance {d:.4} below 0.05"));
        }
    }

    PosteriorSummary {
        grid,
        credible_level: gamma,
        mean,
        lower,
        upper,
        depth_histogram,
        acceptance,
        ess_log_likelihood: effective_sample_size(&trace.log_likelihood),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::TptParams;
    use crate::priors::AdaptiveVariant;
    use crate::real::kahan_sum;
    use approx::assert_abs_diff_eq;

    fn table() -> KernelTable {
        KernelTable::default()
    }

    fn dpa_config(depth: u32, m: u32, q: usize) -> PriorConfig {
        let tpt = TptParams::constant(depth, 1.0).unwrap();
        PriorConfig::dpa(m, depth, q, 10.0, tpt).unwrap()
    }

    #[test]
    fn log_likelihood_examples() {
        let data = Dataset::new(vec![0.1, 0.4, 0.9]).unwrap();
        let unif = GridDensity::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(log_likelihood(&unif, &data), 0.0);

        let single = Dataset::new(vec![0.25]).unwrap();
        let f = GridDensity::new(vec![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(log_likelihood(&f, &single), 2.0_f64.ln(), epsilon = 1e-15);

        let bad = Dataset::new(vec![0.75]).unwrap();
        assert_eq!(log_likelihood(&f, &bad), f64::NEG_INFINITY);

        assert!(Dataset::new(vec![1.0]).is_err());
        assert!(Dataset::new(vec![]).is_err());
    }

    #[test]
    fn duplication_doubles_log_likelihood_exactly() {
        let mut obs = vec![0.11, 0.52, 0.52, 0.87, 0.33];
        let data = Dataset::new(obs.clone()).unwrap();
        obs.extend_from_slice(data.observations());
        let doubled = Dataset::new(obs).unwrap();
        let g = GridDensity::new(vec![0.7, 1.9, 1.1, 0.3]).unwrap();
        let a = log_likelihood_grid(&g, &data.cell_counts(4));
        let b = log_likelihood_grid(&g, &doubled.cell_counts(4));
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn metropolis_rule_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(metropolis_accept(0.0, &mut rng));
        assert!(metropolis_accept(3.0, &mut rng));
        assert!(!metropolis_accept(f64::NAN, &mut rng));
        // P[accept | log-ratio = -1] = e^{-1}.
        let trials = 200_000u32;
        let hits = (0..trials)
            .filter(|_| metropolis_accept(-1.0, &mut rng))
            .count() as f64;
        let p = hits / trials as f64;
        let target = (-1.0f64).exp();
        let se = (target * (1.0 - target) / trials as f64).sqrt();
        assert!((p - target).abs() < 4.0 * se, "p = {p}, target = {target}");
    }

    #[test]
    fn zero_step_size_is_identity_and_accepts() {
        let config = dpa_config(2, 1, 8);
        let data = Dataset::new(vec![0.3, 0.6]).unwrap();
        let mut lik = LikelihoodEval::new(Some(&data));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state =
            ChainState::from_prior(&config, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
        {
            let steps = state.step_sizes();
            steps.splits.iter_mut().for_each(|s| *s = 0.0);
            steps.edges.iter_mut().for_each(|s| *s = 0.0);
        }
        let before_splits = state.split_logits.clone();
        let before_edges = state.edge_logits.clone();
        let mut ctl = SweepControl::new(1 << 13);
        mcmc_step(&mut state, &mut lik, &config, &mut ctl, &table(), &mut rng).unwrap();
        assert_eq!(state.split_logits, before_splits);
        assert_eq!(state.edge_logits, before_edges);
        let total = ctl.counters.split_proposed + ctl.counters.edge_proposed;
        let accepted = ctl.counters.split_accepted + ctl.counters.edge_accepted;
        assert_eq!(total, accepted);
    }

    #[test]
    fn caches_stay_coherent_over_random_moves() {
        let config = dpa_config(3, 2, 32);
        let data = Dataset::new(vec![0.12, 0.48, 0.73, 0.91, 0.05]).unwrap();
        let mut lik = LikelihoodEval::new(Some(&data));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state =
            ChainState::from_prior(&config, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
        let mut ctl = SweepControl::new(1 << 13);
        ctl.adapting = true;
        // 250 sweeps x (7 splits + 2 edges) > 10^3 individual moves.
        for sweep in 0..250 {
            ctl.sweep = sweep;
            mcmc_step(&mut state, &mut lik, &config, &mut ctl, &table(), &mut rng).unwrap();
        }
        let (lp, density) = decode_state(&state, &config, 1 << 13, &table()).unwrap();
        let ll = lik.log_lik(&density);
        assert_abs_diff_eq!(lp, state.log_prior, epsilon = 1e-9);
        assert_abs_diff_eq!(ll, state.log_likelihood, epsilon = 1e-9);
    }

    #[test]
    fn depth_move_reflects_at_the_lower_bound() {
        let schedule = AdaptiveSchedule::new(AdaptiveVariant::DpaDepth, 100, 4);
        let mut lik = LikelihoodEval::new(None);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = schedule.config_at(1).unwrap();
        let mut state =
            ChainState::from_prior(&config, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
        let mut ctl = SweepControl::new(1 << 13);
        let mut saw_reflection = false;
        for _ in 0..50 {
            let out = depth_move(
                &mut state,
                &mut lik,
                &schedule,
                &mut ctl,
                &table(),
                &mut rng,
            )
            .unwrap();
            if out.proposed.is_none() {
                assert!(!out.accepted);
                saw_reflection = true;
            }
            // Reset to depth 1 so downward proposals keep occurring.
            if state.depth != 1 {
                let cfg = schedule.config_at(1).unwrap();
                state =
                    ChainState::from_prior(&cfg, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
            }
        }
        assert!(saw_reflection);
    }

    #[test]
    fn depth_move_prior_ratio_matches_weights() {
        // Likelihood-free run: the upward log-ratio from depth 1 is exactly
        // the weight ratio, -6 log 2.
        let schedule = AdaptiveSchedule::new(AdaptiveVariant::DpaDepth, 100, 4);
        let mut lik = LikelihoodEval::new(None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = schedule.config_at(1).unwrap();
        let mut state =
            ChainState::from_prior(&config, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
        let mut ctl = SweepControl::new(1 << 13);
        let mut checked = false;
        for _ in 0..100 {
            let depth_before = state.depth;
            let out = depth_move(
                &mut state,
                &mut lik,
                &schedule,
                &mut ctl,
                &table(),
                &mut rng,
            )
            .unwrap();
            if depth_before == 1 && out.proposed == Some(2) {
                assert_abs_diff_eq!(
                    out.log_ratio.unwrap(),
                    -6.0 * std::f64::consts::LN_2,
                    epsilon = 1e-12
                );
                checked = true;
            }
            if state.depth != 1 {
                let cfg = schedule.config_at(1).unwrap();
                state =
                    ChainState::from_prior(&cfg, &mut lik, 1 << 13, &table(), &mut rng).unwrap();
            }
        }
        assert!(checked, "never proposed 1 -> 2");
    }

    #[test]
    fn run_chain_is_deterministic_and_ordered() {
        let config = dpa_config(2, 0, 4);
        let data = Dataset::new(vec![0.21, 0.34, 0.56, 0.77, 0.89, 0.02]).unwrap();
        let opts = ChainOptions {
            grid: 32,
            ..ChainOptions::new(400, 100, 42)
        };
        let (t1, s1) =
            run_chain(Some(&data), ChainTarget::Fixed(&config), &opts, &table()).unwrap();
        let (t2, s2) =
            run_chain(Some(&data), ChainTarget::Fixed(&config), &opts, &table()).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1.mean, s2.mean);
        // Credible band straddles the mean pointwise.
        for i in 0..s1.grid {
            assert!(s1.lower[i] <= s1.mean[i] && s1.mean[i] <= s1.upper[i]);
        }
        // The posterior mean is an average of exact densities.
        let integral: f64 = kahan_sum(s1.mean.iter().copied()) / s1.grid as f64;
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn spline_prior_chains_run_end_to_end() {
        // The spline decode paths (continuous aggregation and spline map)
        // share nothing with the histogram path past the tree draw; drive
        // both through a short chain.
        let data = Dataset::new(
            (0..120)
                .map(|i| (i as f64 + 0.37) / 120.0)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let tpt = TptParams::constant(3, 1.0).unwrap();
        let configs = [
            PriorConfig::cpa(1, 3, 8.0, tpt.clone()).unwrap(),
            PriorConfig::spt(1, 3, 0.05, tpt).unwrap(),
        ];
        for config in configs {
            let opts = ChainOptions {
                grid: 32,
                ..ChainOptions::new(600, 200, 77)
            };
            let (trace, summary) =
                run_chain(Some(&data), ChainTarget::Fixed(&config), &opts, &table()).unwrap();
            assert!(trace.log_likelihood.iter().all(|l| l.is_finite()));
            let integral: f64 = kahan_sum(summary.mean.iter().copied()) / summary.grid as f64;
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
            for i in 0..summary.grid {
                assert!(summary.lower[i] <= summary.mean[i]);
                assert!(summary.mean[i] <= summary.upper[i]);
            }
        }
    }

    #[test]
    fn ess_is_sane() {
        // White noise: ESS close to n.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let iid: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let ess = effective_sample_size(&iid);
        assert!(ess > 1000.0, "ess = {ess}");
        // A constant trace degenerates gracefully.
        assert_eq!(effective_sample_size(&vec![1.0; 500]), 500.0);
        // Strong positive correlation shrinks it.
        let mut corr = vec![0.0f64; 2000];
        for i in 1..2000 {
            corr[i] = 0.95 * corr[i - 1] + rng.gen::<f64>();
        }
        assert!(effective_sample_size(&corr) < 500.0);
    }
}
