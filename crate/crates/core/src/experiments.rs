//! Synthetic smooth truths, data generation, contraction-rate studies, and
//! the numerical verification suite for the supporting inequalities.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_discrete, build_boundary_sequence, periodic_spline_eval};
use crate::dyadic::{sample_tpt, strict_floor, TptParams};
use crate::error::{Error, Result};
use crate::kernel::{check_omega_identities, irwin_hall_pdf, KernelTable};
use crate::metrics::{distance_with_panels, EvaluableDensity, Metric};
use crate::posterior::{run_chain, ChainOptions, ChainTarget, Dataset};
use crate::priors::{cutoff_depth, AdaptiveSchedule, AdaptiveVariant, PriorConfig, PriorKind};
use crate::spline::{spline_map_density, SplineDensity};

/// Stable seed derivation: one master seed, one stream per (stage, index).
/// FNV-1a over the master bytes, the stage name, and the index; platform- and
/// run-independent.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for b in master
        .to_le_bytes()
        .into_iter()
        .chain(stage.bytes())
        .chain(index.to_le_bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Flavour of synthetic truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruthKind {
    /// Smoothness exactly `alpha`: the top derivative is a centred power cusp.
    Kink,
    /// Power cusp at x = 1/3 (alpha <= 1 only). The kink never lands on a
    /// dyadic knot, so spline approximation saturates the rate even at
    /// integer smoothness, where the centred cusp would be representable
    /// exactly.
    OffsetKink,
    /// Infinitely smooth cosine bump, usable at any nominal smoothness.
    Cosine,
    /// The flat density; lies in every model exactly.
    Uniform,
}

/// A closed-form density on [0, 1) with known smoothness, lower bound, and
/// antiderivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderTruth {
    pub alpha: f64,
    pub kind: TruthKind,
    /// Number of full derivatives below the cusp (kink flavour).
    k: u32,
    /// Residual exponent in (0, 1].
    beta: f64,
    /// Amplitude chosen so the minimum equals `rho`.
    c: f64,
    pub seminorm: f64,
    pub rho: f64,
}

impl HolderTruth {
    // Cusp profile and its sign convention: even k uses |2x-1|^{beta+k},
    // odd k carries the sign so that successive antiderivatives stay in
    // closed form.
    fn profile(&self, x: f64, j: u32) -> f64 {
        let t = 2.0 * x - 1.0;
        let p = t.abs().powf(self.beta + j as f64);
        if j % 2 == 1 {
            p * t.signum()
        } else {
            p
        }
    }

    fn profile_mean(&self) -> f64 {
        if self.k.is_multiple_of(2) {
            (self.beta + self.k as f64 + 1.0).recip()
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            TruthKind::Uniform => 1.0,
            TruthKind::Cosine => 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).cos(),
            TruthKind::Kink => 1.0 + self.c * (self.profile(x, self.k) - self.profile_mean()),
            TruthKind::OffsetKink => {
                1.0 + self.c * ((x - OFFSET_KINK_AT).abs().powf(self.beta) - offset_mean(self.beta))
            }
        }
    }

    /// Exact cumulative distribution on [0, 1].
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self.kind {
            TruthKind::Uniform => x,
            TruthKind::Cosine => {
                x + (2.0 * std::f64::consts::PI * x).sin() / (4.0 * std::f64::consts::PI)
            }
            TruthKind::Kink => {
                // Antiderivative of the profile: S_{k+1} / (2 (beta + k + 1)).
                let j = self.k + 1;
                let denom = 2.0 * (self.beta + self.k as f64 + 1.0);
                let at = |t: f64| self.profile(t, j) / denom;
                x + self.c * (at(x) - at(0.0) - self.profile_mean() * x)
            }
            TruthKind::OffsetKink => {
                let at = |t: f64| {
                    let d = t - OFFSET_KINK_AT;
                    d.abs().powf(self.beta + 1.0) * d.signum() / (self.beta + 1.0)
                };
                x + self.c * (at(x) - at(0.0) - offset_mean(self.beta) * x)
            }
        }
    }

    /// Exact mass of `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }
}

impl crate::metrics::Density<f64> for HolderTruth {
    fn eval(&self, x: f64) -> f64 {
        HolderTruth::eval(self, x)
    }
}

const OFFSET_KINK_AT: f64 = 1.0 / 3.0;

fn offset_mean(beta: f64) -> f64 {
    (OFFSET_KINK_AT.powf(beta + 1.0) + (1.0 - OFFSET_KINK_AT).powf(beta + 1.0)) / (beta + 1.0)
}

/// Build a truth of smoothness `alpha`: minimum 1/2, unit mass, closed-form
/// evaluator and antiderivative, recorded smoothness seminorm.
pub fn holder_density(alpha: f64, kind: TruthKind) -> HolderTruth {
    assert!(alpha > 0.0, "smoothness must be positive");
    match kind {
        TruthKind::Uniform => HolderTruth {
            alpha,
            kind,
            k: 0,
            beta: 1.0,
            c: 0.0,
            seminorm: 0.0,
            rho: 1.0,
        },
        TruthKind::Cosine => {
            let k = strict_floor(alpha).max(0) as u32;
            HolderTruth {
                alpha,
                kind,
                k,
                beta: 1.0,
                c: 0.5,
                seminorm: 0.5 * (2.0 * std::f64::consts::PI).powi(k as i32 + 1),
                rho: 0.5,
            }
        }
        TruthKind::OffsetKink => {
            assert!(alpha <= 1.0, "offset cusp supports alpha <= 1 only");
            let rho = 0.5;
            let c = (1.0 - rho) / offset_mean(alpha);
            HolderTruth {
                alpha,
                kind,
                k: 0,
                beta: alpha,
                c,
                seminorm: c,
                rho,
            }
        }
        TruthKind::Kink => {
            let k = strict_floor(alpha).max(0) as u32;
            let beta = alpha - k as f64;
            debug_assert!(beta > 0.0 && beta <= 1.0);
            let rho = 0.5;
            // Even k: the profile minimum is 0 and its mean is 1/(beta+k+1);
            // odd k: the profile spans [-1, 1] with zero mean.
            let c = if k.is_multiple_of(2) {
                (1.0 - rho) * (beta + k as f64 + 1.0)
            } else {
                1.0 - rho
            };
            // k-th derivative of the profile is 2^k prod_{j=1..k}(beta+j)
            // times the base cusp, whose beta-seminorm is 2^beta.
            let deriv_scale: f64 = (1..=k).map(|j| beta + j as f64).product::<f64>();
            let seminorm = c * 2f64.powi(k as i32) * deriv_scale * 2f64.powf(beta);
            HolderTruth {
                alpha,
                kind,
                k,
                beta,
                c,
                seminorm,
                rho,
            }
        }
    }
}

const CDF_TABLE_CELLS: usize = 1 << 16;

/// Inverse-CDF sampler on a tabulated cumulative with linear interpolation.
pub fn sample_data<G: Rng>(truth: &HolderTruth, n: usize, rng: &mut G) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let cells = CDF_TABLE_CELLS;
    let table: Vec<f64> = (0..=cells)
        .map(|j| truth.cdf(j as f64 / cells as f64))
        .collect();
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let j = table
            .partition_point(|&f| f <= u)
            .saturating_sub(1)
            .min(cells - 1);
        let span = table[j + 1] - table[j];
        let frac = if span > 0.0 {
            (u - table[j]) / span
        } else {
            0.0
        };
        let x = ((j as f64 + frac) / cells as f64).min(1.0 - f64::EPSILON);
        obs.push(x.max(0.0));
    }
    Dataset::new(obs)
}

/// Least-squares fit of a truth over the wrapped cardinal-spline basis at
/// depth `L`, order `m`: returns the coefficients and the interior sup error
/// (measured away from the `m`-cell edge bands).
pub fn spline_approx_oracle(
    truth: &HolderTruth,
    m: u32,
    depth: u32,
    table: &KernelTable,
) -> Result<(Vec<f64>, f64)> {
    if (m as f64 + 1.0) < truth.alpha {
        return Err(Error::Config(format!(
            "order m = {m} cannot approximate smoothness alpha = {}",
            truth.alpha
        )));
    }
    let _ = table;
    let cells = 1usize << depth;
    let scale = cells as f64;
    let lo = m as f64 / scale;
    let hi = 1.0 - m as f64 / scale;
    let points = cells << 6;

    // Normal equations of the sparse design: each point touches m+1 wrapped
    // basis functions.
    let mut gram = nalgebra::DMatrix::<f64>::zeros(cells, cells);
    let mut rhs = nalgebra::DVector::<f64>::zeros(cells);
    let mut active = vec![0usize; m as usize + 1];
    let mut weights = vec![0.0f64; m as usize + 1];
    for t in 0..points {
        let x = lo + (hi - lo) * (t as f64 + 0.5) / points as f64;
        let base = (scale * x).floor() as i64;
        for (slot, j) in (base - m as i64..=base).enumerate() {
            active[slot] = j.rem_euclid(cells as i64) as usize;
            weights[slot] = scale * irwin_hall_pdf(m + 1, scale * x - j as f64);
        }
        let y = truth.eval(x);
        for a in 0..=m as usize {
            rhs[active[a]] += weights[a] * y;
            for b in 0..=m as usize {
                gram[(active[a], active[b])] += weights[a] * weights[b];
            }
        }
    }
    // Wrapped basis functions supported entirely inside the edge bands never
    // touch an interior point; pin those coefficients to zero so the system
    // stays definite (they cannot influence the interior error).
    let trace_scale = (0..cells).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    for i in 0..cells {
        if gram[(i, i)] <= trace_scale * 1e-14 {
            for j in 0..cells {
                gram[(i, j)] = 0.0;
                gram[(j, i)] = 0.0;
            }
            gram[(i, i)] = 1.0;
            rhs[i] = 0.0;
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("rank-deficient spline design".into()))?;
    let coeffs: Vec<f64> = chol.solve(&rhs).iter().copied().collect();

    // Interior sup error on a finer, offset grid.
    let check = points * 2;
    let mut sup = 0.0f64;
    for t in 0..check {
        let x = lo + (hi - lo) * (t as f64 + 0.37) / check as f64;
        let fit = periodic_spline_eval(&coeffs, depth, m, x);
        sup = sup.max((truth.eval(x) - fit).abs());
    }
    Ok((coeffs, sup))
}

/// Least-squares slope and its standard error for `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    assert!(points.len() >= 2, "slope needs at least two points");
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if points.len() == 2 {
        return (slope, 0.0);
    }
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - my - slope * (p.0 - mx);
            r * r
        })
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

/// One cell of a rate study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub replicate: u32,
    pub prior: PriorKind,
    pub adaptive: bool,
    pub hellinger_error: f64,
    pub wall_seconds: f64,
    pub seed: u64,
    /// Posterior fraction within M eps_n of the truth for M in {1, 2, 4}.
    pub within_eps: [f64; 3],
    pub warnings: usize,
}

/// Outcome of a rate study: raw rows plus the fitted log-log slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    pub alpha: f64,
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub slope_se: f64,
    pub target_exponent: f64,
    /// Median error per sample size, ascending in `n`.
    pub medians: Vec<(u64, f64)>,
}

impl RateResult {
    /// Median errors strictly decrease with the sample size.
    pub fn errors_strictly_decreasing(&self) -> bool {
        self.medians.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// Knobs of a rate study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateOptions {
    pub prior: PriorKind,
    pub adaptive: bool,
    pub n_list: Vec<u64>,
    pub replicates: u32,
    pub master_seed: u64,
    pub iters: usize,
    pub burnin: usize,
    pub grid: usize,
    pub trees_cap: usize,
}

impl RateOptions {
    pub fn new(prior: PriorKind, n_list: Vec<u64>, replicates: u32, master_seed: u64) -> Self {
        Self {
            prior,
            adaptive: false,
            n_list,
            replicates,
            master_seed,
            iters: 4000,
            burnin: 1000,
            grid: 256,
            trees_cap: 1 << 13,
        }
    }
}

/// Fixed-depth configuration for a known smoothness: cutoff depth, order
/// strict_floor(alpha), capped tree count, logarithmic edge bound.
pub fn rate_optimal_config(
    prior: PriorKind,
    alpha: f64,
    n: u64,
    trees_cap: usize,
) -> Result<PriorConfig> {
    let m = strict_floor(alpha).max(0) as u32;
    let mut depth = cutoff_depth(n, alpha).max(1);
    // Feasibility clamps; the cutoff can undershoot them at tiny n.
    if m >= 1 {
        while (1u64 << (depth - 1)) <= m as u64 {
            depth += 1;
        }
    }
    if prior == PriorKind::Spt {
        while (1u64 << depth) <= 2 * m as u64 + 2 {
            depth += 1;
        }
    }
    let tpt = TptParams::constant(depth, 1.0)?;
    let u = (n as f64).ln();
    match prior {
        PriorKind::Dpa => PriorConfig::dpa(m, depth, (n as usize).min(trees_cap), u, tpt),
        PriorKind::Cpa => PriorConfig::cpa(m, depth, u, tpt),
        PriorKind::Spt => PriorConfig::spt(m, depth, (n as f64).sqrt().recip(), tpt),
    }
}

fn adaptive_variant(prior: PriorKind) -> AdaptiveVariant {
    match prior {
        PriorKind::Dpa => AdaptiveVariant::DpaDepth,
        PriorKind::Cpa => AdaptiveVariant::CpaDepth,
        PriorKind::Spt => AdaptiveVariant::SptDepth,
    }
}

/// Run the contraction study: for each sample size and replicate, draw data,
/// run the posterior chain, and record the Hellinger error of the posterior
/// mean against the truth; then fit the log-log slope.
pub fn rate_experiment(
    truth: &HolderTruth,
    opts: &RateOptions,
    table: &KernelTable,
) -> Result<RateResult> {
    if opts.n_list.len() < 2 || opts.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "rate studies need at least two increasing sample sizes".into(),
        ));
    }
    let cells: Vec<(usize, u64, u32)> = opts
        .n_list
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..opts.replicates).map(move |r| (i, n, r)))
        .collect();

    let rows: Result<Vec<RateRow>> = cells
        .par_iter()
        .map(|&(n_idx, n, rep)| run_rate_cell(truth, opts, table, n_idx, n, rep))
        .collect();
    let rows = rows?;

    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.hellinger_error.max(1e-12).ln()))
        .collect();
    let (slope, slope_se) = fit_slope(&points);

    let mut medians = Vec::with_capacity(opts.n_list.len());
    for &n in &opts.n_list {
        let mut errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.hellinger_error)
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push((n, errs[errs.len() / 2]));
    }

    Ok(RateResult {
        alpha: truth.alpha,
        rows,
        slope,
        slope_se,
        target_exponent: truth.alpha / (2.0 * truth.alpha + 1.0),
        medians,
    })
}

fn run_rate_cell(
    truth: &HolderTruth,
    opts: &RateOptions,
    table: &KernelTable,
    n_idx: usize,
    n: u64,
    rep: u32,
) -> Result<RateRow> {
    let start = Instant::now();
    let cell_index = (n_idx as u64) << 32 | rep as u64;
    let data_seed = derive_seed(opts.master_seed, "rate-data", cell_index);
    let chain_seed = derive_seed(opts.master_seed, "rate-chain", cell_index);
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let data = sample_data(truth, n as usize, &mut data_rng)?;

    let mut chain_opts = ChainOptions::new(opts.iters, opts.burnin, chain_seed);
    chain_opts.grid = opts.grid;
    chain_opts.mcmc_trees_cap = opts.trees_cap;

    let (trace, summary) = if opts.adaptive {
        let mut schedule = AdaptiveSchedule::new(adaptive_variant(opts.prior), n, 8);
        schedule.trees_cap = opts.trees_cap;
        run_chain(
            Some(&data),
            ChainTarget::Adaptive(&schedule),
            &chain_opts,
            table,
        )?
    } else {
        let config = rate_optimal_config(opts.prior, truth.alpha, n, opts.trees_cap)?;
        run_chain(Some(&data), ChainTarget::Fixed(&config), &chain_opts, table)?
    };

    let mean_grid = crate::aggregate::GridDensity::new(summary.mean.clone())?;
    let truth_eval = |x: f64| truth.eval(x);
    let error = distance_with_panels(
        Metric::Hellinger,
        &EvaluableDensity::Grid(&mean_grid),
        &EvaluableDensity::Analytic(&truth_eval),
        1 << 12,
    )?;

    // Posterior mass near the truth, judged cell-wise on the output grid.
    let g = opts.grid as f64;
    let truth_avg: Vec<f64> = (0..opts.grid)
        .map(|i| truth.mass(i as f64 / g, (i + 1) as f64 / g) * g)
        .collect();
    let eps = ((n as f64).ln() / n as f64).powf(truth.alpha / (2.0 * truth.alpha + 1.0));
    let mut within = [0usize; 3];
    for sample in &trace.density_samples {
        let h2: f64 = sample
            .iter()
            .zip(&truth_avg)
            .map(|(&v, &t)| {
                let d = v.max(0.0).sqrt() - t.max(0.0).sqrt();
                d * d / g
            })
            .sum();
        let h = h2.sqrt();
        for (slot, mult) in [1.0, 2.0, 4.0].iter().enumerate() {
            if h <= mult * eps {
                within[slot] += 1;
            }
        }
    }
    let total = trace.density_samples.len().max(1) as f64;

    Ok(RateRow {
        n,
        replicate: rep,
        prior: opts.prior,
        adaptive: opts.adaptive,
        hellinger_error: error,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: chain_seed,
        within_eps: [
            within[0] as f64 / total,
            within[1] as f64 / total,
            within[2] as f64 / total,
        ],
        warnings: summary.warnings.len(),
    })
}

/// One verified inequality family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest observed violation beyond tolerance (0 when none).
    pub worst_violation: f64,
    /// Smallest observed slack (bound minus value).
    pub min_slack: f64,
    /// Seed and instance of the first violation, when any.
    pub first_failure: Option<String>,
}

/// Report of the verification suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} trials={:<6} violations={:<3} min_slack={:+.3e}{}",
                c.name,
                c.trials,
                c.violations,
                c.min_slack,
                c.first_failure
                    .as_ref()
                    .map(|s| format!("  first: {s}"))
                    .unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

const LEMMA_TOL: f64 = 1e-9;

struct CheckAccumulator {
    name: &'static str,
    trials: usize,
    violations: usize,
    worst_violation: f64,
    min_slack: f64,
    first_failure: Option<String>,
}

impl CheckAccumulator {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            violations: 0,
            worst_violation: 0.0,
            min_slack: f64::INFINITY,
            first_failure: None,
        }
    }

    fn record(&mut self, slack: f64, seed: u64, instance: usize) {
        self.trials += 1;
        self.min_slack = self.min_slack.min(slack);
        if slack < -LEMMA_TOL {
            self.violations += 1;
            self.worst_violation = self.worst_violation.max(-slack);
            if self.first_failure.is_none() {
                self.first_failure = Some(format!("seed={seed} instance={instance}"));
            }
        }
    }

    fn finish(self) -> LemmaCheck {
        LemmaCheck {
            name: self.name.to_string(),
            trials: self.trials,
            violations: self.violations,
            worst_violation: self.worst_violation,
            min_slack: if self.min_slack.is_finite() {
                self.min_slack
            } else {
                0.0
            },
            first_failure: self.first_failure,
        }
    }
}

/// Run every inequality family on `trials` randomized instances each and
/// report the worst slack. Any violation beyond 1e-9 marks the report failed.
pub fn verify_lemmas(table: &KernelTable, seed: u64, trials: usize) -> Result<LemmaReport> {
    let trials = trials.max(1);
    let mut checks = Vec::new();

    // Exact algebraic identities of the cumulative weights.
    let mut omega = CheckAccumulator::new("omega-identities");
    match check_omega_identities(table) {
        Ok(()) => omega.record(0.0, seed, 0),
        Err(e) => {
            omega.record(-1.0, seed, 0);
            omega.first_failure = Some(e.to_string());
        }
    }
    checks.push(omega.finish());

    checks.push(unit_integral_check(table, seed, trials));
    checks.push(discretization_check(table, seed, trials));
    checks.push(hellinger_coefficient_check(table, seed, trials)?);
    checks.push(spline_map_hellinger_check(table, seed, trials)?);
    checks.push(polynomial_norm_check(seed, trials));

    Ok(LemmaReport {
        seed,
        checks: checks.into_iter().collect(),
    })
}

fn unit_integral_check(table: &KernelTable, seed: u64, trials: usize) -> LemmaCheck {
    let mut acc = CheckAccumulator::new("density-unit-integral");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lemma-integral", 0));
    for i in 0..trials {
        let depth = rng.gen_range(3..=6u32);
        let m = rng.gen_range(0..=4u32).min((1 << (depth - 1)) - 1);
        let params = TptParams::constant(depth, 1.0).unwrap();
        let draw = sample_tpt(&params, &mut rng).unwrap();
        let seq = build_boundary_sequence(&draw.theta, m, 10.0, table, &mut rng);
        match seq {
            // Slack is minus the gap: any gap beyond tolerance is a violation.
            Ok(seq) => {
                let gap: f64 = seq.integral_unit_interval() - 1.0;
                acc.record(-gap.abs(), seed, i)
            }
            Err(_) => acc.record(-1.0, seed, i),
        }
    }
    acc.finish()
}

fn discretization_check(table: &KernelTable, seed: u64, trials: usize) -> LemmaCheck {
    let mut acc = CheckAccumulator::new("discretization-bound");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lemma-discretization", 0));
    for i in 0..trials {
        let depth = rng.gen_range(3..=5u32);
        let m = rng.gen_range(1..=3u32);
        let q = 1usize << rng.gen_range(8..=12u32);
        let params = TptParams::constant(depth, 1.0).unwrap();
        let draw = sample_tpt(&params, &mut rng).unwrap();
        let seq = build_boundary_sequence(&draw.theta, m, 10.0, table, &mut rng).unwrap();
        let grid = aggregate_discrete(&seq, q).unwrap();
        let cells = (1u64 << depth) as f64;
        let height = seq.max_coeff() * cells;
        let breaks = cells + m as f64;
        let bound = m as f64 * height * (breaks / cells + 1.0) / q as f64;
        let mut sup = 0.0f64;
        for t in 0..4096 {
            let x = (t as f64 + 0.5) / 4096.0;
            sup = sup.max((seq.eval(x) - grid.eval(x)).abs());
        }
        acc.record(bound - sup, seed, i);
    }
    acc.finish()
}

fn hellinger_coefficient_check(
    table: &KernelTable,
    seed: u64,
    trials: usize,
) -> Result<LemmaCheck> {
    let mut acc = CheckAccumulator::new("hellinger-coefficient-bound");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lemma-hellinger", 0));
    for i in 0..trials {
        let depth = rng.gen_range(3..=5u32);
        let m = rng.gen_range(1..=3u32);
        let params = TptParams::constant(depth, 1.0).unwrap();
        let d1 = sample_tpt(&params, &mut rng).unwrap();
        let d2 = sample_tpt(&params, &mut rng).unwrap();
        let s1 = build_boundary_sequence(&d1.theta, m, 10.0, table, &mut rng)?;
        let s2 = build_boundary_sequence(&d2.theta, m, 10.0, table, &mut rng)?;
        let f1 = SplineDensity::from_boundary(&s1);
        let f2 = SplineDensity::from_boundary(&s2);
        let h = distance_with_panels(Metric::Hellinger, &(&f1).into(), &(&f2).into(), 1 << 12)?;
        let l2: f64 = s1
            .base()
            .iter()
            .zip(s2.base())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let bound = ((1u64 << depth) as f64 + m as f64).powf(0.25) * l2.sqrt();
        acc.record(bound - h, seed, i);
    }
    Ok(acc.finish())
}

fn spline_map_hellinger_check(table: &KernelTable, seed: u64, trials: usize) -> Result<LemmaCheck> {
    let _ = table;
    let mut acc = CheckAccumulator::new("spline-map-hellinger-bound");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lemma-spline-map", 0));
    for i in 0..trials {
        let depth = rng.gen_range(3..=5u32);
        let m = rng.gen_range(0..=2u32);
        let tau = rng.gen_range(0.05..1.0);
        let params = TptParams::constant(depth, 1.0).unwrap();
        let d1 = sample_tpt(&params, &mut rng).unwrap();
        let d2 = sample_tpt(&params, &mut rng).unwrap();
        let f1 = spline_map_density(&d1.theta, m, tau)?;
        let f2 = spline_map_density(&d2.theta, m, tau)?;
        let h = distance_with_panels(Metric::Hellinger, &(&f1).into(), &(&f2).into(), 1 << 12)?;
        // L2 distance between the tree histograms.
        let cells = (1u64 << depth) as f64;
        let l2: f64 = (d1
            .theta
            .iter()
            .zip(&d2.theta)
            .map(|(a, b)| {
                let d = (a - b) * cells;
                d * d / cells
            })
            .sum::<f64>())
        .sqrt();
        let mf = m as f64;
        let constant = 2.0
            * (1.0
                + (1.0 + 2.0 * (mf + 1.0).powi(3) * ((6.0 * (mf + 1.0)).sqrt() * mf).exp()).sqrt());
        let bound = constant * tau.powf(-0.5) * l2.sqrt();
        acc.record(bound - h, seed, i);
    }
    Ok(acc.finish())
}

fn polynomial_norm_check(seed: u64, trials: usize) -> LemmaCheck {
    let mut acc = CheckAccumulator::new("polynomial-norm-ratio");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lemma-polynomial", 0));
    let grid_sup = |coeffs: &[f64], lo: f64, hi: f64| -> f64 {
        let mut sup = 0.0f64;
        for t in 0..1024 {
            let x = lo + (hi - lo) * t as f64 / 1023.0;
            let v = coeffs.iter().rev().fold(0.0, |a, &c| a * x + c).abs();
            sup = sup.max(v);
        }
        sup
    };
    for i in 0..trials {
        let degree = rng.gen_range(0..=6usize);
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = [0.25, 0.5, 0.75][rng.gen_range(0..3usize)];
        let factor = ((6.0_f64 / s).sqrt() * degree as f64).exp();
        let lhs = grid_sup(&coeffs, 0.0, 1.0);
        let slack_left = factor * grid_sup(&coeffs, 0.0, s) - lhs;
        let slack_right = factor * grid_sup(&coeffs, 1.0 - s, 1.0) - lhs;
        acc.record(slack_left.min(slack_right), seed, i);
    }
    acc.finish()
}
