//! Samplers for the three ensemble priors and the adaptive hierarchies.
//!
//! The fixed-depth samplers compose tree draw -> boundary correction ->
//! aggregation; the adaptive schedules put rapidly decaying weights on
//! the depth and derive the per-depth aggregation order from the sample size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_discrete, build_boundary_sequence, GridDensity};
use crate::dyadic::{sample_tpt, TptParams};
use crate::error::{Error, Result};
use crate::kernel::KernelTable;
use crate::real::Real;
use crate::spline::{spline_map_density, SplineDensity};

/// Which ensemble prior a configuration describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    /// Discrete aggregation: histogram draws on a fine grid of `q 2^L` cells.
    Dpa,
    /// Continuous aggregation: periodic-spline draws with exact unit mass.
    Cpa,
    /// Spline map with polynomial edge continuations and a positive floor.
    Spt,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Dpa => "dpa",
            PriorKind::Cpa => "cpa",
            PriorKind::Spt => "spt",
        }
    }
}

/// Fully resolved configuration of one fixed-depth prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig<R: Real = f64> {
    pub kind: PriorKind,
    pub order: u32,
    pub depth: u32,
    /// Number of trees `q`; discrete aggregation only.
    pub trees: Option<usize>,
    /// Edge bound `U`; discrete and continuous aggregation.
    pub u_bound: Option<R>,
    /// Density floor `tau`; spline map only.
    pub floor_tau: Option<R>,
    pub tpt: TptParams<R>,
    /// Exponent `zeta` in the adaptive tree count `n^{1+zeta}`.
    pub trees_exponent: f64,
}

impl<R: Real> PriorConfig<R> {
    pub fn dpa(
        order: u32,
        depth: u32,
        trees: usize,
        u_bound: R,
        tpt: TptParams<R>,
    ) -> Result<Self> {
        if trees == 0 {
            return Err(Error::Config("tree count q must be at least 1".into()));
        }
        let cfg = Self {
            kind: PriorKind::Dpa,
            order,
            depth,
            trees: Some(trees),
            u_bound: Some(u_bound),
            floor_tau: None,
            tpt,
            trees_exponent: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cpa(order: u32, depth: u32, u_bound: R, tpt: TptParams<R>) -> Result<Self> {
        let cfg = Self {
            kind: PriorKind::Cpa,
            order,
            depth,
            trees: None,
            u_bound: Some(u_bound),
            floor_tau: None,
            tpt,
            trees_exponent: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spt(order: u32, depth: u32, floor_tau: R, tpt: TptParams<R>) -> Result<Self> {
        let cfg = Self {
            kind: PriorKind::Spt,
            order,
            depth,
            trees: None,
            u_bound: None,
            floor_tau: Some(floor_tau),
            tpt,
            trees_exponent: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tpt.depth() != self.depth {
            return Err(Error::Config(format!(
                "tree parameters are for depth {}, prior says {}",
                self.tpt.depth(),
                self.depth
            )));
        }
        match self.kind {
            PriorKind::Dpa | PriorKind::Cpa => {
                if self.order as u64 >= 1u64 << self.depth {
                    return Err(Error::Config(format!(
                        "aggregation order m={} leaves no interior cell at depth L={}",
                        self.order, self.depth
                    )));
                }
                let u = self.u_bound.ok_or_else(|| {
                    Error::Config("aggregation priors need the edge bound U".into())
                })?;
                if !(u > R::zero()) {
                    return Err(Error::Config("edge bound U must be positive".into()));
                }
                if self.kind == PriorKind::Dpa && self.trees.is_none() {
                    return Err(Error::Config(
                        "discrete aggregation needs the tree count q".into(),
                    ));
                }
                if self.floor_tau.is_some() {
                    return Err(Error::Config(
                        "tau applies to the spline-map prior only".into(),
                    ));
                }
            }
            PriorKind::Spt => {
                let tau = self
                    .floor_tau
                    .ok_or_else(|| Error::Config("spline-map prior needs the floor tau".into()))?;
                if !(tau > R::zero()) {
                    return Err(Error::Config("floor tau must be positive".into()));
                }
                if (1u64 << self.depth) <= 2 * self.order as u64 + 2 {
                    return Err(Error::Config(format!(
                        "spline map needs 2^L > 2m + 2 (L={}, m={})",
                        self.depth, self.order
                    )));
                }
                if self.trees.is_some() || self.u_bound.is_some() {
                    return Err(Error::Config(
                        "tree count and edge bound do not apply to the spline-map prior".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A density drawn from one of the priors.
#[derive(Debug, Clone, PartialEq)]
pub enum SampledDensity<R: Real = f64> {
    Grid(GridDensity<R>),
    Spline(SplineDensity<R>),
}

impl<R: Real> SampledDensity<R> {
    pub fn eval(&self, x: R) -> R {
        match self {
            SampledDensity::Grid(g) => g.eval(x),
            SampledDensity::Spline(s) => s.eval(x),
        }
    }

    pub fn mass(&self, a: R, b: R) -> R {
        match self {
            SampledDensity::Grid(g) => g.mass(a, b),
            SampledDensity::Spline(s) => s.mass(a, b),
        }
    }
}

/// Draw from the discrete-aggregation prior: tree, boundary correction,
/// `m` shift-average passes on the fine grid, exact renormalization.
pub fn sample_dpa<R: Real, G: Rng>(
    config: &PriorConfig<R>,
    table: &KernelTable,
    rng: &mut G,
) -> Result<GridDensity<R>> {
    debug_assert_eq!(config.kind, PriorKind::Dpa);
    let draw = sample_tpt(&config.tpt, rng)?;
    let seq = build_boundary_sequence(
        &draw.theta,
        config.order,
        config.u_bound.expect("validated"),
        table,
        rng,
    )?;
    aggregate_discrete(&seq, config.trees.expect("validated"))?.normalized()
}

/// Draw from the continuous-aggregation prior; the result integrates to one
/// exactly, no renormalization happens.
pub fn sample_cpa<R: Real, G: Rng>(
    config: &PriorConfig<R>,
    table: &KernelTable,
    rng: &mut G,
) -> Result<SplineDensity<R>> {
    debug_assert!(matches!(config.kind, PriorKind::Cpa | PriorKind::Dpa));
    let draw = sample_tpt(&config.tpt, rng)?;
    let seq = build_boundary_sequence(
        &draw.theta,
        config.order,
        config.u_bound.expect("validated"),
        table,
        rng,
    )?;
    Ok(SplineDensity::from_boundary(&seq))
}

/// Draw from the spline-map prior.
pub fn sample_spt<R: Real, G: Rng>(
    config: &PriorConfig<R>,
    _table: &KernelTable,
    rng: &mut G,
) -> Result<SplineDensity<R>> {
    debug_assert_eq!(config.kind, PriorKind::Spt);
    let draw = sample_tpt(&config.tpt, rng)?;
    spline_map_density(
        &draw.theta,
        config.order,
        config.floor_tau.expect("validated"),
    )
}

/// Draw from any configured prior.
pub fn sample_prior<R: Real, G: Rng>(
    config: &PriorConfig<R>,
    table: &KernelTable,
    rng: &mut G,
) -> Result<SampledDensity<R>> {
    Ok(match config.kind {
        PriorKind::Dpa => SampledDensity::Grid(sample_dpa(config, table, rng)?),
        PriorKind::Cpa => SampledDensity::Spline(sample_cpa(config, table, rng)?),
        PriorKind::Spt => SampledDensity::Spline(sample_spt(config, table, rng)?),
    })
}

/// Per-depth aggregation order `xi(l, n)`: half the base-2 magnitude of
/// `n / log n` spread over `l` levels, floored and clamped at zero.
pub fn xi(l: u32, n: u64) -> u32 {
    assert!(l >= 1, "depth must be at least 1");
    assert!(n >= 2, "sample size must be at least 2");
    let nf = n as f64;
    let ratio = nf / nf.ln();
    assert!(ratio > 1.0, "n / log n must exceed 1");
    let v = 0.5 * (ratio.log2() / l as f64 - 1.0);
    v.floor().max(0.0) as u32
}

/// Depth cutoff for a known smoothness: the closest integer to the solution
/// of `2^x = (n / log n)^{1/(2 alpha + 1)}`; half-cases round up.
pub fn cutoff_depth(n: u64, alpha: f64) -> u32 {
    assert!(n >= 3, "sample size must be at least 3");
    assert!(alpha > 0.0, "smoothness must be positive");
    let nf = n as f64;
    let x = (nf / nf.ln()).log2() / (2.0 * alpha + 1.0);
    (x + 0.5).floor().max(0.0) as u32
}

/// Which adaptive hierarchy is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptiveVariant {
    /// Discrete aggregation with depth weights `2^{-l 2^l}`.
    DpaDepth,
    /// Continuous aggregation with depth weights `2^{-l 2^l}`.
    CpaDepth,
    /// Spline map with depth weights `2^{-l^{3/2} 2^l}`.
    SptDepth,
}

impl AdaptiveVariant {
    pub fn kind(self) -> PriorKind {
        match self {
            AdaptiveVariant::DpaDepth => PriorKind::Dpa,
            AdaptiveVariant::CpaDepth => PriorKind::Cpa,
            AdaptiveVariant::SptDepth => PriorKind::Spt,
        }
    }
}

/// Unnormalized log weight of depth `l` under a variant's depth prior.
/// Only ratios are ever used; the normalizer stays implicit.
pub fn depth_log_weight(l: u32, variant: AdaptiveVariant) -> f64 {
    let lf = l as f64;
    let scale = match variant {
        AdaptiveVariant::DpaDepth | AdaptiveVariant::CpaDepth => lf,
        AdaptiveVariant::SptDepth => lf.powf(1.5),
    };
    -scale * lf.exp2() * std::f64::consts::LN_2
}

/// Deterministic schedule of an adaptive run: depth weights plus the derived
/// per-depth configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub variant: AdaptiveVariant,
    pub n: u64,
    pub max_depth: u32,
    /// Constant Beta parameter reused at every level of every depth.
    pub level_a: f64,
    /// Cap on the tree count; the full `n^{1+zeta}` is recorded as capped
    /// whenever it exceeds this.
    pub trees_cap: usize,
    pub trees_exponent: f64,
}

impl AdaptiveSchedule {
    pub fn new(variant: AdaptiveVariant, n: u64, max_depth: u32) -> Self {
        Self {
            variant,
            n,
            max_depth,
            level_a: 1.0,
            trees_cap: 1 << 13,
            trees_exponent: 0.0,
        }
    }

    /// Smallest depth the variant can realize. The spline map requires
    /// `2^l > 2m + 2`, which rules out depth 1 even at order zero.
    pub fn min_depth(&self) -> u32 {
        match self.variant {
            AdaptiveVariant::DpaDepth | AdaptiveVariant::CpaDepth => 1,
            AdaptiveVariant::SptDepth => 2,
        }
    }

    /// Aggregation order at depth `l`: `xi(l, n)` clamped to what the maps can
    /// support at that depth.
    pub fn order_at(&self, l: u32) -> u32 {
        let raw = xi(l, self.n);
        let cap = match self.variant {
            // 2^(l-1) > m
            AdaptiveVariant::DpaDepth | AdaptiveVariant::CpaDepth => (1u64 << (l - 1)) - 1,
            // 2^l > 2m + 2
            AdaptiveVariant::SptDepth => ((1u64 << l).saturating_sub(3)) / 2,
        };
        raw.min(cap as u32)
    }

    /// Tree count `n^{1+zeta}`, capped for tractability.
    pub fn trees(&self) -> usize {
        let ideal = (self.n as f64).powf(1.0 + self.trees_exponent);
        if ideal >= self.trees_cap as f64 {
            self.trees_cap
        } else {
            ideal.round() as usize
        }
    }

    pub fn trees_capped(&self) -> bool {
        (self.n as f64).powf(1.0 + self.trees_exponent) >= self.trees_cap as f64
    }

    /// The conditional prior at depth `l`.
    pub fn config_at(&self, l: u32) -> Result<PriorConfig> {
        if l < self.min_depth() || l > self.max_depth {
            return Err(Error::Config(format!(
                "depth {l} outside the schedule range {}..={}",
                self.min_depth(),
                self.max_depth
            )));
        }
        let m = self.order_at(l);
        let tpt = TptParams::constant(l, self.level_a)?;
        let u = (self.n as f64).ln();
        match self.variant {
            AdaptiveVariant::DpaDepth => PriorConfig::dpa(m, l, self.trees(), u, tpt),
            AdaptiveVariant::CpaDepth => PriorConfig::cpa(m, l, u, tpt),
            AdaptiveVariant::SptDepth => {
                PriorConfig::spt(m, l, (self.n as f64).sqrt().recip(), tpt)
            }
        }
    }

    /// Log weight of depth `l`, shared with the reversible-jump move.
    pub fn log_weight(&self, l: u32) -> f64 {
        depth_log_weight(l, self.variant)
    }

    /// Depth prior restricted to the feasible range, normalized.
    pub fn normalized_weights(&self) -> Vec<(u32, f64)> {
        let lo = self.min_depth();
        let logs: Vec<f64> = (lo..=self.max_depth).map(|l| self.log_weight(l)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|w| (w - m).exp()).sum();
        logs.iter()
            .enumerate()
            .map(|(i, w)| (lo + i as u32, (w - m).exp() / total))
            .collect()
    }

    /// Draw a depth from the (normalized, truncated) depth prior.
    pub fn sample_depth<G: Rng>(&self, rng: &mut G) -> u32 {
        let weights = self.normalized_weights();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (l, w) in &weights {
            acc += w;
            if u < acc {
                return *l;
            }
        }
        weights.last().expect("nonempty range").0
    }

    /// Joint draw: depth from the depth prior, then the conditional prior.
    pub fn sample<G: Rng>(
        &self,
        table: &KernelTable,
        rng: &mut G,
    ) -> Result<(u32, SampledDensity)> {
        let l = self.sample_depth(rng);
        let config = self.config_at(l)?;
        Ok((l, sample_prior(&config, table, rng)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> KernelTable {
        KernelTable::default()
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi(5, 1_000_000), 1);
        assert_eq!(xi(8, 1_000_000), 0);
        assert_eq!(xi(60, 1_000_000), 0);
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_depth(1_000_000, 1.0), 5);
        assert_eq!(cutoff_depth(1_000_000, 0.5), 8);
        assert_eq!(cutoff_depth(6, 50.0), 0); // sanity: never negative
    }

    #[test]
    fn depth_weight_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(
            depth_log_weight(1, AdaptiveVariant::DpaDepth),
            -2.0 * ln2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            depth_log_weight(2, AdaptiveVariant::DpaDepth),
            -8.0 * ln2,
            epsilon = 1e-15
        );
        let ratio = (depth_log_weight(2, AdaptiveVariant::DpaDepth)
            - depth_log_weight(1, AdaptiveVariant::DpaDepth))
        .exp();
        assert_abs_diff_eq!(ratio, 2f64.powi(-6), epsilon = 1e-15);
        assert_abs_diff_eq!(
            depth_log_weight(2, AdaptiveVariant::SptDepth),
            -(2f64.powf(1.5)) * 4.0 * ln2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_dpa_is_the_tree_histogram() {
        let tpt = TptParams::constant(3, 1.0).unwrap();
        let config = PriorConfig::dpa(0, 3, 1, 5.0, tpt.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = sample_dpa(&config, &table(), &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draw = sample_tpt(&tpt, &mut rng).unwrap();
        assert_eq!(g.cells(), 8);
        for (&v, &t) in g.values().iter().zip(&draw.theta) {
            assert_abs_diff_eq!(v, t * 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dpa_draws_are_densities() {
        let tpt = TptParams::constant(4, 0.9).unwrap();
        let config = PriorConfig::dpa(2, 4, 128, 10.0, tpt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let g = sample_dpa(&config, &table(), &mut rng).unwrap();
            assert!(g.values().iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unbounded_edge_draws_stay_below_factorial_bound() {
        // With U effectively infinite every coefficient is at most (m+1)!.
        let m = 3u32;
        let tpt = TptParams::constant(4, 0.5).unwrap();
        let config = PriorConfig::cpa(m, 4, 1e18, tpt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bound = (1..=m as u64 + 1).product::<u64>() as f64;
        for _ in 0..50 {
            let d = sample_cpa(&config, &table(), &mut rng).unwrap();
            for &u in d.coeffs() {
                assert!(u <= bound + 1e-12, "coefficient {u} above {bound}");
            }
        }
    }

    #[test]
    fn cpa_draws_integrate_to_one() {
        for (depth, m) in [(3u32, 0u32), (4, 2), (5, 4)] {
            let tpt = TptParams::constant(depth, 1.0).unwrap();
            let config = PriorConfig::cpa(m, depth, 12.0, tpt).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(depth as u64);
            for _ in 0..10 {
                let d = sample_cpa(&config, &table(), &mut rng).unwrap();
                assert_abs_diff_eq!(d.mass(0.0, 1.0), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn order_zero_cpa_is_the_tree_histogram() {
        let tpt = TptParams::constant(3, 1.0).unwrap();
        let config = PriorConfig::cpa(0, 3, 5.0, tpt.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = sample_cpa(&config, &table(), &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = sample_tpt(&tpt, &mut rng).unwrap();
        for i in 0..64 {
            let x = (i as f64 + 0.41) / 64.0;
            let cell = (8.0 * x).floor() as usize;
            assert_abs_diff_eq!(d.eval(x), draw.theta[cell] * 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dpa_matches_cpa_within_discretization_bound() {
        // Same seed, so both run on the same boundary-corrected sequence.
        let depth = 4u32;
        let m = 2u32;
        let q = 1 << 13;
        let tpt = TptParams::constant(depth, 1.0).unwrap();
        let dpa_cfg = PriorConfig::dpa(m, depth, q, 10.0, tpt.clone()).unwrap();
        let cpa_cfg = PriorConfig::cpa(m, depth, 10.0, tpt).unwrap();
        let t = table();
        let grid = sample_dpa(&dpa_cfg, &t, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let spline = sample_cpa(&cpa_cfg, &t, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let cells = (1u64 << depth) as f64;
        let max_u = spline.coeffs().iter().cloned().fold(0.0, f64::max);
        let breaks = cells + m as f64;
        let bound = m as f64 * (max_u * cells) * (breaks / cells + 1.0) / q as f64;
        // The discrete draw is renormalized; fold the integral factor into the
        // comparison tolerance.
        let renorm_slack = 2.0 * bound * cells * max_u;
        for i in 0..2000 {
            let x = (i as f64 + 0.5) / 2000.0;
            let gap = (grid.eval(x) - spline.eval(x)).abs();
            assert!(
                gap <= bound + renorm_slack + 1e-12,
                "x={x} gap={gap} bound={bound}"
            );
        }
    }

    #[test]
    fn seed_determinism_bytes() {
        let tpt = TptParams::constant(4, 1.0).unwrap();
        let config = PriorConfig::dpa(1, 4, 64, 8.0, tpt).unwrap();
        let t = table();
        let a = sample_dpa(&config, &t, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = sample_dpa(&config, &t, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let tpt = TptParams::constant(2, 1.0).unwrap();
        // No interior cell left: m = 2^L.
        assert!(PriorConfig::dpa(4, 2, 4, 5.0, tpt.clone()).is_err());
        // SPT needs 2^L > 2m + 2
        assert!(PriorConfig::spt(1, 2, 0.1, tpt.clone()).is_err());
        assert!(PriorConfig::spt(0, 2, 0.0, tpt).is_err());
    }

    #[test]
    fn schedule_orders_respect_feasibility() {
        for variant in [
            AdaptiveVariant::DpaDepth,
            AdaptiveVariant::CpaDepth,
            AdaptiveVariant::SptDepth,
        ] {
            let s = AdaptiveSchedule::new(variant, 8000, 8);
            for l in s.min_depth()..=8 {
                let cfg = s.config_at(l).unwrap();
                cfg.validate().unwrap();
                assert!(cfg.order <= xi(l, 8000));
            }
            assert!(s.config_at(0).is_err());
            assert!(s.config_at(9).is_err());
        }
    }

    #[test]
    fn schedule_weights_normalize_and_sample() {
        let s = AdaptiveSchedule::new(AdaptiveVariant::DpaDepth, 2000, 6);
        let w = s.normalized_weights();
        let total: f64 = w.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        // Depth 1 carries 1/(1 + 2^-6 + ...) ~ 0.9846 of the prior.
        assert!(w[0].1 > 0.98, "depth 1 dominates: {:?}", w);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (l, d) = s.sample(&table(), &mut rng).unwrap();
        assert!((1..=6).contains(&l));
        assert_abs_diff_eq!(d.mass(0.0, 1.0), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn trees_cap_is_recorded() {
        let mut s = AdaptiveSchedule::new(AdaptiveVariant::DpaDepth, 100_000, 6);
        s.trees_exponent = 0.5;
        assert!(s.trees_capped());
        assert_eq!(s.trees(), 1 << 13);
        let small = AdaptiveSchedule::new(AdaptiveVariant::DpaDepth, 100, 6);
        assert!(!small.trees_capped());
        assert_eq!(small.trees(), 100);
    }
}
