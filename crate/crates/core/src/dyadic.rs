//! Dyadic index arithmetic and truncated Polya tree sampling.
//!
//! A draw from the truncated tree at depth `L` is a set of Beta-distributed
//! split fractions, one per internal node, whose products down the tree give
//! the cell masses `theta[0..2^L]` of a histogram density on [0, 1).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{ln_gamma, Real};

/// Biggest integer strictly smaller than `x`: `strict_floor(2.0) == 1`.
///
/// Used for the Holder exponent only; everything else uses [`usual_floor`].
/// The two must never be aliased.
pub fn strict_floor(x: f64) -> i64 {
    let f = x.floor();
    if f == x {
        f as i64 - 1
    } else {
        f as i64
    }
}

/// The usual floor operator, as an integer.
pub fn usual_floor(x: f64) -> i64 {
    x.floor() as i64
}

/// Binary address of the dyadic cell `[k/2^l, (k+1)/2^l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicIndex {
    level: u32,
    position: u64,
}

impl DyadicIndex {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// The digits of `k 2^{-l}` in base 1/2, most significant first.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.level)
            .rev()
            .map(|j| ((self.position >> j) & 1) as u8)
            .collect()
    }

    /// Bits rendered as a 0/1 string, e.g. "101" for k=5, l=3.
    pub fn bit_string(&self) -> String {
        self.bits().iter().map(|b| char::from(b'0' + b)).collect()
    }

    /// Half-open cell `[k/2^l, (k+1)/2^l)`.
    pub fn interval(&self) -> (f64, f64) {
        let w = (self.level as f64).exp2().recip();
        (self.position as f64 * w, (self.position as f64 + 1.0) * w)
    }

    /// Reconstruct `k` from the bits (inverse of [`bits`](Self::bits)).
    pub fn position_from_bits(bits: &[u8]) -> u64 {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }
}

/// Dyadic decomposition of `k 2^{-l}`.
pub fn kappa(level: u32, position: u64) -> Result<DyadicIndex> {
    if level > 63 {
        return Err(Error::Domain(format!("level {level} too deep")));
    }
    if position >= 1u64 << level {
        return Err(Error::Domain(format!(
            "position {position} out of range for level {level}"
        )));
    }
    Ok(DyadicIndex { level, position })
}

/// Per-level Beta parameters of a truncated Polya tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TptParams<R: Real = f64> {
    depth: u32,
    /// `level_params[l-1]` is the (symmetric) Beta parameter at level `l`.
    level_params: Vec<R>,
    bounds: Option<LevelBounds<R>>,
}

/// Declared range `[delta (log n / n)^beta, r_cap]` for the level parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelBounds<R: Real = f64> {
    pub delta: R,
    pub beta: R,
    pub r_cap: R,
    pub n: u64,
}

impl<R: Real> LevelBounds<R> {
    pub fn lower(&self) -> R {
        let n = R::of(self.n as f64);
        self.delta * (n.ln() / n).powf(self.beta)
    }
}

impl<R: Real> TptParams<R> {
    /// Constant parameter `a` at every level.
    pub fn constant(depth: u32, a: R) -> Result<Self> {
        Self::new(depth, vec![a; depth as usize])
    }

    pub fn new(depth: u32, level_params: Vec<R>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("tree depth must be at least 1".into()));
        }
        if level_params.len() != depth as usize {
            return Err(Error::Config(format!(
                "expected {depth} level parameters, got {}",
                level_params.len()
            )));
        }
        for (l, &a) in level_params.iter().enumerate() {
            if !(a.is_finite() && a > R::zero()) {
                return Err(Error::Config(format!(
                    "level parameter a_{} = {a} must be finite and positive",
                    l + 1
                )));
            }
        }
        Ok(Self {
            depth,
            level_params,
            bounds: None,
        })
    }

    /// Attach (and check) declared bounds on the level parameters.
    pub fn with_bounds(mut self, bounds: LevelBounds<R>) -> Result<Self> {
        let lo = bounds.lower();
        for (l, &a) in self.level_params.iter().enumerate() {
            if a < lo || a > bounds.r_cap {
                return Err(Error::Config(format!(
                    "a_{} = {a} outside declared range [{lo}, {}]",
                    l + 1,
                    bounds.r_cap
                )));
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Beta parameter at level `l` (1-based; the level of the child node).
    pub fn level_param(&self, l: u32) -> R {
        self.level_params[(l - 1) as usize]
    }

    /// Number of internal nodes, `2^depth - 1`.
    pub fn internal_nodes(&self) -> usize {
        (1usize << self.depth) - 1
    }
}

/// A sampled truncated tree: left-split fractions in heap order plus the
/// induced cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct TptDraw<R: Real = f64> {
    /// `splits[2^{j-1} - 1 + p]` is Y_{kappa 0} for the internal node at
    /// level `j-1`, position `p` (level-major heap order).
    pub splits: Vec<R>,
    /// Cell masses at depth `L`; sums to one up to roundoff.
    pub theta: Vec<R>,
}

impl<R: Real> TptDraw<R> {
    /// Rebuild the cell masses from split fractions (also the constructor
    /// used by the posterior decode path).
    pub fn from_splits(depth: u32, splits: Vec<R>) -> Result<Self> {
        if splits.len() != (1usize << depth) - 1 {
            return Err(Error::Config(format!(
                "depth {depth} needs {} splits, got {}",
                (1usize << depth) - 1,
                splits.len()
            )));
        }
        let theta = theta_from_splits(depth, &splits);
        Ok(Self { splits, theta })
    }

    pub fn depth(&self) -> u32 {
        self.theta.len().trailing_zeros()
    }
}

/// Products of split fractions down the tree, breadth-first: O(2^L) total.
pub fn theta_from_splits<R: Real>(depth: u32, splits: &[R]) -> Vec<R> {
    let mut values = vec![R::one()];
    for level in 0..depth {
        let base = (1usize << level) - 1;
        let mut next = Vec::with_capacity(values.len() * 2);
        for (p, &v) in values.iter().enumerate() {
            let y = splits[base + p];
            next.push(v * y);
            next.push(v * (R::one() - y));
        }
        values = next;
    }
    values
}

/// Draw a truncated Polya tree: independent symmetric Beta splits per node.
///
/// Beta variates are formed as a ratio of two Gamma draws so the tiny shape
/// parameters admitted by the level bounds do not stall a rejection sampler.
pub fn sample_tpt<R: Real, G: Rng>(params: &TptParams<R>, rng: &mut G) -> Result<TptDraw<R>> {
    let mut splits = Vec::with_capacity(params.internal_nodes());
    for level in 1..=params.depth() {
        let a = params.level_param(level);
        for p in 0..(1u64 << (level - 1)) {
            let g0 = R::sample_gamma(a, rng).ok_or_else(|| {
                Error::Config(format!("invalid Beta parameter {a} at level {level}"))
            })?;
            let g1 = R::sample_gamma(a, rng).ok_or_else(|| {
                Error::Config(format!("invalid Beta parameter {a} at level {level}"))
            })?;
            let y = g0 / (g0 + g1);
            if !y.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite Beta draw at node level {level}, position {p} (a = {a})"
                )));
            }
            splits.push(y);
        }
    }
    Ok(TptDraw {
        theta: theta_from_splits(params.depth(), &splits),
        splits,
    })
}

/// Log prior density of a split configuration: the sum over internal nodes of
/// the symmetric Beta log-density at the stored left fraction.
///
/// Splits at exactly 0 or 1 return negative infinity.
pub fn tpt_log_prior<R: Real>(params: &TptParams<R>, splits: &[R]) -> R {
    debug_assert_eq!(splits.len(), params.internal_nodes());
    let mut total = R::zero();
    for level in 1..=params.depth() {
        let a = params.level_param(level);
        // log Beta(a, a) normalizer: 2 ln Gamma(a) - ln Gamma(2a).
        let ln_norm = R::of(2.0) * ln_gamma(a) - ln_gamma(R::of(2.0) * a);
        let base = (1usize << (level - 1)) - 1;
        for p in 0..(1usize << (level - 1)) {
            let y = splits[base + p];
            if y <= R::zero() || y >= R::one() {
                return R::neg_infinity();
            }
            total += (a - R::one()) * (y.ln() + (R::one() - y).ln()) - ln_norm;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn floors_are_distinct() {
        assert_eq!(strict_floor(2.0), 1);
        assert_eq!(usual_floor(2.0), 2);
        assert_eq!(strict_floor(1.5), 1);
        assert_eq!(usual_floor(1.5), 1);
        assert_eq!(strict_floor(0.5), 0);
        assert_eq!(strict_floor(1.0), 0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(2, 3).unwrap().bit_string(), "11");
        assert_eq!(kappa(3, 5).unwrap().bit_string(), "101");
        let (lo, hi) = kappa(2, 1).unwrap().interval();
        assert_eq!((lo, hi), (0.25, 0.5));
        assert!(kappa(2, 4).is_err());
    }

    #[test]
    fn kappa_round_trip_exhaustive() {
        for l in 0..=12u32 {
            for k in 0..(1u64 << l) {
                let idx = kappa(l, k).unwrap();
                assert_eq!(DyadicIndex::position_from_bits(&idx.bits()), k);
                // The bits really are the base-1/2 decomposition of k 2^{-l}.
                let r: f64 = idx
                    .bits()
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| b as f64 * 0.5f64.powi(j as i32 + 1))
                    .sum();
                assert_eq!(r, k as f64 / (1u64 << l) as f64);
            }
        }
    }

    #[test]
    fn depth_one_draw_is_single_split() {
        let params = TptParams::constant(1, 2.0_f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = sample_tpt(&params, &mut rng).unwrap();
        assert_eq!(draw.splits.len(), 1);
        assert_eq!(draw.theta, vec![draw.splits[0], 1.0 - draw.splits[0]]);
    }

    #[test]
    fn forced_symmetric_splits() {
        let draw = TptDraw::from_splits(2, vec![0.5_f64; 3]).unwrap();
        assert_eq!(draw.theta, vec![0.25; 4]);
    }

    #[test]
    fn theta_sums_to_one() {
        let params = TptParams::constant(6, 0.7_f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let draw = sample_tpt(&params, &mut rng).unwrap();
            let s: f64 = draw.theta.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_is_bitwise() {
        let params = TptParams::constant(5, 1.3_f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let draw = sample_tpt(&params, &mut rng).unwrap();
            let rebuilt = theta_from_splits(5, &draw.splits);
            assert_eq!(draw.theta, rebuilt);
        }
    }

    #[test]
    fn marginal_mean_is_symmetric() {
        // With constant a, E[theta_i] = 2^{-L}; check within 3 standard errors.
        let depth = 3u32;
        let params = TptParams::constant(depth, 0.8_f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reps = 100_000usize;
        let cells = 1usize << depth;
        let mut mean = vec![0.0f64; cells];
        let mut m2 = vec![0.0f64; cells];
        for _ in 0..reps {
            let draw = sample_tpt(&params, &mut rng).unwrap();
            for (i, &t) in draw.theta.iter().enumerate() {
                mean[i] += t;
                m2[i] += t * t;
            }
        }
        for i in 0..cells {
            let m = mean[i] / reps as f64;
            let var = m2[i] / reps as f64 - m * m;
            let se = (var / reps as f64).sqrt();
            assert!(
                (m - 1.0 / cells as f64).abs() <= 3.0 * se,
                "cell {i}: mean {m}, se {se}"
            );
        }
    }

    #[test]
    fn log_prior_examples() {
        // Beta(1,1) is uniform: zero log-density for any split configuration.
        let params = TptParams::constant(3, 1.0_f64).unwrap();
        let splits = vec![0.3_f64, 0.9, 0.1, 0.7, 0.5, 0.2, 0.6];
        assert_abs_diff_eq!(tpt_log_prior(&params, &splits), 0.0, epsilon = 1e-12);

        // Beta(2,2) density 6 t (1 - t) at t = 0.5 is 1.5.
        let params = TptParams::constant(1, 2.0_f64).unwrap();
        assert_abs_diff_eq!(
            tpt_log_prior(&params, &[0.5]),
            1.5_f64.ln(),
            epsilon = 1e-12
        );

        // Boundary split has zero density.
        assert_eq!(tpt_log_prior(&params, &[0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn seed_determinism() {
        let params = TptParams::constant(4, 1.0_f64).unwrap();
        let a = sample_tpt(&params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_tpt(&params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_validation() {
        let bounds = LevelBounds {
            delta: 0.5,
            beta: 1.0,
            r_cap: 2.0,
            n: 1000,
        };
        // lower = 0.5 * (ln 1000 / 1000) ~ 0.0035
        assert!(TptParams::constant(2, 1.0_f64)
            .unwrap()
            .with_bounds(bounds.clone())
            .is_ok());
        assert!(TptParams::constant(2, 3.0_f64)
            .unwrap()
            .with_bounds(bounds.clone())
            .is_err());
        assert!(TptParams::constant(2, 1e-5_f64)
            .unwrap()
            .with_bounds(bounds)
            .is_err());
    }
}
