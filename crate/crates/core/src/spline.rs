//! Periodic cardinal-spline densities and the spline-map prior construction.
//!
//! A continuous aggregation of a tree histogram is a spline of order `m + 1`
//! with knots on the dyadic grid; this module wraps such splines as densities
//! on [0, 1). Two flavours exist: the boundary-corrected aggregation (exact
//! unit integral by construction) and the spline-map density, which replaces
//! the two edge regions by the polynomial continuations of the adjacent
//! pieces, floors at `tau > 0`, and renormalizes.

use serde::{Deserialize, Serialize};

use crate::aggregate::{periodic_spline_eval, BoundarySequence};
use crate::error::{Error, Result};
use crate::kernel::irwin_hall_cdf;
use crate::real::{kahan_sum, Real};

/// Gauss-Legendre 5-point rule on [-1, 1]; exact through degree 9, which
/// covers every polynomial piece handled here (m <= 8).
const GL5_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// Edge pieces of a spline-map density: each polynomial is stored by its
/// monomial coefficients in the local coordinate of its defining cell
/// (the cell mapped affinely onto [-1, 1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgePolys<R: Real = f64> {
    lower: Vec<R>,
    upper: Vec<R>,
    tau: R,
    normalizer: R,
}

/// Spline density on [0, 1): either a boundary-corrected aggregation or a
/// spline-map (floored, renormalized) density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineDensity<R: Real = f64> {
    depth: u32,
    order: u32,
    coeffs: Vec<R>,
    edge: Option<EdgePolys<R>>,
}

impl<R: Real> SplineDensity<R> {
    /// The continuous aggregation of a boundary-corrected sequence; its unit
    /// integral is exact, no renormalization happens.
    pub fn from_boundary(seq: &BoundarySequence<R>) -> Self {
        Self {
            depth: seq.depth(),
            order: seq.order(),
            coeffs: seq.base().to_vec(),
            edge: None,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// One period of spline coefficients (`2^L + m` for the aggregation
    /// flavour, `2^L` for the spline map).
    pub fn coeffs(&self) -> &[R] {
        &self.coeffs
    }

    pub fn floor_tau(&self) -> Option<R> {
        self.edge.as_ref().map(|e| e.tau)
    }

    pub fn normalizer(&self) -> R {
        self.edge.as_ref().map_or(R::one(), |e| e.normalizer)
    }

    /// Monomial coefficients (local coordinates) of the two edge polynomials.
    pub fn boundary_polynomials(&self) -> Option<(&[R], &[R])> {
        self.edge
            .as_ref()
            .filter(|e| !e.lower.is_empty())
            .map(|e| (e.lower.as_slice(), e.upper.as_slice()))
    }

    /// The smoothing map alone: the periodic spline through the stored
    /// coefficients, before any edge replacement, positive part, or floor.
    pub fn smoothed_eval(&self, x: R) -> R {
        periodic_spline_eval(&self.coeffs, self.depth, self.order, x)
    }

    /// The spline with edge regions swapped for their polynomial
    /// continuations (the identity when no edge pieces are attached).
    pub fn extended_eval(&self, x: R) -> R {
        let Some(edge) = &self.edge else {
            return self.smoothed_eval(x);
        };
        if edge.lower.is_empty() {
            return self.smoothed_eval(x);
        }
        let cells = R::of((1u64 << self.depth) as f64);
        let m = R::of(self.order as f64);
        if x < m / cells {
            poly_eval(&edge.lower, self.lower_local(x))
        } else if x >= R::one() - m / cells {
            poly_eval(&edge.upper, self.upper_local(x))
        } else {
            self.smoothed_eval(x)
        }
    }

    /// Density value at `x` in [0, 1).
    pub fn eval(&self, x: R) -> R {
        match &self.edge {
            None => self.smoothed_eval(x),
            Some(e) => (self.extended_eval(x).max(R::zero()) + e.tau) / e.normalizer,
        }
    }

    // Local coordinate of the lower defining cell [m 2^-L, (m+1) 2^-L).
    fn lower_local(&self, x: R) -> R {
        let cells = R::of((1u64 << self.depth) as f64);
        let m = R::of(self.order as f64);
        R::of(2.0) * (cells * x - m) - R::one()
    }

    // Local coordinate of the upper defining cell [1-(m+1)2^-L, 1-m 2^-L).
    fn upper_local(&self, x: R) -> R {
        let cells = R::of((1u64 << self.depth) as f64);
        let m = R::of(self.order as f64);
        R::of(2.0) * (cells * (x - R::one()) + m + R::one()) - R::one()
    }

    /// Integral of the density over `[a, b]` inside the unit interval. Exact
    /// (cumulative-kernel sums) for the aggregation flavour; panel quadrature
    /// with sign-change clipping for the spline map.
    pub fn mass(&self, a: R, b: R) -> R {
        let a = a.max(R::zero());
        let b = b.min(R::one());
        if b <= a {
            return R::zero();
        }
        match &self.edge {
            None => {
                let scale = R::of((1u64 << self.depth) as f64);
                let p = self.coeffs.len() as i64;
                let ya = (scale * a).as_f64();
                let yb = (scale * b).as_f64();
                let lo = ya.floor() as i64 - self.order as i64;
                let hi = yb.ceil() as i64;
                let n = self.order + 1;
                let mut terms = Vec::with_capacity((hi - lo + 1) as usize);
                for j in lo..=hi {
                    let c = self.coeffs[j.rem_euclid(p) as usize];
                    let fa = irwin_hall_cdf(n, scale * a - R::of(j as f64));
                    let fb = irwin_hall_cdf(n, scale * b - R::of(j as f64));
                    terms.push(c * (fb - fa));
                }
                kahan_sum(terms)
            }
            Some(e) => {
                let clipped = self.clipped_extended_integral(a, b, 16);
                (clipped + e.tau * (b - a)) / e.normalizer
            }
        }
    }

    /// Integral of `max(extended, 0)` over `[a, b]`, splitting at knots and
    /// bisecting sign changes between panel endpoints.
    fn clipped_extended_integral(&self, a: R, b: R, panels_per_cell: usize) -> R {
        let cells = 1u64 << self.depth;
        let width = R::of(cells as f64).recip();
        let mut total = Vec::new();
        let first = (a / width).as_f64().floor() as u64;
        for k in first..cells {
            let lo = R::of(k as f64) * width;
            if lo >= b {
                break;
            }
            let x0 = lo.max(a);
            let x1 = (lo + width).min(b);
            if x1 <= x0 {
                continue;
            }
            total.push(clipped_integral(
                |x| self.extended_eval(x),
                x0,
                x1,
                panels_per_cell,
            ));
        }
        kahan_sum(total)
    }
}

fn poly_eval<R: Real>(coeffs: &[R], t: R) -> R {
    coeffs.iter().rev().fold(R::zero(), |acc, &c| acc * t + c)
}

/// Integral of `max(f, 0)` over `[a, b]` where `f` is polynomial on the
/// interval: fixed panels, bisection at sign changes, Gauss-Legendre 5 on the
/// sign-constant parts.
pub(crate) fn clipped_integral<R: Real>(f: impl Fn(R) -> R, a: R, b: R, panels: usize) -> R {
    let h = (b - a) / R::of(panels as f64);
    let mut acc = Vec::with_capacity(panels);
    let mut left = a;
    let mut f_left = f(left);
    for p in 0..panels {
        let right = if p + 1 == panels {
            b
        } else {
            a + h * R::of(p as f64 + 1.0)
        };
        let f_right = f(right);
        if f_left >= R::zero() && f_right >= R::zero() {
            acc.push(gl5(&f, left, right));
        } else if f_left < R::zero() && f_right < R::zero() {
            // wholly clipped
        } else {
            let root = bisect_root(&f, left, right, f_left);
            if f_left >= R::zero() {
                acc.push(gl5(&f, left, root));
            } else {
                acc.push(gl5(&f, root, right));
            }
        }
        left = right;
        f_left = f_right;
    }
    kahan_sum(acc)
}

fn gl5<R: Real>(f: &impl Fn(R) -> R, a: R, b: R) -> R {
    let half = (b - a) * R::of(0.5);
    let mid = (a + b) * R::of(0.5);
    let mut s = R::zero();
    for (n, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
        s += R::of(w) * f(mid + half * R::of(*n));
    }
    s * half
}

fn bisect_root<R: Real>(f: &impl Fn(R) -> R, mut lo: R, mut hi: R, f_lo: R) -> R {
    let lo_positive = f_lo >= R::zero();
    let tol = R::of(1e-10) * (hi - lo);
    while hi - lo > tol {
        let mid = (lo + hi) * R::of(0.5);
        if (f(mid) >= R::zero()) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * R::of(0.5)
}

/// Interpolate `f` on `deg + 1` Chebyshev nodes of [-1, 1] and return the
/// monomial coefficients. Newton divided differences expanded in place;
/// condition stays benign for the degrees used here.
fn chebyshev_fit<R: Real>(f: impl Fn(R) -> R, deg: usize) -> Vec<R> {
    let n = deg + 1;
    let nodes: Vec<R> = (0..n)
        .map(|k| R::of(((2 * k + 1) as f64 * std::f64::consts::PI / (2.0 * n as f64)).cos()))
        .collect();
    let mut dd: Vec<R> = nodes.iter().map(|&t| f(t)).collect();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - j]);
        }
    }
    // Horner expansion of the Newton form into monomials:
    // out <- out * (t - nodes[i]) + dd[i], highest term first.
    let mut out = vec![R::zero(); n];
    out[0] = dd[n - 1];
    for (deg, i) in (0..n - 1).rev().enumerate() {
        for k in (0..=deg).rev() {
            let v = out[k];
            out[k + 1] += v;
            out[k] = -nodes[i] * v;
        }
        out[0] += dd[i];
    }
    out
}

/// The spline-map density: smooth the tree masses (`period 2^L`), continue
/// the two edge pieces polynomially, take the positive part, add the floor
/// `tau`, and divide by the exact integral of the result.
pub fn spline_map_density<R: Real>(theta: &[R], order: u32, tau: R) -> Result<SplineDensity<R>> {
    let n = theta.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::Config(format!(
            "tree masses must number a power of two, got {n}"
        )));
    }
    let depth = n.trailing_zeros();
    let m = order as usize;
    if n <= 2 * m + 2 {
        return Err(Error::Config(format!(
            "spline map needs 2^L > 2m + 2 (got 2^{depth} cells, m = {m})"
        )));
    }
    if !(tau > R::zero() && tau.is_finite()) {
        return Err(Error::Config(format!("floor tau = {tau} must be positive")));
    }

    let mut density = SplineDensity {
        depth,
        order,
        coeffs: theta.to_vec(),
        edge: None,
    };

    let (lower, upper) = if m == 0 {
        (Vec::new(), Vec::new())
    } else {
        let cells = R::of(n as f64);
        let width = cells.recip();
        let mf = R::of(m as f64);
        // Defining cells: [m 2^-L, (m+1) 2^-L) and its mirror image.
        let lo_mid = (mf + R::of(0.5)) * width;
        let hi_mid = R::one() - (mf + R::of(0.5)) * width;
        let half = width * R::of(0.5);
        let lower = chebyshev_fit(|t| density.smoothed_eval(lo_mid + half * t), m);
        let upper = chebyshev_fit(|t| density.smoothed_eval(hi_mid + half * t), m);
        (lower, upper)
    };

    density.edge = Some(EdgePolys {
        lower,
        upper,
        tau,
        normalizer: R::one(),
    });
    let clipped = density.clipped_extended_integral(R::zero(), R::one(), 64);
    let normalizer = clipped + tau;
    assert!(
        normalizer > R::zero(),
        "spline-map normalizer must be positive (tau > 0)"
    );
    if let Some(e) = density.edge.as_mut() {
        e.normalizer = normalizer;
    }
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::build_boundary_sequence;
    use crate::dyadic::{sample_tpt, TptParams};
    use crate::kernel::KernelTable;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_boundary(depth: u32, m: u32, seed: u64) -> BoundarySequence {
        let t = KernelTable::default();
        let params = TptParams::constant(depth, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = sample_tpt(&params, &mut rng).unwrap();
        build_boundary_sequence(&draw.theta, m, 10.0, &t, &mut rng).unwrap()
    }

    #[test]
    fn chebyshev_fit_recovers_polynomials() {
        let coeffs = chebyshev_fit(|t: f64| 2.0 - t + 3.0 * t * t, 2);
        assert_abs_diff_eq!(coeffs[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs[2], 3.0, epsilon = 1e-12);
        // Degree-5 round trip at off-node points.
        let p = [0.3, -1.2, 0.0, 2.5, -0.7, 0.09];
        let fitted = chebyshev_fit(|t: f64| poly_eval(&p, t), 5);
        for i in 0..30 {
            let t = -1.0 + 2.0 * i as f64 / 29.0;
            assert_abs_diff_eq!(poly_eval(&fitted, t), poly_eval(&p, t), epsilon = 1e-10);
        }
    }

    #[test]
    fn clipped_integral_of_known_line() {
        // f(x) = x - 1/2 on [0, 1]: positive part integrates to 1/8.
        let v = clipped_integral(|x: f64| x - 0.5, 0.0, 1.0, 64);
        assert_abs_diff_eq!(v, 0.125, epsilon = 1e-10);
        // Parabola with two roots: x^2 - 1/4 on [-1, 1], positive part 1/3.
        let v = clipped_integral(|x: f64| x * x - 0.25, -1.0, 1.0, 64);
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn cpa_mass_is_exact_unit() {
        for seed in 0..10u64 {
            let seq = random_boundary(4, 2, seed);
            let d = SplineDensity::from_boundary(&seq);
            assert_abs_diff_eq!(d.mass(0.0, 1.0), 1.0, epsilon = 1e-12);
            // Additivity of the exact mass.
            let split = d.mass(0.0, 0.37) + d.mass(0.37, 1.0);
            assert_abs_diff_eq!(split, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_tree_maps_to_uniform_density() {
        let theta = vec![1.0 / 16.0; 16];
        for m in 0..=3u32 {
            let d = spline_map_density(&theta, m, 0.5).unwrap();
            for i in 0..100 {
                let x = i as f64 / 100.0;
                assert_abs_diff_eq!(d.eval(x), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn spline_map_is_floored_and_normalized() {
        let params = TptParams::constant(4, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let draw = sample_tpt(&params, &mut rng).unwrap();
            let tau = 0.2;
            let d = spline_map_density(&draw.theta, 2, tau).unwrap();
            let floor = tau / d.normalizer();
            for i in 0..200 {
                let x = i as f64 / 200.0;
                assert!(d.eval(x) >= floor - 1e-12);
            }
            assert_abs_diff_eq!(d.mass(0.0, 1.0), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn edge_polynomials_match_source_cells() {
        let params = TptParams::constant(5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let draw = sample_tpt(&params, &mut rng).unwrap();
        let m = 3u32;
        let d = spline_map_density(&draw.theta, m, 0.1).unwrap();
        let (p1, p2) = d.boundary_polynomials().unwrap();
        assert_eq!(p1.len(), m as usize + 1);
        assert_eq!(p2.len(), m as usize + 1);
        let cells = 32.0;
        for k in 0..50 {
            let f = (k as f64 + 0.5) / 50.0;
            let x1 = (m as f64 + f) / cells;
            let x2 = 1.0 - (m as f64 + 1.0) / cells + f / cells;
            assert_abs_diff_eq!(d.extended_eval(x1), d.smoothed_eval(x1), epsilon = 1e-9);
            assert_abs_diff_eq!(d.extended_eval(x2), d.smoothed_eval(x2), epsilon = 1e-9);
        }
    }

    #[test]
    fn interior_agrees_with_smoothed_plus_floor() {
        let params = TptParams::constant(5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let draw = sample_tpt(&params, &mut rng).unwrap();
        let m = 2u32;
        let tau = 0.3;
        let d = spline_map_density(&draw.theta, m, tau).unwrap();
        let z = d.normalizer();
        let lo = (m as f64 + 1.0) / 32.0;
        let hi = 1.0 - (m as f64 + 1.0) / 32.0;
        for k in 0..100 {
            let x = lo + (hi - lo) * k as f64 / 100.0;
            let a1 = d.smoothed_eval(x);
            assert!(a1 >= 0.0);
            assert_abs_diff_eq!(d.eval(x), (a1 + tau) / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn spline_map_rejects_shallow_trees() {
        let theta = vec![0.25; 4];
        assert!(spline_map_density(&theta, 1, 0.1).is_err());
        assert!(spline_map_density(&[1.0 / 16.0; 16], 1, 0.0).is_err());
    }

    #[test]
    fn spt_mass_consistent_with_quadrature() {
        let params = TptParams::constant(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let draw = sample_tpt(&params, &mut rng).unwrap();
        let d = spline_map_density(&draw.theta, 2, 0.05).unwrap();
        // Midpoint rule on a fine grid.
        let n = 1 << 14;
        let quad: f64 = (0..n)
            .map(|i| d.eval((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(d.mass(0.0, 1.0), quad, epsilon = 1e-5);
        assert_abs_diff_eq!(
            d.mass(0.1, 0.4) + d.mass(0.4, 0.9),
            d.mass(0.1, 0.9),
            epsilon = 1e-10
        );
    }
}
