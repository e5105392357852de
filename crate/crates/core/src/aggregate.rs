//! Boundary-corrected coefficient sequences and the shift-aggregation maps.
//!
//! Step 1 of the prior draws conditional uniforms at the `m` edge cells so
//! that the periodically extended tree no longer cycles across 0 and 1; the
//! corrected one-period sequence `u_0..u_{2^L+m-1}` then satisfies the
//! normalization identity exactly. Step 2 averages `q` shifted copies of the
//! step function (discrete aggregation) or convolves with the scaled kernel
//! (continuous aggregation, the `q -> infinity` limit).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{irwin_hall_pdf, KernelTable};
use crate::real::{kahan_sum, Real};

/// Hard cap on the fine-grid size of a discrete aggregation.
const MAX_FINE_CELLS: u64 = 1 << 31;

/// One period of the boundary-corrected coefficient sequence.
///
/// Indices `0..2^L-m-1` carry the tree masses unchanged, `2^L-m..2^L-1` the
/// conditional-uniform edge coordinates, and `2^L..2^L+m-1` the wrap values
/// determined by them. The stored values are mass-scale coefficients (the
/// induced density multiplies them by `2^L`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySequence<R: Real = f64> {
    depth: u32,
    order: u32,
    u_bound: R,
    base: Vec<R>,
    /// `omega(m, l)` for `l = 1..=m`, copied from the kernel table.
    omega_edge: Vec<R>,
}

impl<R: Real> BoundarySequence<R> {
    /// Wrap an explicit one-period coefficient vector (length `2^L + m`).
    /// Used by tests and the lemma harness; the prior path goes through
    /// [`build_boundary_sequence`].
    pub fn from_parts(depth: u32, order: u32, base: Vec<R>, table: &KernelTable) -> Result<Self> {
        let period = (1usize << depth) + order as usize;
        if base.len() != period {
            return Err(Error::Config(format!(
                "expected one period of {period} coefficients, got {}",
                base.len()
            )));
        }
        if let Some(v) = base.iter().find(|v| !(v.is_finite() && **v >= R::zero())) {
            return Err(Error::Config(format!(
                "coefficient {v} must be nonnegative"
            )));
        }
        Ok(Self {
            depth,
            order,
            u_bound: R::infinity(),
            base,
            omega_edge: table.omega_row(order)?,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn u_bound(&self) -> R {
        self.u_bound
    }

    /// One period `u_0..u_{2^L+m-1}`.
    pub fn base(&self) -> &[R] {
        &self.base
    }

    /// Periodic coefficient lookup for any integer index.
    pub fn coeff(&self, i: i64) -> R {
        let p = self.base.len() as i64;
        self.base[i.rem_euclid(p) as usize]
    }

    pub fn max_coeff(&self) -> R {
        self.base.iter().copied().fold(R::zero(), R::max)
    }

    /// Left-hand side of the normalization identity: the interior masses plus
    /// the omega-weighted edge and wrap terms. Equals one for sequences built
    /// from a tree draw.
    pub fn normalization_sum(&self) -> R {
        let n = 1usize << self.depth;
        let m = self.order as usize;
        let interior = kahan_sum(self.base[..n - m].iter().copied());
        let mut edge_terms = Vec::with_capacity(2 * m);
        for i in n - m..n {
            let w = self.omega_edge[n - 1 - i]; // omega(m, 2^L - i)
            let w2 = self.omega_edge[i - (n - m)]; // omega(m, i - (2^L - m - 1))
            edge_terms.push(w * self.base[i]);
            edge_terms.push(w2 * self.base[i + m]);
        }
        interior + kahan_sum(edge_terms)
    }

    /// Continuous aggregation at `x`: the periodic cardinal-spline value
    /// `sum_j u_j 2^L chi^{*(m+1)}(2^L x - j)`, at most `m + 1` terms.
    pub fn eval(&self, x: R) -> R {
        periodic_spline_eval(&self.base, self.depth, self.order, x)
    }

    /// Exact integral of the continuous aggregation over [0, 1]: interior
    /// masses at full weight, edge and wrap cells at their cumulative-kernel
    /// weights. One for boundary-corrected sequences.
    pub fn integral_unit_interval(&self) -> R {
        let n = 1i64 << self.depth;
        let m = self.order as i64;
        let mut terms = Vec::with_capacity((n + m) as usize);
        for i in -m..0 {
            // 1 - omega(m, -i)
            terms.push(self.coeff(i) * (R::one() - self.omega_edge[(-i - 1) as usize]));
        }
        for i in 0..n - m {
            terms.push(self.coeff(i));
        }
        for i in n - m..n {
            terms.push(self.coeff(i) * self.omega_edge[(n - 1 - i) as usize]);
        }
        kahan_sum(terms)
    }
}

/// Evaluate `sum_j c_{j mod period} 2^L chi^{*(m+1)}(2^L x - j)` for an
/// arbitrary periodic coefficient vector. With `period = 2^L` this is the
/// 1-periodic spline spanned by the wrapped basis; the boundary-corrected
/// sequences use `period = 2^L + m`.
pub fn periodic_spline_eval<R: Real>(coeffs: &[R], depth: u32, m: u32, x: R) -> R {
    let scale = R::of((1u64 << depth) as f64);
    let y = scale * x;
    let hi = y.floor().as_f64() as i64;
    let p = coeffs.len() as i64;
    let mut acc = R::zero();
    for j in hi - m as i64..=hi {
        let w = irwin_hall_pdf(m + 1, y - R::of(j as f64));
        acc += coeffs[j.rem_euclid(p) as usize] * w;
    }
    acc * scale
}

/// Draw the Step 1 boundary correction with explicit unit coordinates: entry
/// `w[i]` places the edge value `v` at `lo + w[i] (hi - lo)` inside its
/// conditional-uniform interval. The MCMC decode path shares this routine so
/// the sampler and the prior agree bit for bit.
pub fn boundary_sequence_from_unit<R: Real>(
    theta: &[R],
    order: u32,
    u_bound: R,
    table: &KernelTable,
    unit: &[R],
) -> Result<BoundarySequence<R>> {
    let n = theta.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::Config(format!(
            "tree masses must number a power of two, got {n}"
        )));
    }
    let depth = n.trailing_zeros();
    let m = order as usize;
    // Structural bound: the edge window must leave at least one interior
    // cell. (The contraction analysis assumes the stricter 2^(L-1) > m, which
    // the schedule constructors enforce; degenerate test models below it are
    // still well defined.)
    if m >= n {
        return Err(Error::Config(format!(
            "aggregation order m={m} needs at least one interior cell at depth L={depth}"
        )));
    }
    if !(u_bound > R::zero()) {
        return Err(Error::Config("edge bound U must be positive".into()));
    }
    if unit.len() != m {
        return Err(Error::Config(format!(
            "expected {m} edge coordinates, got {}",
            unit.len()
        )));
    }
    let total = kahan_sum(theta.iter().copied());
    if (total - R::one()).abs() > R::of(1e-8) {
        return Err(Error::Config(format!("tree masses sum to {total}, not 1")));
    }

    let omega_edge: Vec<R> = table.omega_row(order)?;
    let mut base = vec![R::zero(); n + m];
    base[..n].copy_from_slice(theta);
    for (idx, i) in (n - m..n).enumerate() {
        let w = omega_edge[n - 1 - i]; // omega(m, 2^L - i)
        let lo = R::max(R::zero(), (theta[i] - (R::one() - w) * u_bound) / w);
        let hi = R::min(u_bound, theta[i] / w);
        if lo > hi {
            return Err(Error::Config(format!(
                "empty edge interval at index {i}: bound U={u_bound} is below the cell mass {}",
                theta[i]
            )));
        }
        let v = lo + unit[idx] * (hi - lo);
        base[i] = v;
        base[i + m] = R::max(R::zero(), (theta[i] - w * v) / (R::one() - w));
    }
    Ok(BoundarySequence {
        depth,
        order,
        u_bound,
        base,
        omega_edge,
    })
}

/// Step 1 of the prior: keep the interior masses, redraw the `m` edge cells
/// from their conditional-uniform intervals, and derive the wrap values.
pub fn build_boundary_sequence<R: Real, G: Rng>(
    theta: &[R],
    order: u32,
    u_bound: R,
    table: &KernelTable,
    rng: &mut G,
) -> Result<BoundarySequence<R>> {
    let unit: Vec<R> = (0..order).map(|_| R::sample_uniform(rng)).collect();
    boundary_sequence_from_unit(theta, order, u_bound, table, &unit)
}

/// Piecewise-constant density on a uniform grid over [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity<R: Real = f64> {
    values: Vec<R>,
    normalized: bool,
}

impl<R: Real> GridDensity<R> {
    pub fn new(values: Vec<R>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("grid density needs at least one cell".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= R::zero())) {
            return Err(Error::Config(format!("cell value {v} must be nonnegative")));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// The tree histogram itself: masses scaled by the cell count.
    pub fn from_theta(theta: &[R]) -> Result<Self> {
        let n = R::of(theta.len() as f64);
        let mut g = Self::new(theta.iter().map(|&t| t * n).collect())?;
        g.normalized = true;
        Ok(g)
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Density value at `x` in [0, 1); cells are right-open. The index is
    /// clamped to the last cell so that x just below 1 cannot round out of
    /// range.
    pub fn eval(&self, x: R) -> R {
        if x < R::zero() || x >= R::one() {
            return R::zero();
        }
        let n = self.values.len();
        let i = ((x * R::of(n as f64)).floor().as_f64() as usize).min(n - 1);
        self.values[i]
    }

    /// Exact integral over [0, 1): the mean cell value.
    pub fn integral(&self) -> R {
        kahan_sum(self.values.iter().copied()) / R::of(self.values.len() as f64)
    }

    /// Exact integral over `[a, b]` within the unit interval.
    pub fn mass(&self, a: R, b: R) -> R {
        let n = self.values.len() as f64;
        let a = a.as_f64().clamp(0.0, 1.0);
        let b = b.as_f64().clamp(0.0, 1.0);
        if b <= a {
            return R::zero();
        }
        let first = (a * n).floor() as usize;
        let last = ((b * n).ceil() as usize).min(self.values.len());
        let mut terms = Vec::with_capacity(last - first);
        for i in first..last {
            let lo = (i as f64 / n).max(a);
            let hi = ((i + 1) as f64 / n).min(b);
            terms.push(self.values[i] * R::of(hi - lo));
        }
        kahan_sum(terms)
    }

    /// Divide by the exact cell-mean integral.
    pub fn normalized(mut self) -> Result<Self> {
        let z = self.integral();
        if !(z > R::zero()) {
            return Err(Error::Numeric(format!(
                "degenerate density: integral {z} is not positive"
            )));
        }
        for v in &mut self.values {
            *v /= z;
        }
        self.normalized = true;
        Ok(self)
    }
}

/// In-place backward sliding-window means of width `window` on a circular
/// array, `passes` times. Each pass costs O(len) via prefix sums; this is how
/// the `q^m`-term shift average stays feasible at `q` in the thousands.
pub fn shift_average_passes<R: Real>(values: &mut [R], window: usize, passes: u32) {
    if window <= 1 || passes == 0 {
        return;
    }
    let p = values.len();
    let q = R::of(window as f64);
    let mut prefix = vec![R::zero(); p + window + 1];
    for _ in 0..passes {
        // prefix sums of the circular extension old[p-window..p] ++ old[0..p]
        for i in 0..window {
            prefix[i + 1] = prefix[i] + values[p - window + i];
        }
        for i in 0..p {
            prefix[window + i + 1] = prefix[window + i] + values[i];
        }
        for (j, v) in values.iter_mut().enumerate() {
            *v = (prefix[j + window + 1] - prefix[j + 1]) / q;
        }
    }
}

/// Discrete aggregation: the step function `f^m_{q, 2^{-L}}` restricted to
/// [0, 1) on the fine grid of `q 2^L` cells, before normalization. Heights
/// include the `2^L` factor of the tree basis.
pub fn aggregate_discrete<R: Real>(seq: &BoundarySequence<R>, q: usize) -> Result<GridDensity<R>> {
    if q == 0 {
        return Err(Error::Config("tree count q must be at least 1".into()));
    }
    let cells_per_unit = 1u64 << seq.depth();
    let fine = q as u64 * cells_per_unit;
    if fine > MAX_FINE_CELLS {
        return Err(Error::Resource(format!(
            "fine grid of {fine} cells exceeds the 2^31 cap (q={q}, L={})",
            seq.depth()
        )));
    }
    let height = R::of(cells_per_unit as f64);
    let period = seq.base().len();
    let mut values = Vec::with_capacity(period * q);
    for &u in seq.base() {
        let h = u * height;
        values.extend(std::iter::repeat_n(h, q));
    }
    shift_average_passes(&mut values, q, seq.order());
    values.truncate(fine as usize);
    GridDensity::new(values)
}
