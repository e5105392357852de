//! Distances and divergences between densities on [0, 1).
//!
//! The Hellinger distance here is `(int (sqrt f - sqrt g)^2)^{1/2}` without
//! the conventional 1/2 factor, so its maximum is sqrt(2). Kullback-Leibler
//! comes with its centered second moment `V`, the pair that defines the
//! KL-neighborhood of a truth.

use serde::{Deserialize, Serialize};

use crate::aggregate::GridDensity;
use crate::error::{Error, Result};
use crate::real::{kahan_sum, Real};
use crate::spline::SplineDensity;

/// Anything evaluable as a density on [0, 1).
pub trait Density<R: Real = f64> {
    fn eval(&self, x: R) -> R;
}

impl<R: Real> Density<R> for GridDensity<R> {
    fn eval(&self, x: R) -> R {
        GridDensity::eval(self, x)
    }
}

impl<R: Real> Density<R> for SplineDensity<R> {
    fn eval(&self, x: R) -> R {
        SplineDensity::eval(self, x)
    }
}

/// Adapter for closed-form densities.
pub struct FnDensity<F>(pub F);

impl<R: Real, F: Fn(R) -> R> Density<R> for FnDensity<F> {
    fn eval(&self, x: R) -> R {
        (self.0)(x)
    }
}

/// Evaluation handle used by the distance functionals: grid-grid pairs get
/// exact cell arithmetic on the common refinement, everything else composite
/// Gauss-Legendre quadrature.
pub enum EvaluableDensity<'a, R: Real = f64> {
    Grid(&'a GridDensity<R>),
    Spline(&'a SplineDensity<R>),
    Analytic(&'a dyn Fn(R) -> R),
}

impl<'a, R: Real> EvaluableDensity<'a, R> {
    pub fn eval(&self, x: R) -> R {
        match self {
            EvaluableDensity::Grid(g) => g.eval(x),
            EvaluableDensity::Spline(s) => s.eval(x),
            EvaluableDensity::Analytic(f) => f(x),
        }
    }
}

impl<'a, R: Real> From<&'a GridDensity<R>> for EvaluableDensity<'a, R> {
    fn from(g: &'a GridDensity<R>) -> Self {
        EvaluableDensity::Grid(g)
    }
}

impl<'a, R: Real> From<&'a SplineDensity<R>> for EvaluableDensity<'a, R> {
    fn from(s: &'a SplineDensity<R>) -> Self {
        EvaluableDensity::Spline(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Hellinger,
    L1,
    Sup,
}

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

/// Distance between two densities with the default quadrature resolution.
pub fn distance<R: Real>(
    metric: Metric,
    f: &EvaluableDensity<R>,
    g: &EvaluableDensity<R>,
) -> Result<R> {
    distance_with_panels(metric, f, g, 1 << 14)
}

/// Distance with an explicit panel count for the quadrature fallback.
pub fn distance_with_panels<R: Real>(
    metric: Metric,
    f: &EvaluableDensity<R>,
    g: &EvaluableDensity<R>,
    panels: usize,
) -> Result<R> {
    if let (EvaluableDensity::Grid(a), EvaluableDensity::Grid(b)) = (f, g) {
        // Exact on the common refinement when it stays affordable.
        let lcm = lcm(a.cells(), b.cells());
        if lcm <= 1 << 26 {
            return grid_distance(metric, a, b);
        }
    }
    let mut acc = Vec::with_capacity(panels);
    let mut sup = R::zero();
    let h = R::of((panels as f64).recip());
    for p in 0..panels {
        let mid = (R::of(p as f64) + R::of(0.5)) * h;
        let half = h * R::of(0.5);
        let mut panel = R::zero();
        for (n, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let x = mid + half * R::of(*n);
            let (fv, gv) = (f.eval(x), g.eval(x));
            check_nonnegative(fv, x)?;
            check_nonnegative(gv, x)?;
            match metric {
                Metric::Hellinger => {
                    let d = fv.sqrt() - gv.sqrt();
                    panel += R::of(w) * d * d;
                }
                Metric::L1 => panel += R::of(w) * (fv - gv).abs(),
                Metric::Sup => sup = sup.max((fv - gv).abs()),
            }
        }
        acc.push(panel * half);
    }
    Ok(match metric {
        Metric::Hellinger => kahan_sum(acc).max(R::zero()).sqrt(),
        Metric::L1 => kahan_sum(acc),
        Metric::Sup => sup,
    })
}

fn check_nonnegative<R: Real>(v: R, x: R) -> Result<()> {
    if v < R::zero() || !v.is_finite() {
        return Err(Error::Data(format!(
            "density value {v} at x = {x} violates the nonnegativity contract"
        )));
    }
    Ok(())
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Exact distance between two piecewise-constant densities: walk the merged
/// cell boundaries once.
fn grid_distance<R: Real>(metric: Metric, a: &GridDensity<R>, b: &GridDensity<R>) -> Result<R> {
    let (na, nb) = (a.cells(), b.cells());
    let mut terms = Vec::with_capacity(na + nb);
    let mut sup = R::zero();
    let mut i = 0usize;
    let mut j = 0usize;
    let mut t = 0.0f64;
    while i < na && j < nb {
        let va = a.values()[i];
        let vb = b.values()[j];
        check_nonnegative(va, R::of(t))?;
        check_nonnegative(vb, R::of(t))?;
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let next = next_a.min(next_b);
        let len = R::of(next - t);
        match metric {
            Metric::Hellinger => {
                let d = va.sqrt() - vb.sqrt();
                terms.push(len * d * d);
            }
            Metric::L1 => terms.push(len * (va - vb).abs()),
            Metric::Sup => sup = sup.max((va - vb).abs()),
        }
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
        t = next;
    }
    Ok(match metric {
        Metric::Hellinger => kahan_sum(terms).max(R::zero()).sqrt(),
        Metric::L1 => kahan_sum(terms),
        Metric::Sup => sup,
    })
}

/// Kullback-Leibler divergence `K(f0, f)` and its centered second moment
/// `V(f0, f)`, by composite quadrature (2^15 panels).
///
/// Where `f` vanishes but `f0` does not the pair is `(inf, inf)`; histogram
/// zero cells are deliberately not clipped.
pub fn kl_and_v<R: Real>(f0: &EvaluableDensity<R>, f: &EvaluableDensity<R>) -> Result<(R, R)> {
    kl_and_v_with_panels(f0, f, 1 << 15)
}

pub fn kl_and_v_with_panels<R: Real>(
    f0: &EvaluableDensity<R>,
    f: &EvaluableDensity<R>,
    panels: usize,
) -> Result<(R, R)> {
    if let (EvaluableDensity::Grid(a), EvaluableDensity::Grid(b)) = (f0, f) {
        // Exact cell arithmetic; in particular a zero cell of `f` under the
        // support of `f0` yields infinity no matter how fine the grids are.
        let lcm = lcm(a.cells(), b.cells());
        if lcm <= 1 << 26 {
            return grid_kl_and_v(a, b);
        }
    }
    let h = R::of((panels as f64).recip());
    let half = h * R::of(0.5);
    // Cache node evaluations; V needs a second pass with K in hand.
    let mut weights = Vec::with_capacity(panels * 5);
    let mut f0_vals = Vec::with_capacity(panels * 5);
    let mut log_ratio = Vec::with_capacity(panels * 5);
    for p in 0..panels {
        let mid = (R::of(p as f64) + R::of(0.5)) * h;
        for (n, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let x = mid + half * R::of(*n);
            let v0 = f0.eval(x);
            let v = f.eval(x);
            if v0 < R::zero() || !v0.is_finite() {
                return Err(Error::Data(format!(
                    "truth density value {v0} at x = {x} violates the nonnegativity contract"
                )));
            }
            if v0 > R::zero() && v <= R::zero() {
                return Ok((R::infinity(), R::infinity()));
            }
            weights.push(R::of(w) * half);
            f0_vals.push(v0);
            log_ratio.push(if v0 > R::zero() {
                (v0 / v).ln()
            } else {
                R::zero()
            });
        }
    }
    let k = kahan_sum(
        weights
            .iter()
            .zip(&f0_vals)
            .zip(&log_ratio)
            .map(|((&w, &v0), &lr)| w * v0 * lr),
    );
    let v = kahan_sum(
        weights
            .iter()
            .zip(&f0_vals)
            .zip(&log_ratio)
            .map(|((&w, &v0), &lr)| w * v0 * (lr - k) * (lr - k)),
    );
    Ok((k, v))
}

/// Exact Kullback-Leibler pair for two piecewise-constant densities.
fn grid_kl_and_v<R: Real>(f0: &GridDensity<R>, f: &GridDensity<R>) -> Result<(R, R)> {
    let (na, nb) = (f0.cells(), f.cells());
    let mut lens = Vec::with_capacity(na + nb);
    let mut v0s = Vec::with_capacity(na + nb);
    let mut lrs = Vec::with_capacity(na + nb);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut t = 0.0f64;
    while i < na && j < nb {
        let v0 = f0.values()[i];
        let v = f.values()[j];
        if v0 < R::zero() || !v0.is_finite() {
            return Err(Error::Data(format!(
                "truth density value {v0} violates the nonnegativity contract"
            )));
        }
        if v0 > R::zero() && v <= R::zero() {
            return Ok((R::infinity(), R::infinity()));
        }
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let next = next_a.min(next_b);
        lens.push(R::of(next - t));
        v0s.push(v0);
        lrs.push(if v0 > R::zero() { (v0 / v).ln() } else { R::zero() });
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
        t = next;
    }
    let k = kahan_sum(
        lens.iter()
            .zip(&v0s)
            .zip(&lrs)
            .map(|((&w, &v0), &lr)| w * v0 * lr),
    );
    let v = kahan_sum(
        lens.iter()
            .zip(&v0s)
            .zip(&lrs)
            .map(|((&w, &v0), &lr)| w * v0 * (lr - k) * (lr - k)),
    );
    Ok((k, v))
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

    fn halves(first: f64, second: f64) -> GridDensity {
        GridDensity::new(vec![first, second]).unwrap()
    }

    #[test]
    fn identical_densities_are_at_distance_zero() {
        let g = halves(0.6, 1.4);
        for m in [Metric::Hellinger, Metric::L1, Metric::Sup] {
            assert_eq!(distance(m, &(&g).into(), &(&g).into()).unwrap(), 0.0);
        }
        let (k, v) = kl_and_v(&(&g).into(), &(&g).into()).unwrap();
        assert_abs_diff_eq!(k, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn disjoint_supports_reach_the_maximum() {
        let f = halves(2.0, 0.0);
        let g = halves(0.0, 2.0);
        let h = distance(Metric::Hellinger, &(&f).into(), &(&g).into()).unwrap();
        assert_abs_diff_eq!(h, 2.0_f64.sqrt(), epsilon = 1e-14);
        let l1 = distance(Metric::L1, &(&f).into(), &(&g).into()).unwrap();
        assert_abs_diff_eq!(l1, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn kl_examples() {
        let f0 = halves(2.0, 0.0);
        let unif = GridDensity::new(vec![1.0]).unwrap();
        let (k, v) = kl_and_v(&(&f0).into(), &(&unif).into()).unwrap();
        assert_abs_diff_eq!(k, 2.0_f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        // f zero where f0 positive: +infinity, not clipped.
        let (k, v) = kl_and_v(&(&unif).into(), &(&f0).into()).unwrap();
        assert!(k.is_infinite() && v.is_infinite());
    }

    #[test]
    fn exact_kl_matches_quadrature_path() {
        let f0 = GridDensity::new(vec![1.4, 0.6, 0.9, 1.1]).unwrap();
        let f = GridDensity::new(vec![0.8, 1.2, 1.3, 0.7]).unwrap();
        let (k_exact, v_exact) = kl_and_v(&(&f0).into(), &(&f).into()).unwrap();
        let a = |x: f64| f0.eval(x);
        let b = |x: f64| f.eval(x);
        let (k_quad, v_quad) = kl_and_v_with_panels(
            &EvaluableDensity::Analytic(&a),
            &EvaluableDensity::Analytic(&b),
            1 << 15,
        )
        .unwrap();
        assert_abs_diff_eq!(k_exact, k_quad, epsilon = 1e-12);
        assert_abs_diff_eq!(v_exact, v_quad, epsilon = 1e-12);
        // A single zero cell of f under the support of f0 is infinity even
        // when the grids are too fine for quadrature nodes to see it.
        let mut fine = vec![1.0; 1 << 16];
        fine[12345] = 0.0;
        let f = GridDensity::new(fine).unwrap();
        let unif = GridDensity::new(vec![1.0]).unwrap();
        let (k, _): (f64, f64) = kl_and_v(&(&unif).into(), &(&f).into()).unwrap();
        assert!(k.is_infinite());
    }

    #[test]
    fn kl_is_asymmetric_but_nonnegative() {
        let f = halves(1.5, 0.5);
        let g = halves(0.75, 1.25);
        let (kfg, _) = kl_and_v(&(&f).into(), &(&g).into()).unwrap();
        let (kgf, _) = kl_and_v(&(&g).into(), &(&f).into()).unwrap();
        assert!(kfg > 0.0 && kgf > 0.0);
        assert!((kfg - kgf).abs() > 1e-3, "K should be asymmetric");
    }

    #[test]
    fn gibbs_inequality_on_random_pairs() {
        let table = KernelTable::default();
        let params = TptParams::constant(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d1 = sample_tpt(&params, &mut rng).unwrap();
            let d2 = sample_tpt(&params, &mut rng).unwrap();
            let s1 = build_boundary_sequence(&d1.theta, 2, 10.0, &table, &mut rng).unwrap();
            let s2 = build_boundary_sequence(&d2.theta, 2, 10.0, &table, &mut rng).unwrap();
            let f1 = SplineDensity::from_boundary(&s1);
            let f2 = SplineDensity::from_boundary(&s2);
            let (k, v) = kl_and_v_with_panels(&(&f1).into(), &(&f2).into(), 1 << 10).unwrap();
            assert!(k >= 0.0, "K = {k}");
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn hellinger_symmetry_and_l1_sandwich() {
        let params = TptParams::constant(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let d1 = sample_tpt(&params, &mut rng).unwrap();
            let d2 = sample_tpt(&params, &mut rng).unwrap();
            let f = GridDensity::from_theta(&d1.theta).unwrap();
            let g = GridDensity::from_theta(&d2.theta).unwrap();
            let h: f64 = distance(Metric::Hellinger, &(&f).into(), &(&g).into()).unwrap();
            let h_rev: f64 = distance(Metric::Hellinger, &(&g).into(), &(&f).into()).unwrap();
            let l1: f64 = distance(Metric::L1, &(&f).into(), &(&g).into()).unwrap();
            let l1_rev: f64 = distance(Metric::L1, &(&g).into(), &(&f).into()).unwrap();
            assert_abs_diff_eq!(h, h_rev, epsilon = 1e-14);
            assert_abs_diff_eq!(l1, l1_rev, epsilon = 1e-14);
            assert!(h * h <= l1 + 1e-6);
            assert!(l1 <= h * (h * h + 4.0).sqrt() + 1e-6);
        }
    }

    #[test]
    fn grid_path_matches_quadrature_path() {
        let f = GridDensity::new(vec![0.4, 1.6, 1.2, 0.8]).unwrap();
        let g = GridDensity::new(vec![1.1, 0.9, 0.7, 1.3]).unwrap();
        for m in [Metric::Hellinger, Metric::L1] {
            let exact = distance(m, &(&f).into(), &(&g).into()).unwrap();
            let fa = |x: f64| f.eval(x);
            let ga = |x: f64| g.eval(x);
            let quad = distance_with_panels(
                m,
                &EvaluableDensity::Analytic(&fa),
                &EvaluableDensity::Analytic(&ga),
                1 << 14,
            )
            .unwrap();
            assert_abs_diff_eq!(exact, quad, epsilon = 1e-6);
        }
    }

    #[test]
    fn quadrature_converges_on_spline_pairs() {
        let table = KernelTable::default();
        let params = TptParams::constant(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d1 = sample_tpt(&params, &mut rng).unwrap();
        let d2 = sample_tpt(&params, &mut rng).unwrap();
        let s1 = build_boundary_sequence(&d1.theta, 2, 10.0, &table, &mut rng).unwrap();
        let s2 = build_boundary_sequence(&d2.theta, 2, 10.0, &table, &mut rng).unwrap();
        let f1 = SplineDensity::from_boundary(&s1);
        let f2 = SplineDensity::from_boundary(&s2);
        for m in [Metric::Hellinger, Metric::L1] {
            let a: f64 = distance_with_panels(m, &(&f1).into(), &(&f2).into(), 1 << 14).unwrap();
            let b: f64 = distance_with_panels(m, &(&f1).into(), &(&f2).into(), 1 << 15).unwrap();
            assert!((a - b).abs() < 1e-7, "{m:?}: {a} vs {b}");
        }
    }

    #[test]
    fn negative_values_are_rejected() {
        let fa = |_: f64| -0.1;
        let g = GridDensity::new(vec![1.0]).unwrap();
        assert!(distance(Metric::L1, &EvaluableDensity::Analytic(&fa), &(&g).into()).is_err());
    }
}
