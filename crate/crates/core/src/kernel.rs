//! Iterated convolutions of the unit indicator and their cumulative weights.
//!
//! `chi^{*m}` denotes the m-fold self-convolution of the indicator of the
//! unit interval:
//! the cardinal B-spline of order m, equivalently the Irwin-Hall density of a
//! sum of m independent uniforms. The boundary weights `omega(m, l)` are the
//! integrals of `chi^{*(m+1)}` up to integer `l`, kept in exact rational
//! arithmetic because the prior's normalization identities must hold exactly.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::real::Real;

/// Orders above this make the alternating closed-form sum lose more than
/// half the mantissa in double precision.
pub const MAX_SAFE_ORDER: u32 = 25;

/// Closed-form Irwin-Hall density: the m-fold self-convolution of the unit
/// indicator evaluated at `x`. Zero outside [0, m].
///
/// The alternating sum is always accumulated in `f64` regardless of the
/// output scalar; the cancellation at m near 20 would destroy an f32
/// accumulator outright.
pub(crate) fn irwin_hall_pdf<R: Real>(m: u32, x: R) -> R {
    let mut xf = x.as_f64();
    if !(0.0..=m as f64).contains(&xf) {
        return R::zero();
    }
    // The density is symmetric about m/2; evaluating on the left half keeps
    // the alternating sum short and well conditioned.
    if xf > m as f64 / 2.0 {
        xf = m as f64 - xf;
    }
    let mut sum = 0.0_f64;
    let mut binom = 1.0_f64; // C(m, k)
    let mut sign = 1.0_f64;
    for k in 0..=(xf.floor() as u32).min(m) {
        sum += sign * binom * (xf - k as f64).powi(m as i32 - 1);
        sign = -sign;
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    let value = sum / factorial_f64(m - 1);
    // Clamp the last-ulp negatives the cancellation can leave behind.
    R::of(value.max(0.0))
}

/// Cumulative of the Irwin-Hall density of order `m` at a real argument.
pub(crate) fn irwin_hall_cdf<R: Real>(m: u32, x: R) -> R {
    let xf = x.as_f64();
    if xf <= 0.0 {
        return R::zero();
    }
    if xf >= m as f64 {
        return R::one();
    }
    // Mirror the right half through the density's symmetry, as in the pdf.
    if xf > m as f64 / 2.0 {
        return R::one() - irwin_hall_cdf(m, R::of(m as f64 - xf));
    }
    let mut sum = 0.0_f64;
    let mut binom = 1.0_f64;
    let mut sign = 1.0_f64;
    for k in 0..=(xf.floor() as u32).min(m) {
        sum += sign * binom * (xf - k as f64).powi(m as i32);
        sign = -sign;
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    R::of((sum / factorial_f64(m)).clamp(0.0, 1.0))
}

fn factorial_f64(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

fn factorial_big(n: u32) -> BigInt {
    let mut acc = BigInt::one();
    for k in 1..=n as u64 {
        acc *= BigInt::from(k);
    }
    acc
}

fn binomial_big(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for j in 0..k as u64 {
        acc = acc * BigInt::from(n as u64 - j) / BigInt::from(j + 1);
    }
    acc
}

/// Exact value of `omega(m, l)`: the integral of `chi^{*(m+1)}` over [0, l].
fn omega_exact(m: u32, l: u32) -> BigRational {
    debug_assert!(l <= m + 1);
    let n = m + 1;
    let mut num = BigInt::zero();
    for k in 0..=l {
        let term = binomial_big(n, k) * BigInt::from((l - k) as u64).pow(n);
        if k % 2 == 0 {
            num += term;
        } else {
            num -= term;
        }
    }
    BigRational::new(num, factorial_big(n))
}

/// Evaluator for the iterated convolutions and their cumulative weights.
///
/// Immutable after construction; concurrent reads are safe.
#[derive(Debug, Clone)]
pub struct KernelTable {
    max_order: u32,
    omega_cache: BTreeMap<(u32, u32), BigRational>,
}

impl Default for KernelTable {
    fn default() -> Self {
        // All experiments use m <= floor(alpha) + 1 <= 8; 16 leaves headroom
        // while staying far from the cancellation cliff.
        Self::new(16)
    }
}

impl KernelTable {
    /// Build a table supporting convolution orders up to `max_order` (and the
    /// weights `omega(m, l)` for `m <= max_order`).
    pub fn new(max_order: u32) -> Self {
        assert!(
            (1..=MAX_SAFE_ORDER).contains(&max_order),
            "max_order must lie in 1..={MAX_SAFE_ORDER}"
        );
        let mut omega_cache = BTreeMap::new();
        for m in 0..=max_order {
            for l in 0..=m + 1 {
                omega_cache.insert((m, l), omega_exact(m, l));
            }
        }
        Self {
            max_order,
            omega_cache,
        }
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// `chi^{*m}(x)`, zero outside [0, m].
    pub fn eval<R: Real>(&self, m: u32, x: R) -> Result<R> {
        if m == 0 || m > self.max_order {
            return Err(Error::UnsupportedOrder {
                m,
                max: self.max_order,
            });
        }
        Ok(irwin_hall_pdf(m, x))
    }

    /// Cumulative of `chi^{*m}` at a real argument.
    pub fn cdf<R: Real>(&self, m: u32, x: R) -> Result<R> {
        if m == 0 || m > self.max_order {
            return Err(Error::UnsupportedOrder {
                m,
                max: self.max_order,
            });
        }
        Ok(irwin_hall_cdf(m, x))
    }

    /// Exact rational `omega(m, l)` for integer `0 <= l <= m + 1`.
    pub fn omega(&self, m: u32, l: u32) -> Result<&BigRational> {
        if m > self.max_order {
            return Err(Error::UnsupportedOrder {
                m,
                max: self.max_order,
            });
        }
        self.omega_cache
            .get(&(m, l))
            .ok_or_else(|| Error::Domain(format!("omega({m}, {l}): l must lie in 0..={}", m + 1)))
    }

    /// `omega(m, l)` converted to the requested scalar (lossless up to the
    /// scalar's representation).
    pub fn omega_as<R: Real>(&self, m: u32, l: u32) -> Result<R> {
        let r = self.omega(m, l)?;
        Ok(R::of(r.to_f64().expect("omega fits in f64")))
    }

    /// The edge-weight row `[omega(m, 1), ..., omega(m, m)]` as floats.
    pub fn omega_row<R: Real>(&self, m: u32) -> Result<Vec<R>> {
        (1..=m).map(|l| self.omega_as(m, l)).collect()
    }

    /// Deliberately falsify one cached weight. Test hook for the lemma
    /// verification fault-injection path; never call this outside tests.
    #[doc(hidden)]
    pub fn inject_omega_fault(&mut self) {
        let key = (2, 1);
        let bad =
            self.omega_cache[&key].clone() + BigRational::new(BigInt::one(), BigInt::from(64));
        self.omega_cache.insert(key, bad);
    }
}

/// Report of the exact algebraic identities of the omega weights; used by the
/// lemma verification suite (and its fault-injection test).
pub fn check_omega_identities(table: &KernelTable) -> Result<()> {
    for m in 0..=table.max_order() {
        if !table.omega(m, 0)?.is_zero() {
            return Err(Error::Numeric(format!("omega({m}, 0) != 0")));
        }
        if !table.omega(m, m + 1)?.is_one() {
            return Err(Error::Numeric(format!("omega({m}, {}) != 1", m + 1)));
        }
        let first = table.omega(m, 1)?;
        let expect = BigRational::new(BigInt::one(), factorial_big(m + 1));
        if *first != expect {
            return Err(Error::Numeric(format!("omega({m}, 1) != 1/({m}+1)!")));
        }
        for l in 0..=m + 1 {
            let sum = table.omega(m, l)? + table.omega(m, m + 1 - l)?;
            if !sum.is_one() {
                return Err(Error::Numeric(format!(
                    "omega({m}, {l}) + omega({m}, {}) != 1",
                    m + 1 - l
                )));
            }
        }
        for l in 1..=m + 1 {
            if table.omega(m, l)? <= table.omega(m, l - 1)? {
                return Err(Error::Numeric(format!(
                    "omega({m}, l) not strictly increasing at l={l}"
                )));
            }
        }
        if table.omega(m, 1)?.is_negative() {
            return Err(Error::Numeric(format!("omega({m}, 1) negative")));
        }
    }
    Ok(())
}
