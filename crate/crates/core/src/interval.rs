//! Conservative interval arithmetic.
//!
//! Every operation returns an interval that is guaranteed to contain the
//! true image of its inputs. Instead of switching the FPU rounding mode,
//! endpoints are widened outward after each operation by a configurable
//! epsilon inflation (relative plus absolute), which is portable and
//! strictly conservative.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Errors raised by interval operations on invalid domains.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    /// Division by an interval containing zero.
    #[error("division by interval [{0}, {1}] containing zero")]
    DivisionByZero(f64, f64),
    /// Square root of an interval extending below zero.
    #[error("sqrt of interval [{0}, {1}] with negative lower endpoint")]
    SqrtNegative(f64, f64),
    /// An endpoint became NaN.
    #[error("interval endpoint is NaN")]
    NotANumber,
}

/// Outward-rounding parameters: each computed endpoint is pushed away from
/// the interval interior by `rel * |endpoint| + abs`.
#[derive(Debug, Clone, Copy)]
pub struct Inflation {
    pub rel: f64,
    pub abs: f64,
}

impl Inflation {
    pub const DEFAULT: Inflation = Inflation {
        rel: 1e-15,
        abs: 1e-300,
    };

    /// No widening at all. Only for operations whose endpoints are exact
    /// (selection of existing endpoints, clamps at mathematical bounds).
    pub const NONE: Inflation = Inflation { rel: 0.0, abs: 0.0 };
}

impl Default for Inflation {
    fn default() -> Self {
        Inflation::DEFAULT
    }
}

/// A closed real interval `[lo, hi]` with `lo <= hi` and finite, non-NaN
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// New interval; panics if `lo > hi` or either endpoint is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(!lo.is_nan() && !hi.is_nan(), "interval endpoint is NaN");
        assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    /// Degenerate point interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        // Average can overflow for huge endpoints; the halved sum is fine
        // for every domain box this crate works with.
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Widen both endpoints outward.
    fn inflate(lo: f64, hi: f64, infl: Inflation) -> Self {
        let lo = lo - (lo.abs() * infl.rel + infl.abs);
        let hi = hi + (hi.abs() * infl.rel + infl.abs);
        Self::new(lo, hi)
    }

    pub fn add_with(self, rhs: Interval, infl: Inflation) -> Interval {
        Self::inflate(self.lo + rhs.lo, self.hi + rhs.hi, infl)
    }

    pub fn sub_with(self, rhs: Interval, infl: Inflation) -> Interval {
        Self::inflate(self.lo - rhs.hi, self.hi - rhs.lo, infl)
    }

    pub fn mul_with(self, rhs: Interval, infl: Inflation) -> Interval {
        let cands = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::inflate(lo, hi, infl)
    }

    pub fn div_with(self, rhs: Interval, infl: Inflation) -> Result<Interval, DomainError> {
        if rhs.contains(0.0) {
            return Err(DomainError::DivisionByZero(rhs.lo, rhs.hi));
        }
        let cands = [
            self.lo / rhs.lo,
            self.lo / rhs.hi,
            self.hi / rhs.lo,
            self.hi / rhs.hi,
        ];
        let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self::inflate(lo, hi, infl))
    }

    /// Integer power. The image is computed exactly from the sign cases;
    /// in particular an even power of a zero-containing interval has an
    /// exact lower endpoint of 0.
    pub fn pow_int(self, k: u32) -> Interval {
        self.pow_int_with(k, Inflation::DEFAULT)
    }

    pub fn pow_int_with(self, k: u32, infl: Inflation) -> Interval {
        match k {
            // Empty-product convention: x^0 = 1 for every x, including 0.
            0 => Interval::point(1.0),
            1 => self,
            _ => {
                let pl = powi(self.lo, k);
                let ph = powi(self.hi, k);
                if k % 2 == 1 {
                    Self::inflate(pl, ph, infl)
                } else if self.lo >= 0.0 {
                    Self::inflate(pl, ph, infl)
                } else if self.hi <= 0.0 {
                    Self::inflate(ph, pl, infl)
                } else {
                    // Zero inside: lower endpoint 0 is exact, no widening.
                    let hi = pl.max(ph);
                    Interval::new(0.0, hi + hi.abs() * infl.rel + infl.abs)
                }
            }
        }
    }

    /// Absolute value. Selection of existing endpoints, hence exact.
    pub fn abs_i(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            Interval::new(-self.hi, -self.lo)
        } else {
            Interval::new(0.0, self.hi.max(-self.lo))
        }
    }

    /// Pointwise minimum of two intervals (exact).
    pub fn min_i(self, rhs: Interval) -> Interval {
        Interval::new(self.lo.min(rhs.lo), self.hi.min(rhs.hi))
    }

    /// Pointwise maximum of two intervals (exact).
    pub fn max_i(self, rhs: Interval) -> Interval {
        Interval::new(self.lo.max(rhs.lo), self.hi.max(rhs.hi))
    }

    pub fn sqrt_i(self) -> Result<Interval, DomainError> {
        self.sqrt_with(Inflation::DEFAULT)
    }

    pub fn sqrt_with(self, infl: Inflation) -> Result<Interval, DomainError> {
        if self.lo < 0.0 {
            return Err(DomainError::SqrtNegative(self.lo, self.hi));
        }
        let lo = (self.lo.sqrt() - (self.lo.sqrt() * infl.rel + infl.abs)).max(0.0);
        let hi = self.hi.sqrt();
        Ok(Interval::new(lo, hi + hi * infl.rel + infl.abs))
    }

    pub fn exp_i(self) -> Interval {
        self.exp_with(Inflation::DEFAULT)
    }

    pub fn exp_with(self, infl: Inflation) -> Interval {
        let lo = (self.lo.exp() * (1.0 - infl.rel) - infl.abs).max(0.0);
        let hi = self.hi.exp() * (1.0 + infl.rel) + infl.abs;
        Interval::new(lo, hi)
    }

    pub fn tanh_i(self) -> Interval {
        self.tanh_with(Inflation::DEFAULT)
    }

    pub fn tanh_with(self, infl: Inflation) -> Interval {
        let lo = (self.lo.tanh() - (self.lo.tanh().abs() * infl.rel + infl.abs)).max(-1.0);
        let hi = (self.hi.tanh() + (self.hi.tanh().abs() * infl.rel + infl.abs)).min(1.0);
        Interval::new(lo, hi)
    }

    pub fn sin_i(self) -> Interval {
        self.sin_with(Inflation::DEFAULT)
    }

    /// Sine over the interval: monotone between critical points, so the
    /// image is the endpoint values plus exact clamps at +-1 whenever a
    /// critical point lies inside.
    pub fn sin_with(self, infl: Inflation) -> Interval {
        use std::f64::consts::{FRAC_PI_2, PI};
        if self.width() >= 2.0 * PI {
            return Interval::new(-1.0, 1.0);
        }
        let sa = self.lo.sin();
        let sb = self.hi.sin();
        let mut lo = sa.min(sb);
        let mut hi = sa.max(sb);
        lo -= lo.abs() * infl.rel + infl.abs;
        hi += hi.abs() * infl.rel + infl.abs;
        if contains_angle(self, FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_angle(self, -FRAC_PI_2) {
            lo = -1.0;
        }
        Interval::new(lo.max(-1.0), hi.min(1.0))
    }

    pub fn cos_i(self) -> Interval {
        self.cos_with(Inflation::DEFAULT)
    }

    pub fn cos_with(self, infl: Inflation) -> Interval {
        use std::f64::consts::PI;
        if self.width() >= 2.0 * PI {
            return Interval::new(-1.0, 1.0);
        }
        let ca = self.lo.cos();
        let cb = self.hi.cos();
        let mut lo = ca.min(cb);
        let mut hi = ca.max(cb);
        lo -= lo.abs() * infl.rel + infl.abs;
        hi += hi.abs() * infl.rel + infl.abs;
        if contains_angle(self, 0.0) {
            hi = 1.0;
        }
        if contains_angle(self, PI) || contains_angle(self, -PI) {
            lo = -1.0;
        }
        Interval::new(lo.max(-1.0), hi.min(1.0))
    }
}

/// Is some `base + 2*pi*k` inside the interval?
fn contains_angle(iv: Interval, base: f64) -> bool {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let k = ((iv.lo - base) / two_pi).ceil();
    base + k * two_pi <= iv.hi
}

fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        self.add_with(rhs, Inflation::DEFAULT)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        self.sub_with(rhs, Inflation::DEFAULT)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        self.mul_with(rhs, Inflation::DEFAULT)
    }
}

impl Div for Interval {
    type Output = Result<Interval, DomainError>;
    fn div(self, rhs: Interval) -> Self::Output {
        self.div_with(rhs, Inflation::DEFAULT)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        // Exact: negation of binary floats incurs no rounding.
        Interval::new(-self.hi, -self.lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Cartesian product of intervals: the domain box over which objectives
/// are maximized. State dimensions come first, then inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub dims: Vec<Interval>,
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        assert!(!dims.is_empty(), "interval box must have at least one dimension");
        Self { dims }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Maximum width over all dimensions.
    pub fn width(&self) -> f64 {
        self.dims.iter().map(|d| d.width()).fold(0.0, f64::max)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.midpoint()).collect()
    }

    pub fn contains_point(&self, z: &[f64]) -> bool {
        z.len() == self.dims.len() && z.iter().zip(&self.dims).all(|(x, d)| d.contains(*x))
    }

    /// Index of the widest dimension (first one on ties).
    pub fn widest_dim(&self) -> usize {
        let mut best = 0;
        let mut w = self.dims[0].width();
        for (i, d) in self.dims.iter().enumerate().skip(1) {
            if d.width() > w {
                w = d.width();
                best = i;
            }
        }
        best
    }

    /// Bisect dimension `dim` at its midpoint.
    pub fn split(&self, dim: usize) -> (IntervalBox, IntervalBox) {
        let d = self.dims[dim];
        let mid = d.midpoint();
        let mut left = self.clone();
        let mut right = self.clone();
        left.dims[dim] = Interval::new(d.lo, mid);
        right.dims[dim] = Interval::new(mid, d.hi);
        (left, right)
    }
}
