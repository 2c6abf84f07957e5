//! Matérn-5/2 kernels on the line and their space-time product, with exact
//! mixed partial derivatives in both arguments.
//!
//! With `a = sqrt(5) / lengthscale` and `d = x - x'`, the profile is
//! `f(d) = (1 + a|d| + a^2 d^2 / 3) exp(-a|d|)` and
//! `d^i/dx^i d^j/dx'^j k(x, x') = (-1)^j f^(i+j)(d)`. Odd profile
//! derivatives carry an explicit factor `d`, even ones depend on `|d|` only,
//! so the swap symmetry holds bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matern52 {
    pub lengthscale: f64,
}

impl Matern52 {
    pub fn new(lengthscale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel lengthscale must be positive, got {lengthscale}"
            )));
        }
        Ok(Self { lengthscale })
    }

    pub fn eval(&self, x: f64, xp: f64) -> f64 {
        self.profile(0, x - xp)
    }

    /// n-th derivative of the stationary profile, n <= 4.
    #[inline]
    pub fn profile(&self, n: u8, d: f64) -> f64 {
        let a = SQRT_5 / self.lengthscale;
        let r = d.abs();
        let ar = a * r;
        let e = (-ar).exp();
        let a2 = a * a;
        match n {
            0 => (1.0 + ar + ar * ar / 3.0) * e,
            1 => -(a2 / 3.0) * d * (1.0 + ar) * e,
            2 => -(a2 / 3.0) * (1.0 + ar - ar * ar) * e,
            3 => (a2 * a2 / 3.0) * d * (3.0 - ar) * e,
            4 => (a2 * a2 / 3.0) * (3.0 - 5.0 * ar + ar * ar) * e,
            _ => panic!("Matérn 5/2 profile derivative of order {n} is not defined"),
        }
    }

    /// `d^a/dx^a d^b/dx'^b k(x, x')` for `a, b <= 2`.
    #[inline]
    pub fn deriv(&self, a: u8, b: u8, x: f64, xp: f64) -> f64 {
        debug_assert!(a <= 2 && b <= 2);
        let v = self.profile(a + b, x - xp);
        if b % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

/// Orders of differentiation applied to the left and right arguments of a
/// space-time kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DerivOrder {
    space_left: u8,
    time_left: u8,
    space_right: u8,
    time_right: u8,
}

impl DerivOrder {
    pub const ZERO: DerivOrder = DerivOrder {
        space_left: 0,
        time_left: 0,
        space_right: 0,
        time_right: 0,
    };

    pub fn new(space_left: u8, time_left: u8, space_right: u8, time_right: u8) -> Result<Self> {
        if space_left > 2 || space_right > 2 || time_left > 1 || time_right > 1 {
            return Err(Error::InvalidArgument(format!(
                "derivative order ({space_left},{time_left};{space_right},{time_right}) exceeds (2,1;2,1)"
            )));
        }
        Ok(Self {
            space_left,
            time_left,
            space_right,
            time_right,
        })
    }

    pub(crate) const fn from_parts(left: (u8, u8), right: (u8, u8)) -> Self {
        Self {
            space_left: left.0,
            time_left: left.1,
            space_right: right.0,
            time_right: right.1,
        }
    }

    pub fn swap(self) -> Self {
        Self {
            space_left: self.space_right,
            time_left: self.time_right,
            space_right: self.space_left,
            time_right: self.time_left,
        }
    }

    pub fn space(&self) -> (u8, u8) {
        (self.space_left, self.space_right)
    }

    pub fn time(&self) -> (u8, u8) {
        (self.time_left, self.time_right)
    }
}

/// `K((x,t),(x',t')) = Kx(x,x') Kt(t,t')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductKernel {
    pub space: Matern52,
    pub time: Matern52,
}

impl ProductKernel {
    pub fn new(sigma_x: f64, sigma_t: f64) -> Result<Self> {
        Ok(Self {
            space: Matern52::new(sigma_x)?,
            time: Matern52::new(sigma_t)?,
        })
    }

    pub fn eval(&self, y: (f64, f64), yp: (f64, f64)) -> f64 {
        self.space.eval(y.0, yp.0) * self.time.eval(y.1, yp.1)
    }

    #[inline]
    pub fn deriv(&self, order: DerivOrder, y: (f64, f64), yp: (f64, f64)) -> f64 {
        let (sa, sb) = order.space();
        let (ta, tb) = order.time();
        self.space.deriv(sa, sb, y.0, yp.0) * self.time.deriv(ta, tb, y.1, yp.1)
    }
}
