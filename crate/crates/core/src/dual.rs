//! Forward-mode dual numbers.
//!
//! A [`Dual`] carries a value together with the derivative of that value
//! with respect to one seed direction. Jacobians are assembled by seeding
//! each coordinate direction in turn (one evaluation pass per column),
//! which keeps the arithmetic exact up to rounding: every rule below is
//! the chain rule applied to an elementary operation.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value/derivative pair for one active seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub dot: f64,
}

impl Dual {
    pub fn new(val: f64, dot: f64) -> Self {
        Dual { val, dot }
    }

    /// A constant: derivative zero.
    pub fn constant(val: f64) -> Self {
        Dual { val, dot: 0.0 }
    }

    /// The seeded variable: derivative one.
    pub fn seeded(val: f64) -> Self {
        Dual { val, dot: 1.0 }
    }

    pub fn sin(self) -> Self {
        Dual::new(self.val.sin(), self.val.cos() * self.dot)
    }

    pub fn cos(self) -> Self {
        Dual::new(self.val.cos(), -self.val.sin() * self.dot)
    }

    pub fn tan(self) -> Self {
        let c = self.val.cos();
        Dual::new(self.val.tan(), self.dot / (c * c))
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.dot)
    }

    pub fn ln(self) -> Self {
        Dual::new(self.val.ln(), self.dot / self.val)
    }

    pub fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        Dual::new(s, self.dot / (2.0 * s))
    }

    pub fn tanh(self) -> Self {
        let th = self.val.tanh();
        Dual::new(th, (1.0 - th * th) * self.dot)
    }

    pub fn sinh(self) -> Self {
        Dual::new(self.val.sinh(), self.val.cosh() * self.dot)
    }

    pub fn cosh(self) -> Self {
        Dual::new(self.val.cosh(), self.val.sinh() * self.dot)
    }

    pub fn atan(self) -> Self {
        Dual::new(self.val.atan(), self.dot / (1.0 + self.val * self.val))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.val, -self.dot)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.val + rhs.val, self.dot + rhs.dot)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.val - rhs.val, self.dot - rhs.dot)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(
            self.val * rhs.val,
            self.dot * rhs.val + self.val * rhs.dot,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.val / rhs.val,
            (self.dot * rhs.val - self.val * rhs.dot) / (rhs.val * rhs.val),
        )
    }
}
