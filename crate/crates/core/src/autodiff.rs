//! Second-order forward-mode differentiation along one input direction.
//!
//! A [`Jet2`] carries `(f, f', f'')` where the primes are derivatives along a
//! single seeded direction. Pure second derivatives such as `u_xx` come from
//! one pass; a Laplacian in `d` dimensions costs `d` passes.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetFn {
    Tanh,
    Sin,
    Cos,
    Exp,
    Log,
    Square,
}

impl Jet2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable along the seeded direction.
    pub const fn variable(v: f64) -> Self {
        Self { v, d1: 1.0, d2: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            v: f,
            d1: df * self.d1,
            d2: ddf * self.d1 * self.d1 + df * self.d2,
        }
    }

    #[inline]
    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = 1.0 - t * t;
        self.chain(t, s, -2.0 * t * s)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Result<Self> {
        if !(self.v > 0.0) {
            return Err(Error::DomainError(format!("log of {}", self.v)));
        }
        let inv = 1.0 / self.v;
        Ok(self.chain(self.v.ln(), inv, -inv * inv))
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                let p2 = self.v.powi(n - 2);
                let p1 = p2 * self.v;
                self.chain(p1 * self.v, nf * p1, nf * (nf - 1.0) * p2)
            }
        }
    }

    pub fn try_div(self, rhs: Self) -> Result<Self> {
        if rhs.v == 0.0 {
            return Err(Error::DivisionByZero);
        }
        // a / b = a * (1/b); 1/b has derivatives -1/b², 2/b³.
        let inv = 1.0 / rhs.v;
        let recip = rhs.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
        Ok(self * recip)
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(self.v * c, self.d1 * c, self.d2 * c)
    }

    pub fn apply(self, f: JetFn) -> Result<Self> {
        Ok(match f {
            JetFn::Tanh => self.tanh(),
            JetFn::Sin => self.sin(),
            JetFn::Cos => self.cos(),
            JetFn::Exp => self.exp(),
            JetFn::Log => self.ln()?,
            JetFn::Square => self.square(),
        })
    }
}

/// Binary jet arithmetic with the exact product and quotient rules.
pub fn jet_arith(a: Jet2, b: Jet2, op: JetOp) -> Result<Jet2> {
    Ok(match op {
        JetOp::Add => a + b,
        JetOp::Sub => a - b,
        JetOp::Mul => a * b,
        JetOp::Div => a.try_div(b)?,
    })
}

pub fn jet_func(a: Jet2, f: JetFn) -> Result<Jet2> {
    a.apply(f)
}

/// Seed a point for differentiation along coordinate `direction`.
pub fn directional_jet(x: &[f64], direction: usize) -> Vec<Jet2> {
    assert!(direction < x.len(), "direction {direction} out of range for dimension {}", x.len());
    x.iter()
        .enumerate()
        .map(|(k, &xk)| if k == direction { Jet2::variable(xk) } else { Jet2::constant(xk) })
        .collect()
}

impl Add for Jet2 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.v + rhs.v, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.v - rhs.v, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.v * rhs.v,
            self.d1 * rhs.v + self.v * rhs.d1,
            self.d2 * rhs.v + 2.0 * self.d1 * rhs.d1 + self.v * rhs.d2,
        )
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

impl Add<f64> for Jet2 {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self::new(self.v + rhs, self.d1, self.d2)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self::new(self.v - rhs, self.d1, self.d2)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs.scale(self)
    }
}
