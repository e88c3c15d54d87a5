//! Truncated univariate polynomials with a fixed coefficient budget.
//!
//! Used to integrate triangular polynomial vector fields in closed form: each
//! coordinate of the integral curve is a polynomial in the flow time.

pub const CAPACITY: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly {
    coeffs: [f64; CAPACITY],
    len: usize,
}

impl Poly {
    pub const fn zero() -> Self {
        Poly { coeffs: [0.0; CAPACITY], len: 0 }
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        if c != 0.0 {
            p.coeffs[0] = c;
            p.len = 1;
        }
        p
    }

    /// `c0 + c1 τ`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        let mut p = Poly::zero();
        p.coeffs[0] = c0;
        p.coeffs[1] = c1;
        p.len = 2;
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.len > 0 && self.coeffs[self.len - 1] == 0.0 {
            self.len -= 1;
        }
    }

    pub fn degree(&self) -> Option<usize> {
        self.len.checked_sub(1)
    }

    pub fn is_constant(&self) -> bool {
        self.len <= 1
    }

    pub fn coeff(&self, i: usize) -> f64 {
        if i < self.len {
            self.coeffs[i]
        } else {
            0.0
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = *self;
        let len = self.len.max(other.len);
        for i in 0..len {
            out.coeffs[i] = self.coeff(i) + other.coeff(i);
        }
        out.len = len;
        out.trim();
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = *self;
        for c in &mut out.coeffs[..out.len] {
            *c *= s;
        }
        out.trim();
        out
    }

    /// Product, or `None` when the degree would exceed the capacity.
    pub fn mul(&self, other: &Poly) -> Option<Poly> {
        if self.len == 0 || other.len == 0 {
            return Some(Poly::zero());
        }
        let len = self.len + other.len - 1;
        if len > CAPACITY {
            return None;
        }
        let mut out = Poly::zero();
        for i in 0..self.len {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..other.len {
                out.coeffs[i + j] += a * other.coeffs[j];
            }
        }
        out.len = len;
        out.trim();
        Some(out)
    }

    pub fn powi(&self, n: u32) -> Option<Poly> {
        let mut acc = Poly::constant(1.0);
        let mut base = *self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base)?;
            }
        }
        Some(acc)
    }

    /// Antiderivative vanishing at zero.
    pub fn integrate(&self) -> Option<Poly> {
        if self.len == 0 {
            return Some(Poly::zero());
        }
        if self.len + 1 > CAPACITY {
            return None;
        }
        let mut out = Poly::zero();
        for i in 0..self.len {
            out.coeffs[i + 1] = self.coeffs[i] / (i as f64 + 1.0);
        }
        out.len = self.len + 1;
        out.trim();
        Some(out)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs[..self.len].iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}
