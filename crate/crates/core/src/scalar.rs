//! Real-valued functions exposed as evaluators with optional closed-form
//! gradients and declared supports.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Aabb;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    /// Closed form with an exact gradient.
    ClosedForm,
    /// Built from operators (averages, reflections); derivatives need
    /// finite differences.
    Composed,
}

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<f64>;

    /// Writes `∇f(x)` into `grad`. Returns `Ok(false)` when no closed form
    /// is available.
    fn gradient(&self, _x: &[f64], _grad: &mut [f64]) -> Result<bool> {
        Ok(false)
    }

    /// Bounding box of the support, if compact.
    fn support(&self) -> Option<Aabb> {
        None
    }

    /// For functions on ℝ^{n+1}: a box containing the x-support of
    /// `f(·, t)`.
    fn slice_support(&self, _t: f64) -> Option<Aabb> {
        self.support().map(|b| b.project())
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::ClosedForm
    }
}

pub type SharedField = Arc<dyn ScalarField>;

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> Result<f64> {
        (**self).eval(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        (**self).gradient(x, grad)
    }
    fn support(&self) -> Option<Aabb> {
        (**self).support()
    }
    fn slice_support(&self, t: f64) -> Option<Aabb> {
        (**self).slice_support(t)
    }
    fn smoothness(&self) -> Smoothness {
        (**self).smoothness()
    }
}

/// `exp(1 − 1/(1 − r²))` for `r = |x − c|/scale < 1`, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, scale: f64) -> Bump {
        Bump { center, scale }
    }

    fn r2(&self, x: &[f64]) -> f64 {
        let inv = 1.0 / self.scale;
        x.iter().zip(&self.center).map(|(a, c)| ((a - c) * inv) * ((a - c) * inv)).sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let u = self.r2(x);
        if u >= 1.0 {
            0.0
        } else {
            libm::exp(1.0 - 1.0 / (1.0 - u))
        }
    }
}

impl ScalarField for Bump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x))
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let u = self.r2(x);
        if u >= 1.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return Ok(true);
        }
        let b = libm::exp(1.0 - 1.0 / (1.0 - u));
        let factor = -b / ((1.0 - u) * (1.0 - u)) * 2.0 / (self.scale * self.scale);
        for (g, (a, c)) in grad.iter_mut().zip(x.iter().zip(&self.center)) {
            *g = factor * (a - c);
        }
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        Some(Aabb {
            lo: self.center.iter().map(|c| c - self.scale).collect(),
            hi: self.center.iter().map(|c| c + self.scale).collect(),
        })
    }
}

/// A parsed expression with its exact gradient.
#[derive(Clone, Debug)]
pub struct ExprField {
    expr: Expr,
    grad: Vec<Expr>,
    support: Option<Aabb>,
}

impl ExprField {
    pub fn new(expr: Expr, dim: usize) -> Result<ExprField> {
        if let Some(m) = expr.max_var() {
            if m >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m + 1 });
            }
        }
        let grad = (0..dim).map(|i| expr.derivative(i)).collect();
        Ok(ExprField { expr, grad, support: None })
    }

    pub fn parse(text: &str, dim: usize) -> Result<ExprField> {
        ExprField::new(Expr::parse(text, dim)?, dim)
    }

    pub fn constant(c: f64, dim: usize) -> ExprField {
        ExprField::new(Expr::Const(c), dim).expect("constants have no variables")
    }

    /// Declares that the expression is only used on `support`; values
    /// outside are taken to be zero.
    pub fn with_support(mut self, support: Aabb) -> ExprField {
        self.support = Some(support);
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl ScalarField for ExprField {
    fn dim(&self) -> usize {
        self.grad.len()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        if let Some(s) = &self.support {
            if !s.contains(x) {
                return Ok(0.0);
            }
        }
        Ok(self.expr.eval(x))
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let outside = self.support.as_ref().is_some_and(|s| !s.contains(x));
        for (g, e) in grad.iter_mut().zip(&self.grad) {
            *g = if outside { 0.0 } else { e.eval(x) };
        }
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        self.support.clone()
    }
}

/// Pointwise product of two fields on the same space.
#[derive(Clone)]
pub struct Product {
    pub a: SharedField,
    pub b: SharedField,
}

impl ScalarField for Product {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let a = self.a.eval(x)?;
        if a == 0.0 {
            return Ok(0.0);
        }
        Ok(a * self.b.eval(x)?)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let d = self.dim();
        let mut ga = alloc::vec![0.0; d];
        let mut gb = alloc::vec![0.0; d];
        if !self.a.gradient(x, &mut ga)? || !self.b.gradient(x, &mut gb)? {
            return Ok(false);
        }
        let (a, b) = (self.a.eval(x)?, self.b.eval(x)?);
        for i in 0..d {
            grad[i] = ga[i] * b + a * gb[i];
        }
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        match (self.a.support(), self.b.support()) {
            (Some(s), Some(t)) => s.intersect(&t).or(Some(s)),
            (s, t) => s.or(t),
        }
    }

    fn smoothness(&self) -> Smoothness {
        worst(self.a.smoothness(), self.b.smoothness())
    }
}

fn worst(a: Smoothness, b: Smoothness) -> Smoothness {
    if a == Smoothness::ClosedForm && b == Smoothness::ClosedForm {
        Smoothness::ClosedForm
    } else {
        Smoothness::Composed
    }
}

/// `φ(x, t) = ψ(x) · ρ(t)` on ℝ^{n+1}.
#[derive(Clone)]
pub struct Separable {
    pub space: SharedField,
    pub time: SharedField,
}

impl ScalarField for Separable {
    fn dim(&self) -> usize {
        self.space.dim() + 1
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.space.dim();
        let r = self.time.eval(&x[n..])?;
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(self.space.eval(&x[..n])? * r)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let n = self.space.dim();
        let mut gt = [0.0];
        if !self.space.gradient(&x[..n], &mut grad[..n])? || !self.time.gradient(&x[n..], &mut gt)? {
            return Ok(false);
        }
        let (s, r) = (self.space.eval(&x[..n])?, self.time.eval(&x[n..])?);
        grad[..n].iter_mut().for_each(|g| *g *= r);
        grad[n] = s * gt[0];
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        let s = self.space.support()?;
        let t = self.time.support()?;
        Some(s.extend(t.lo[0], t.hi[0]))
    }

    fn slice_support(&self, _t: f64) -> Option<Aabb> {
        self.space.support()
    }

    fn smoothness(&self) -> Smoothness {
        worst(self.space.smoothness(), self.time.smoothness())
    }
}

/// `Σ c_i f_i`.
#[derive(Clone)]
pub struct Combination {
    pub terms: Vec<(f64, SharedField)>,
}

impl Combination {
    pub fn scaled(c: f64, f: SharedField) -> Combination {
        Combination { terms: alloc::vec![(c, f)] }
    }
}

impl ScalarField for Combination {
    fn dim(&self) -> usize {
        self.terms[0].1.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (c, f) in &self.terms {
            acc += c * f.eval(x)?;
        }
        Ok(acc)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let mut tmp = alloc::vec![0.0; grad.len()];
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (c, f) in &self.terms {
            if !f.gradient(x, &mut tmp)? {
                return Ok(false);
            }
            for (g, v) in grad.iter_mut().zip(&tmp) {
                *g += c * v;
            }
        }
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        hull(self.terms.iter().map(|(_, f)| f.support()))
    }

    fn slice_support(&self, t: f64) -> Option<Aabb> {
        hull(self.terms.iter().map(|(_, f)| f.slice_support(t)))
    }

    fn smoothness(&self) -> Smoothness {
        self.terms.iter().fold(Smoothness::ClosedForm, |s, (_, f)| worst(s, f.smoothness()))
    }
}

fn hull(mut boxes: impl Iterator<Item = Option<Aabb>>) -> Option<Aabb> {
    let mut acc = boxes.next()??;
    for b in boxes {
        let b = b?;
        for i in 0..acc.dim() {
            acc.lo[i] = acc.lo[i].min(b.lo[i]);
            acc.hi[i] = acc.hi[i].max(b.hi[i]);
        }
    }
    Some(acc)
}

/// Wraps a closure; handy for oracles and tests.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
    pub support: Option<Aabb>,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }

    fn support(&self) -> Option<Aabb> {
        self.support.clone()
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Composed
    }
}
