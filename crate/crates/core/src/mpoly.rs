//! Closed-form flow maps of triangular polynomial fields.
//!
//! When every coefficient of `Z` is a polynomial in coordinates integrated
//! before it, the curve `σ ↦ e^{σZ} x` is a polynomial in `(x, σ)`. The
//! map is built symbolically once and stored as, for every coordinate, the
//! list of `x`-polynomial coefficients of `σ^m`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::expr::{powi, Expr};

/// Largest power of the flow time kept.
pub const MAX_TIME_DEGREE: usize = 24;
const MAX_TERMS: usize = 4096;

/// Sparse polynomial over `nv` variables, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq)]
struct MPoly {
    nv: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl MPoly {
    fn constant(nv: usize, c: f64) -> MPoly {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(alloc::vec![0; nv], c);
        }
        MPoly { nv, terms }
    }

    fn var(nv: usize, i: usize) -> MPoly {
        let mut e = alloc::vec![0; nv];
        e[i] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, 1.0);
        MPoly { nv, terms }
    }

    fn as_const(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.iter().next().filter(|(e, _)| e.iter().all(|&v| v == 0)).map(|(_, c)| *c),
            _ => None,
        }
    }

    fn scale(mut self, s: f64) -> MPoly {
        if s == 0.0 {
            self.terms.clear();
        }
        self.terms.values_mut().for_each(|c| *c *= s);
        self
    }

    fn add(mut self, other: &MPoly) -> Option<MPoly> {
        for (e, c) in &other.terms {
            let slot = self.terms.entry(e.clone()).or_insert(0.0);
            *slot += c;
            if *slot == 0.0 {
                self.terms.remove(e);
            }
        }
        (self.terms.len() <= MAX_TERMS).then_some(self)
    }

    fn mul(&self, other: &MPoly) -> Option<MPoly> {
        let mut out = MPoly { nv: self.nv, terms: BTreeMap::new() };
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut e = ea.clone();
                for (u, v) in e.iter_mut().zip(eb) {
                    *u = u.checked_add(*v)?;
                }
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
            if out.terms.len() > MAX_TERMS {
                return None;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        Some(out)
    }

    fn powi(&self, n: u32) -> Option<MPoly> {
        let mut acc = MPoly::constant(self.nv, 1.0);
        for _ in 0..n {
            acc = acc.mul(self)?;
        }
        Some(acc)
    }

    /// `∫_0^σ p dσ` where `σ` is the last variable.
    fn integrate_last(&self) -> Option<MPoly> {
        let s = self.nv - 1;
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let mut e = e.clone();
            if e[s] as usize >= MAX_TIME_DEGREE {
                return None;
            }
            let k = e[s] as f64 + 1.0;
            e[s] += 1;
            terms.insert(e, c / k);
        }
        Some(MPoly { nv: self.nv, terms })
    }
}

fn from_expr(e: &Expr, vars: &[MPoly], nv: usize) -> Option<MPoly> {
    Some(match e {
        Expr::Const(c) => MPoly::constant(nv, *c),
        Expr::Var(i) => vars[*i].clone(),
        Expr::Neg(a) => from_expr(a, vars, nv)?.scale(-1.0),
        Expr::Add(a, b) => from_expr(a, vars, nv)?.add(&from_expr(b, vars, nv)?)?,
        Expr::Sub(a, b) => from_expr(a, vars, nv)?.add(&from_expr(b, vars, nv)?.scale(-1.0))?,
        Expr::Mul(a, b) => from_expr(a, vars, nv)?.mul(&from_expr(b, vars, nv)?)?,
        Expr::Pow(a, n) => {
            let base = from_expr(a, vars, nv)?;
            if *n >= 0 {
                base.powi(*n as u32)?
            } else {
                MPoly::constant(nv, powi(base.as_const()?, *n))
            }
        }
        Expr::Func(f, a) => MPoly::constant(nv, f.apply(from_expr(a, vars, nv)?.as_const()?)),
    })
}

/// Polynomial in `x` stored as coefficients and `(variable, exponent)` factor lists.
#[derive(Clone, Debug, PartialEq, Default)]
struct SparsePoly {
    coeffs: Vec<f64>,
    /// `ends[i]` is one past the last factor of term `i`.
    ends: Vec<u32>,
    factors: Vec<(u8, u8)>,
}

impl SparsePoly {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut start = 0;
        for (c, &end) in self.coeffs.iter().zip(&self.ends) {
            let mut term = *c;
            for &(v, e) in &self.factors[start..end as usize] {
                let xv = x[v as usize];
                term *= match e {
                    1 => xv,
                    2 => xv * xv,
                    _ => powi(xv, e as i32),
                };
            }
            acc += term;
            start = end as usize;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFlow {
    dim: usize,
    /// Coefficients of `σ^m` for coordinate `j` sit at
    /// `offsets[j] + m`, lowest power first.
    polys: Vec<SparsePoly>,
    offsets: Vec<usize>,
}

impl PolyFlow {
    /// Builds the flow map; `None` when a coefficient is not polynomial
    /// along the curve or the size budget is exceeded.
    pub fn compile(coeffs: &[Expr], order: &[usize]) -> Option<PolyFlow> {
        let d = coeffs.len();
        let nv = d + 1;
        let mut curve: Vec<MPoly> = (0..d).map(|j| MPoly::var(nv, j)).collect();
        for &j in order {
            let rate = from_expr(&coeffs[j], &curve, nv)?;
            curve[j] = MPoly::var(nv, j).add(&rate.integrate_last()?)?;
        }
        let mut polys = Vec::new();
        let mut offsets = Vec::with_capacity(d + 1);
        for p in &curve {
            offsets.push(polys.len());
            let top = p.terms.keys().map(|e| e[d] as usize).max().unwrap_or(0);
            let base = polys.len();
            polys.extend((0..=top).map(|_| SparsePoly::default()));
            for (e, c) in &p.terms {
                let sp = &mut polys[base + e[d] as usize];
                sp.coeffs.push(*c);
                for (v, &k) in e[..d].iter().enumerate() {
                    if k > 0 {
                        sp.factors.push((v as u8, k));
                    }
                }
                sp.ends.push(sp.factors.len() as u32);
            }
        }
        offsets.push(polys.len());
        Some(PolyFlow { dim: d, polys, offsets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of slots `coefficients` writes.
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Every coordinate is affine in the flow time, so curves are segments.
    pub fn is_affine_in_time(&self) -> bool {
        self.offsets.windows(2).all(|w| w[1] - w[0] <= 2)
    }

    /// Evaluates every `σ^m` coefficient at the base point `x`.
    pub fn coefficients(&self, x: &[f64], buf: &mut [f64]) {
        for (b, p) in buf.iter_mut().zip(&self.polys) {
            *b = p.eval(x);
        }
    }

    /// The curve at time `sigma`, from the output of `coefficients`.
    pub fn eval_at(&self, buf: &[f64], sigma: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &buf[self.offsets[j]..self.offsets[j + 1]];
            *o = row.iter().rev().fold(0.0, |acc, c| acc * sigma + c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;

    fn compile(texts: &[&str]) -> PolyFlow {
        let f = VectorField::parse(texts, texts.len()).unwrap();
        PolyFlow::compile(f.coeffs(), f.triangular_order().unwrap()).unwrap()
    }

    fn run(p: &PolyFlow, x: &[f64], s: f64) -> Vec<f64> {
        let mut buf = alloc::vec![0.0; p.len()];
        let mut out = alloc::vec![0.0; p.dim()];
        p.coefficients(x, &mut buf);
        p.eval_at(&buf, s, &mut out);
        out
    }

    #[test]
    fn heisenberg_flow_map() {
        let p = compile(&["0", "1", "x1"]);
        let y = run(&p, &[0.5, 0.25, -1.0], 0.75);
        assert_eq!(y, [0.5, 1.0, -1.0 + 0.375]);
    }

    #[test]
    fn chained_coordinates() {
        // x1' = 1, x2' = x1², x3' = x2: x2 = x2₀ + ((x1₀+σ)³ − x1₀³)/3
        let p = compile(&["1", "x1^2", "x2"]);
        let (a, b, c, s) = (0.3, -0.2, 0.1, 0.6);
        let y = run(&p, &[a, b, c], s);
        let x2 = b + ((a + s) * (a + s) * (a + s) - a * a * a) / 3.0;
        let x3 = c + b * s + ((a + s).powi(4) - a.powi(4)) / 12.0 - a * a * a * s / 3.0;
        assert!((y[1] - x2).abs() < 1e-15 && (y[2] - x3).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpolynomial_curves() {
        let f = VectorField::parse(&["1", "exp(x1)"], 2).unwrap();
        assert!(PolyFlow::compile(f.coeffs(), f.triangular_order().unwrap()).is_none());
        let g = VectorField::parse(&["1", "exp(0.5)*x1"], 2).unwrap();
        assert!(PolyFlow::compile(g.coeffs(), g.triangular_order().unwrap()).is_some());
    }
}
