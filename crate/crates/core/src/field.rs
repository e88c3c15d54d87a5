//! Vector fields with expression coefficients and their bracket algebra.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mpoly::PolyFlow;

/// `Σ_j c_j(x) ∂/∂x_j` on ℝ^d. On ℝ^{n+1} the last slot is the `∂/∂t`
/// coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    coeffs: Vec<Expr>,
    /// Order in which coordinates can be integrated one after another when
    /// every coefficient depends only on coordinates earlier in the order.
    triangular: Option<Vec<usize>>,
    flow_map: Option<Arc<PolyFlow>>,
}

impl VectorField {
    pub fn new(coeffs: Vec<Expr>) -> Result<Self> {
        let dim = coeffs.len();
        if dim == 0 || dim > 63 {
            return Err(Error::InvalidConfig(String::from("field dimension must be in 1..=63")));
        }
        if let Some(m) = coeffs.iter().filter_map(Expr::max_var).max() {
            if m >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m + 1 });
            }
        }
        let coeffs: Vec<Expr> = coeffs.iter().map(Expr::simplify).collect();
        let triangular = triangular_order(&coeffs);
        let flow_map = triangular.as_ref().and_then(|o| PolyFlow::compile(&coeffs, o)).map(Arc::new);
        Ok(VectorField { coeffs, triangular, flow_map })
    }

    /// Parses one coefficient string per coordinate.
    pub fn parse<S: AsRef<str>>(texts: &[S], dim: usize) -> Result<Self> {
        if texts.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: texts.len() });
        }
        let coeffs = texts.iter().map(|s| Expr::parse(s.as_ref(), dim)).collect::<Result<Vec<_>>>()?;
        VectorField::new(coeffs)
    }

    /// `∂/∂x_{axis+1}` on ℝ^dim.
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        let coeffs = (0..dim).map(|j| Expr::Const(if j == axis { 1.0 } else { 0.0 })).collect();
        VectorField::new(coeffs).expect("valid coordinate field")
    }

    pub fn zero(dim: usize) -> Self {
        VectorField::new((0..dim).map(|_| Expr::zero()).collect()).expect("valid zero field")
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    pub fn triangular_order(&self) -> Option<&[usize]> {
        self.triangular.as_deref()
    }

    /// Closed-form flow map, present for triangular polynomial fields.
    pub fn flow_map(&self) -> Option<&PolyFlow> {
        self.flow_map.as_deref()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.eval(x);
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.coeffs.iter().map(|c| c.eval(x)).collect())
    }

    /// The derivation `f ↦ Σ_j c_j ∂_j f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        self.coeffs
            .iter()
            .enumerate()
            .fold(Expr::zero(), |acc, (j, c)| Expr::add(acc, Expr::mul(c.clone(), f.derivative(j))))
    }

    pub fn divergence(&self) -> Expr {
        self.coeffs
            .iter()
            .enumerate()
            .fold(Expr::zero(), |acc, (j, c)| Expr::add(acc, c.derivative(j)))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Expr::is_zero)
    }

    pub fn scale(&self, s: f64) -> VectorField {
        self.scale_by(&Expr::Const(s))
    }

    /// Multiplies every coefficient by the function `a`.
    pub fn scale_by(&self, a: &Expr) -> VectorField {
        VectorField::new(self.coeffs.iter().map(|c| Expr::mul(a.clone(), c.clone())).collect())
            .expect("scaling keeps the dimension")
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.same_dim(other)?;
        VectorField::new(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| Expr::add(a.clone(), b.clone())).collect(),
        )
    }

    /// `Σ a_i(x) F_i` for function coefficients `a_i`.
    pub fn combination(terms: &[(Expr, &VectorField)]) -> Result<VectorField> {
        let (_, first) = terms.first().ok_or_else(|| Error::InvalidConfig(String::from("empty combination")))?;
        let mut acc = VectorField::zero(first.dim());
        for (a, f) in terms {
            acc = acc.add(&f.scale_by(a))?;
        }
        Ok(acc)
    }

    fn same_dim(&self, other: &VectorField) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    /// Lifts a field on ℝ^n to ℝ^{n+1} with a zero `∂/∂t` slot.
    pub fn lift(&self) -> VectorField {
        let mut coeffs = self.coeffs.clone();
        coeffs.push(Expr::zero());
        VectorField::new(coeffs).expect("lift adds one slot")
    }

    /// `X|_{t=0}` for a field on ℝ^{n+1}: substitutes `t = 0` and drops the
    /// `∂/∂t` slot, which must vanish on the slice.
    pub fn restrict_to_slice(&self) -> Result<VectorField> {
        let d = self.dim();
        if d < 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: d });
        }
        let t = d - 1;
        let transverse = self.coeffs[t].substitute(t, 0.0);
        if !transverse.is_zero() {
            // Not symbolically zero; check a grid of the unit box.
            let max_abs = slice_grid_max(&transverse, t);
            if max_abs > 1e-10 {
                return Err(Error::TransverseComponent { max_abs });
            }
        }
        VectorField::new(self.coeffs[..t].iter().map(|c| c.substitute(t, 0.0)).collect())
    }
}

fn slice_grid_max(e: &Expr, t: usize) -> f64 {
    let n = t;
    let per_axis: usize = if n <= 3 { 9 } else { 5 };
    let total = per_axis.pow(n as u32);
    let mut x = alloc::vec![0.0; n + 1];
    let mut worst: f64 = 0.0;
    for mut idx in 0..total {
        for v in x.iter_mut().take(n) {
            *v = -1.0 + 2.0 * (idx % per_axis) as f64 / (per_axis - 1) as f64;
            idx /= per_axis;
        }
        let v = e.eval(&x).abs();
        worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
    }
    worst
}

fn triangular_order(coeffs: &[Expr]) -> Option<Vec<usize>> {
    let d = coeffs.len();
    let deps: Vec<u64> = coeffs.iter().map(Expr::var_mask).collect();
    let mut placed = 0u64;
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let next = (0..d).find(|&j| placed & (1 << j) == 0 && deps[j] & !placed == 0)?;
        placed |= 1 << next;
        order.push(next);
    }
    Some(order)
}

/// `[X, Y]`, with coefficient `j` equal to `X(Y^j) − Y(X^j)`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    x.same_dim(y)?;
    let coeffs = (0..x.dim()).map(|j| Expr::sub(x.apply(&y.coeffs[j]), y.apply(&x.coeffs[j]))).collect();
    VectorField::new(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(texts: &[&str]) -> VectorField {
        VectorField::parse(texts, texts.len()).unwrap()
    }

    #[test]
    fn evaluates_the_heisenberg_field() {
        let z = f(&["0", "1", "x1"]);
        assert_eq!(z.evaluate(&[2.0, 0.0, 0.0]).unwrap(), [0.0, 1.0, 2.0]);
        assert!(matches!(z.evaluate(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_field_vanishes_on_the_slice() {
        let x = f(&["t^2", "0", "0"]);
        assert_eq!(x.evaluate(&[0.3, -0.2, 0.0]).unwrap(), [0.0, 0.0, 0.0]);
        assert!(x.restrict_to_slice().unwrap().is_zero());
    }

    #[test]
    fn brackets() {
        let z1 = f(&["1", "0", "0", "0"]);
        let z2 = f(&["0", "1", "x1", "0"]);
        assert_eq!(lie_bracket(&z1, &z2).unwrap(), VectorField::coordinate(4, 2));
        assert!(lie_bracket(&z2, &z2).unwrap().is_zero());
        // [x1 ∂2, x2 ∂1] = x1 ∂1 − x2 ∂2
        let b = lie_bracket(&f(&["0", "x1"]), &f(&["x2", "0"])).unwrap();
        assert_eq!(b.evaluate(&[0.3, 0.7]).unwrap(), [0.3, -0.7]);
        assert!(lie_bracket(&z1, &f(&["1", "0"])).is_err());
    }

    #[test]
    fn slice_restriction() {
        let x = f(&["1", "t", "0"]);
        assert_eq!(x.restrict_to_slice().unwrap(), f(&["1", "0"]));
        let bad = f(&["1", "0", "1 + x1"]);
        assert!(matches!(bad.restrict_to_slice(), Err(Error::TransverseComponent { .. })));
        // vanishes on t = 0 only after substitution
        let ok = f(&["x2", "0", "t*x1"]);
        assert_eq!(ok.restrict_to_slice().unwrap(), f(&["x2", "0"]));
    }

    #[test]
    fn triangular_detection() {
        assert_eq!(f(&["0", "1", "x1"]).triangular_order(), Some(&[0, 1, 2][..]));
        assert_eq!(f(&["x3", "1", "x2"]).triangular_order(), Some(&[1, 2, 0][..]));
        assert!(f(&["x2", "x1"]).triangular_order().is_none());
        assert!(f(&["x1", "0"]).triangular_order().is_none());
    }
}
