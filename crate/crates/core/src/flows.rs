//! Flow maps, their compositions, commutator approximants, transport
//! straightening and asymptotic residual fits.

use alloc::string::String;
use alloc::vec::Vec;

use crate::basis::{Basis, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{lie_bracket, VectorField};
use crate::geometry::Aabb;
use crate::linalg::{fit_line, numerical_rank};
use crate::ode::{integrate, FlowSolverConfig};
use crate::quad::adaptive;
use crate::scalar::ScalarField;

/// `e^{τZ} x`.
pub fn flow(z: &VectorField, x: &[f64], tau: f64, cfg: &FlowSolverConfig) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; x.len()];
    integrate(z, x, tau, cfg, &mut out)?;
    Ok(out)
}

/// `η(τ, x) = e^{τ_1 Z_1} ∘ ⋯ ∘ e^{τ_n Z_n} x`; the last factor acts first.
pub fn flow_compose(basis: &Basis, taus: &[f64], x: &[f64], cfg: &FlowSolverConfig) -> Result<Vec<f64>> {
    if taus.len() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: taus.len() });
    }
    let mut y = x.to_vec();
    let mut tmp = alloc::vec![0.0; x.len()];
    for (z, &tau) in basis.fields().iter().zip(taus).rev() {
        integrate(z, &y, tau, cfg, &mut tmp)?;
        core::mem::swap(&mut y, &mut tmp);
    }
    Ok(y)
}

/// The four-fold product approximating `e^{s[Z_1, Z_2]} y`.
///
/// For `s ≥ 0` the steps are `+r Z_1, +r Z_2, −r Z_1, −r Z_2` with
/// `r = √s`; for `s < 0` they are `+r Z_2, +r Z_1, −r Z_2, −r Z_1` with
/// `r = √|s|`.
pub fn commutator_flow(z1: &VectorField, z2: &VectorField, s: f64, y: &[f64], cfg: &FlowSolverConfig) -> Result<Vec<f64>> {
    if z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch { expected: z1.dim(), found: z2.dim() });
    }
    if s == 0.0 {
        return Ok(y.to_vec());
    }
    let r = libm::sqrt(libm::fabs(s));
    let steps: [(&VectorField, f64); 4] =
        if s > 0.0 { [(z1, r), (z2, r), (z1, -r), (z2, -r)] } else { [(z2, r), (z1, r), (z2, -r), (z1, -r)] };
    let mut a = y.to_vec();
    let mut b = alloc::vec![0.0; y.len()];
    for (z, tau) in steps {
        integrate(z, &a, tau, cfg, &mut b)?;
        core::mem::swap(&mut a, &mut b);
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    /// Step parameter (`s` or `t`).
    pub step: f64,
    pub residual: f64,
    /// Above the noise floor and used in the fit.
    pub included: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlopeEstimate {
    /// Least-squares fit of `log residual` against `log step`.
    Fitted { slope: f64, intercept: f64 },
    /// Every residual is below the noise floor.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualFit {
    pub samples: Vec<ResidualSample>,
    pub estimate: SlopeEstimate,
    pub noise_floor: f64,
}

impl ResidualFit {
    pub fn slope(&self) -> Option<f64> {
        match self.estimate {
            SlopeEstimate::Fitted { slope, .. } => Some(slope),
            SlopeEstimate::Degenerate => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.estimate == SlopeEstimate::Degenerate
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidConfig(String::from("step grid must contain positive finite values")));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig(String::from("step grid must be strictly decreasing")));
    }
    Ok(())
}

fn fit_residuals(steps: &[f64], residuals: Vec<f64>, cfg: &FlowSolverConfig) -> Result<ResidualFit> {
    let noise_floor = 100.0 * cfg.abs_tol;
    let samples: Vec<ResidualSample> = steps
        .iter()
        .zip(&residuals)
        .map(|(&step, &residual)| ResidualSample { step, residual, included: residual >= noise_floor })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        samples.iter().filter(|s| s.included).map(|s| (libm::log(s.step), libm::log(s.residual))).unzip();
    let estimate = match xs.len() {
        0 => SlopeEstimate::Degenerate,
        1 | 2 => return Err(Error::InsufficientPoints { usable: xs.len() }),
        _ => {
            let (slope, intercept) = fit_line(&xs, &ys);
            SlopeEstimate::Fitted { slope, intercept }
        }
    };
    Ok(ResidualFit { samples, estimate, noise_floor })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
}

/// Residual of the commutator approximant against the bracket flow,
/// `|F(s) y − e^{s[Z_1,Z_2]} y|`, and its log–log slope.
pub fn residual_exponent(
    z1: &VectorField,
    z2: &VectorField,
    y: &[f64],
    s_grid: &[f64],
    cfg: &FlowSolverConfig,
) -> Result<ResidualFit> {
    check_grid(s_grid)?;
    let bracket = lie_bracket(z1, z2)?;
    let mut residuals = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let approx = commutator_flow(z1, z2, s, y, cfg)?;
        let exact = flow(&bracket, y, s, cfg)?;
        residuals.push(distance(&approx, &exact));
    }
    fit_residuals(s_grid, residuals, cfg)
}

/// Solution operator of `(∂/∂t − X) p = 0`, `p(x, 0) = x`, for a field
/// `X` on ℝ^{n+1} without `∂/∂t` component.
#[derive(Clone, Debug)]
pub struct Straightening {
    source: VectorField,
    characteristic: VectorField,
    cfg: FlowSolverConfig,
}

/// Builds the straightening of `x_field`. Characteristics must stay in
/// `bounds` (a box in ℝ^{n+1}) when one is given.
pub fn straighten(x_field: &VectorField, bounds: Option<&Aabb>, cfg: &FlowSolverConfig) -> Result<Straightening> {
    cfg.validate()?;
    let d = x_field.dim();
    if d < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: d });
    }
    let t_coeff = &x_field.coeffs()[d - 1];
    if !t_coeff.is_zero() {
        return Err(Error::InvalidConfig(alloc::format!("straightening needs a zero ∂/∂t coefficient, found {t_coeff}")));
    }
    let mut coeffs: Vec<Expr> = x_field.coeffs()[..d - 1].to_vec();
    coeffs.push(Expr::Const(-1.0));
    let characteristic = VectorField::new(coeffs)?;
    if let Some(b) = bounds {
        if b.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: b.dim() });
        }
    }
    let cfg = FlowSolverConfig { bounds: bounds.cloned(), ..cfg.clone() };
    Ok(Straightening { source: x_field.clone(), characteristic, cfg })
}

impl Straightening {
    pub fn source(&self) -> &VectorField {
        &self.source
    }

    /// Dimension `n` of the slice.
    pub fn slice_dim(&self) -> usize {
        self.source.dim() - 1
    }

    /// `p(x, t)`: follow the characteristic from `(x, t)` back to the slice.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = self.slice_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        if t == 0.0 {
            return Ok(x.to_vec());
        }
        let mut z = x.to_vec();
        z.push(t);
        let mut out = flow(&self.characteristic, &z, t, &self.cfg)?;
        out.truncate(n);
        Ok(out)
    }

    /// `h(y, s)`: the point at height `s` on the characteristic through `(y, 0)`.
    pub fn inverse(&self, y: &[f64], s: f64) -> Result<Vec<f64>> {
        let n = self.slice_dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if s == 0.0 {
            return Ok(y.to_vec());
        }
        let mut z = y.to_vec();
        z.push(0.0);
        let mut out = flow(&self.characteristic, &z, -s, &self.cfg)?;
        out.truncate(n);
        Ok(out)
    }
}

/// `φ(x, t) = φ_0(p(x, t)) + ∫_0^t f(h(p(x, t), τ), τ) dτ`.
pub fn reconstruct(
    phi0: &dyn ScalarField,
    f: &dyn ScalarField,
    st: &Straightening,
    x: &[f64],
    t: f64,
    tol: f64,
) -> Result<f64> {
    let n = st.slice_dim();
    if phi0.dim() != n || f.dim() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n, found: phi0.dim() });
    }
    let y = st.forward(x, t)?;
    let base = phi0.eval(&y)?;
    let mut point = alloc::vec![0.0; n + 1];
    let integral = adaptive(
        |tau| {
            let h = st.inverse(&y, tau)?;
            point[..n].copy_from_slice(&h);
            point[n] = tau;
            f.eval(&point)
        },
        0.0,
        t,
        tol,
    )?;
    Ok(base + integral)
}

/// `|e^{−tY} p(x, t) − x|` over `t_grid` with its log–log slope.
pub fn defect_residual(
    y_field: &VectorField,
    x_field: &VectorField,
    x: &[f64],
    t_grid: &[f64],
    cfg: &FlowSolverConfig,
) -> Result<ResidualFit> {
    check_grid(t_grid)?;
    if x_field.dim() != y_field.dim() + 1 {
        return Err(Error::DimensionMismatch { expected: y_field.dim() + 1, found: x_field.dim() });
    }
    let bounds = cfg.bounds.as_ref().filter(|b| b.dim() == x_field.dim());
    let st = straighten(x_field, bounds, cfg)?;
    let slice_cfg = match &cfg.bounds {
        Some(b) if b.dim() == x_field.dim() => cfg.clone().with_bounds(b.project()),
        _ => cfg.clone(),
    };
    let mut residuals = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let p = st.forward(x, t)?;
        let back = flow(y_field, &p, -t, &slice_cfg)?;
        residuals.push(distance(&back, x));
    }
    fit_residuals(t_grid, residuals, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    /// Finite-difference Jacobian columns `∂η/∂τ_j` at `τ = 0`.
    pub columns: Vec<Vec<f64>>,
    /// `Z_j(x)` for comparison.
    pub expected: Vec<Vec<f64>>,
    /// Max column error over the first layer.
    pub first_layer_error: f64,
    /// Max column error over all fields.
    pub max_error: f64,
    pub rank: usize,
    pub full_rank: bool,
}

/// Checks that `τ ↦ η(τ, x)` has Jacobian columns `Z_j(x)` at the origin,
/// using central differences with each step in `tau_scales` and keeping
/// the most accurate column.
pub fn eta_frame_check(basis: &Basis, x: &[f64], tau_scales: &[f64], cfg: &FlowSolverConfig) -> Result<FrameReport> {
    if tau_scales.is_empty() || tau_scales.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidConfig(String::from("tau_scales must be positive")));
    }
    let n = basis.len();
    let mut columns = Vec::with_capacity(n);
    let mut expected = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for j in 0..n {
        let target = basis.field(j).evaluate(x)?;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &h in tau_scales {
            let mut taus = alloc::vec![0.0; n];
            taus[j] = h;
            let plus = flow_compose(basis, &taus, x, cfg)?;
            taus[j] = -h;
            let minus = flow_compose(basis, &taus, x, cfg)?;
            let col: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let err = col.iter().zip(&target).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, col));
            }
        }
        let (err, col) = best.expect("at least one scale");
        errors.push(err);
        columns.push(col);
        expected.push(target);
    }
    let rank = numerical_rank(&columns, DEFAULT_RANK_TOL);
    let first_layer_error = errors[..basis.k()].iter().copied().fold(0.0, f64::max);
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(FrameReport { columns, expected, first_layer_error, max_error, rank, full_rank: rank == basis.dim() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::FnField;
    use alloc::vec;

    fn f(texts: &[&str]) -> VectorField {
        VectorField::parse(texts, texts.len()).unwrap()
    }

    fn cfg() -> FlowSolverConfig {
        FlowSolverConfig::default()
    }

    fn heisenberg_basis() -> Basis {
        Basis::with_brackets(vec![f(&["1", "0", "0"]), f(&["0", "1", "x1"])], &[(0, 1)]).unwrap()
    }

    #[test]
    fn heisenberg_flow_closed_form() {
        let z2 = f(&["0", "1", "x1"]);
        let y = flow(&z2, &[0.3, -0.1, 0.2], 0.5, &cfg()).unwrap();
        assert!((y[1] - 0.4).abs() < 1e-14 && (y[2] - (0.2 + 0.15)).abs() < 1e-14);
    }

    #[test]
    fn compose_applies_last_field_first() {
        let b = heisenberg_basis();
        let y = flow_compose(&b, &[0.2, 0.3, 0.4], &[0.0; 3], &cfg()).unwrap();
        assert_eq!(y, vec![0.2, 0.3, 0.4]);
        // from x = (1, 0, 0): e^{0.3 Z_2} moves x3 by 0.3 before e^{0.2 Z_1}
        let y = flow_compose(&b, &[0.2, 0.3, 0.0], &[1.0, 0.0, 0.0], &cfg()).unwrap();
        assert!((y[2] - 0.3).abs() < 1e-15 && (y[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn commutator_of_heisenberg_pair_is_exact() {
        let (z1, z2) = (f(&["1", "0", "0"]), f(&["0", "1", "x1"]));
        for s in [0.25, -0.25, 1e-3, -1e-3] {
            let y = commutator_flow(&z1, &z2, s, &[0.0; 3], &cfg()).unwrap();
            assert!(y[0].abs() < 1e-15 && y[1].abs() < 1e-15 && (y[2] - s).abs() < 1e-15, "{s}: {y:?}");
        }
        assert_eq!(commutator_flow(&z1, &z2, 0.0, &[0.1, 0.2, 0.3], &cfg()).unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn residual_fit_classifies_exact_cases() {
        let (z1, z2) = (f(&["1", "0", "0"]), f(&["0", "1", "x1"]));
        let grid: Vec<f64> = (4..=12).map(|j| libm::ldexp(1.0, -j)).collect();
        let fit = residual_exponent(&z1, &z2, &[0.0; 3], &grid, &cfg()).unwrap();
        assert!(fit.is_degenerate());
        assert!(fit.samples.iter().all(|s| !s.included));
        let bad = residual_exponent(&z1, &z2, &[0.0; 3], &[0.1, 0.2], &cfg());
        assert!(bad.is_err());
    }

    #[test]
    fn straightening_of_translation() {
        let st = straighten(&f(&["1", "0", "0"]), None, &cfg()).unwrap();
        let p = st.forward(&[0.1, 0.2], 0.3).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15 && p[1] == 0.2);
        assert_eq!(st.forward(&[0.1, 0.2], 0.0).unwrap(), vec![0.1, 0.2]);
        let back = st.inverse(&p, 0.3).unwrap();
        assert!((back[0] - 0.1).abs() < 1e-15);
        assert!(straighten(&f(&["1", "x1"]), None, &cfg()).is_err());
    }

    #[test]
    fn reconstruct_with_zero_source() {
        let st = straighten(&f(&["1", "0"]), None, &cfg()).unwrap();
        let phi0 = FnField { dim: 1, f: |x: &[f64]| x[0] * x[0], support: None };
        let zero = FnField { dim: 2, f: |_: &[f64]| 0.0, support: None };
        let v = reconstruct(&phi0, &zero, &st, &[0.2], 0.3, 1e-9).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn frame_of_heisenberg_basis() {
        let rep = eta_frame_check(&heisenberg_basis(), &[0.0; 3], &[1e-3, 1e-4], &cfg()).unwrap();
        assert!(rep.full_rank);
        assert!(rep.max_error < 1e-9);
        assert!((rep.columns[2][2] - 1.0).abs() < 1e-9);
    }
}
