//! Restriction to `t = 0`, Hardy averages along flows, the extension
//! `ψ ↦ ρ S(Eψ)` and its building blocks.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::ode::{integrate, FlowSolverConfig, MAX_DIM};
use crate::quad::GaussLegendre;
use crate::scalar::{Bump, ScalarField, SharedField, Smoothness};

/// Parameters of the extension operator.
#[derive(Clone, Debug)]
pub struct ExtensionConfig {
    basis: Basis,
    delta: f64,
    quad_order: usize,
    rule: GaussLegendre,
    seeley: Vec<(f64, f64)>,
    cutoff_radius: f64,
    v: Aabb,
    v2: Aabb,
    /// `sup_V |Z_i^a|` for field `i`, axis `a`.
    speeds: Vec<Vec<f64>>,
    flow: FlowSolverConfig,
}

impl ExtensionConfig {
    /// Defaults: 12 Gauss nodes per axis, Seeley pairs `(3, 1), (−2, 2)`,
    /// cutoff radius `δ / max b_i`.
    pub fn new(basis: Basis, delta: f64, v: Aabb, v2: Aabb) -> Result<ExtensionConfig> {
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig(String::from("extension delta must be positive")));
        }
        if basis.dim() != v.dim() || v2.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: v.dim(), found: basis.dim() });
        }
        if !v2.compactly_within(&v) {
            return Err(Error::NotNested { inner: "V2", outer: "V" });
        }
        let speeds = basis.fields().iter().map(|z| sup_speeds(z, &v)).collect::<Result<Vec<_>>>()?;
        let mut cfg = ExtensionConfig {
            basis,
            delta,
            quad_order: 12,
            rule: GaussLegendre::new(12),
            seeley: alloc::vec![(3.0, 1.0), (-2.0, 2.0)],
            cutoff_radius: 0.0,
            flow: FlowSolverConfig::default().with_bounds(v.clone()),
            v,
            v2,
            speeds,
        };
        cfg.cutoff_radius = delta / cfg.b_max();
        Ok(cfg)
    }

    pub fn with_quad_order(mut self, order: usize) -> Result<ExtensionConfig> {
        if order == 0 {
            return Err(Error::InvalidConfig(String::from("quad_order must be positive")));
        }
        self.quad_order = order;
        self.rule = GaussLegendre::new(order);
        Ok(self)
    }

    /// Replaces the Seeley pairs `(a_i, b_i)`; requires `Σ a_i = 1`,
    /// `Σ a_i (−b_i) = 1` and `b_i > 0`. The cutoff radius is reset to
    /// `δ / max b_i`.
    pub fn with_seeley(mut self, pairs: Vec<(f64, f64)>) -> Result<ExtensionConfig> {
        let sum_a: f64 = pairs.iter().map(|(a, _)| a).sum();
        let sum_ab: f64 = pairs.iter().map(|(a, b)| -a * b).sum();
        if pairs.is_empty() || pairs.iter().any(|(_, b)| !(*b > 0.0)) {
            return Err(Error::InvalidConfig(String::from("Seeley reflections need b_i > 0")));
        }
        if libm::fabs(sum_a - 1.0) > 1e-12 || libm::fabs(sum_ab - 1.0) > 1e-12 {
            return Err(Error::InvalidConfig(alloc::format!(
                "Seeley coefficients must satisfy sum a = 1 and sum a(-b) = 1 (got {sum_a}, {sum_ab})"
            )));
        }
        self.seeley = pairs;
        self.cutoff_radius = self.delta / self.b_max();
        Ok(self)
    }

    /// Radius of the cutoff `ρ(t) = b(t / radius)`; at most `δ / max b_i`.
    pub fn with_cutoff_radius(mut self, radius: f64) -> Result<ExtensionConfig> {
        let limit = self.delta / self.b_max();
        if !(radius > 0.0 && radius <= limit) {
            return Err(Error::OutOfRange { value: radius, lo: 0.0, hi: limit });
        }
        self.cutoff_radius = radius;
        Ok(self)
    }

    pub fn with_flow_config(mut self, flow: FlowSolverConfig) -> ExtensionConfig {
        self.flow = flow.with_bounds(self.v.clone());
        self
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn seeley(&self) -> &[(f64, f64)] {
        &self.seeley
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff_radius
    }

    pub fn v(&self) -> &Aabb {
        &self.v
    }

    pub fn v2(&self) -> &Aabb {
        &self.v2
    }

    pub fn flow_config(&self) -> &FlowSolverConfig {
        &self.flow
    }

    fn b_max(&self) -> f64 {
        self.seeley.iter().map(|(_, b)| *b).fold(0.0, f64::max)
    }

    /// Averaging window of field `i`: `t` on the first layer, `t²` above it.
    pub fn window(&self, i: usize, t: f64) -> f64 {
        if self.basis.is_bracket(i) {
            t * t
        } else {
            t
        }
    }

    /// Per-axis bound on `|η(τ, x) − x|` for `τ` in the box of height `t`.
    pub fn reach(&self, t: f64) -> Vec<f64> {
        let n = self.v.dim();
        (0..n)
            .map(|a| (0..self.basis.len()).map(|i| self.window(i, t) * self.speeds[i][a]).sum())
            .collect()
    }
}

/// `sup_V |Z^a|` per axis from a lattice including the faces, with a 10% margin.
fn sup_speeds(z: &crate::field::VectorField, v: &Aabb) -> Result<Vec<f64>> {
    let n = v.dim();
    let per_axis: usize = if n <= 3 { 9 } else { 5 };
    let total = per_axis.pow(n as u32);
    let mut x = alloc::vec![0.0; n];
    let mut out = alloc::vec![0.0f64; n];
    let mut val = alloc::vec![0.0; n];
    for idx in 0..total {
        let mut k = idx;
        for (a, xv) in x.iter_mut().enumerate() {
            *xv = v.lo[a] + v.width(a) * (k % per_axis) as f64 / (per_axis - 1) as f64;
            k /= per_axis;
        }
        z.eval_into(&x, &mut val);
        for a in 0..n {
            if !val[a].is_finite() {
                return Err(Error::NonFinite { context: "field coefficient on V" });
            }
            out[a] = out[a].max(libm::fabs(val[a]));
        }
    }
    Ok(out.into_iter().map(|s| 1.1 * s).collect())
}

/// `Rφ(x) = φ(x, 0)`.
#[derive(Clone)]
pub struct Restriction {
    phi: SharedField,
}

pub fn restrict(phi: SharedField) -> Restriction {
    Restriction { phi }
}

impl ScalarField for Restriction {
    fn dim(&self) -> usize {
        self.phi.dim() - 1
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut z = [0.0; MAX_DIM + 1];
        let n = x.len();
        z[..n].copy_from_slice(x);
        self.phi.eval(&z[..=n])
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<bool> {
        let n = x.len();
        let mut z = alloc::vec![0.0; n + 1];
        z[..n].copy_from_slice(x);
        let mut g = alloc::vec![0.0; n + 1];
        if !self.phi.gradient(&z, &mut g)? {
            return Ok(false);
        }
        grad.copy_from_slice(&g[..n]);
        Ok(true)
    }

    fn support(&self) -> Option<Aabb> {
        self.phi.slice_support(0.0)
    }

    fn smoothness(&self) -> Smoothness {
        self.phi.smoothness()
    }
}

fn check_t(t: f64, cfg: &ExtensionConfig) -> Result<()> {
    if !(t > 0.0 && t <= cfg.delta) {
        return Err(Error::OutOfRange { value: t, lo: 0.0, hi: cfg.delta });
    }
    Ok(())
}

/// `H_i ψ(x, t)`: the mean of `ψ(e^{τZ_i} x)` over `τ ∈ [0, t]` (first
/// layer) or `τ ∈ [0, t²]` (bracket layer), by Gauss quadrature.
pub fn hardy_average(psi: &dyn ScalarField, i: usize, cfg: &ExtensionConfig, x: &[f64], t: f64) -> Result<f64> {
    check_t(t, cfg)?;
    if i >= cfg.basis.len() {
        return Err(Error::OutOfRange { value: i as f64, lo: 0.0, hi: cfg.basis.len() as f64 });
    }
    let z = cfg.basis.field(i);
    let window = cfg.window(i, t);
    let mut y = [0.0; MAX_DIM];
    let n = x.len();
    let mut acc = 0.0;
    for (tau, w) in cfg.rule.on(0.0, window) {
        integrate(z, x, tau, &cfg.flow, &mut y[..n])?;
        acc += w * psi.eval(&y[..n])?;
    }
    Ok(acc / window)
}

/// `Hψ(x, t)`: the mean of `ψ(η(τ, x))` over `[0, t]^k × [0, t²]^{n−k}`
/// with `η(τ, x) = e^{τ_1 Z_1} ∘ ⋯ ∘ e^{τ_n Z_n} x`, by tensor Gauss
/// quadrature. Flows along `Z_n` are taken first and shared by every
/// inner node.
pub fn extend_h(psi: &dyn ScalarField, cfg: &ExtensionConfig, x: &[f64], t: f64) -> Result<f64> {
    check_t(t, cfg)?;
    let n = x.len();
    if n != cfg.basis.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.basis.dim(), found: n });
    }
    let levels = cfg.basis.len();
    let windows: Vec<f64> = (0..levels).map(|i| cfg.window(i, t)).collect();
    // Normalized rule on [0, 1]: nodes and weights summing to 1.
    let unit: Vec<(f64, f64)> = cfg.rule.on(0.0, 1.0).collect();
    let mut stack = alloc::vec![0.0; (levels + 1) * n];
    stack[levels * n..].copy_from_slice(x);
    average_level(psi, cfg, &windows, &unit, levels, &mut stack, n)
}

/// Averages over the flows of fields `0..level` starting from the point
/// stored in slot `level` of `stack`.
fn average_level(
    psi: &dyn ScalarField,
    cfg: &ExtensionConfig,
    windows: &[f64],
    unit: &[(f64, f64)],
    level: usize,
    stack: &mut [f64],
    n: usize,
) -> Result<f64> {
    if level == 0 {
        return psi.eval(&stack[..n]);
    }
    let i = level - 1;
    let z = cfg.basis.field(i);
    let (below, here) = stack.split_at_mut(level * n);
    let from = &here[..n];
    let mut acc = 0.0;
    for &(u, w) in unit {
        integrate(z, from, u * windows[i], &cfg.flow, &mut below[i * n..level * n])?;
        acc += w * average_level(psi, cfg, windows, unit, i, below, n)?;
    }
    Ok(acc)
}

fn support_box(psi: &dyn ScalarField) -> Result<Aabb> {
    psi.support().ok_or(Error::MissingSupport)
}

/// `Eψ`: `ψ(x)` at `t = 0` and `Hψ(x, t)` for `0 < t < δ`.
#[derive(Clone)]
pub struct Extension {
    psi: SharedField,
    support: Aabb,
    cfg: Arc<ExtensionConfig>,
}

pub fn extend_e(psi: SharedField, cfg: Arc<ExtensionConfig>) -> Result<Extension> {
    let support = support_box(&*psi)?;
    if !support.within(&cfg.v2) {
        return Err(Error::SupportViolation { context: "supp ψ must lie in V2" });
    }
    if psi.dim() != cfg.basis.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.basis.dim(), found: psi.dim() });
    }
    Ok(Extension { psi, support, cfg })
}

impl Extension {
    pub fn config(&self) -> &ExtensionConfig {
        &self.cfg
    }

    /// Box containing the `x`-support of `Hψ(·, t)`.
    pub fn support_at(&self, t: f64) -> Aabb {
        if t == 0.0 {
            return self.support.clone();
        }
        self.support.inflate(&self.cfg.reach(libm::fabs(t)))
    }
}

impl ScalarField for Extension {
    fn dim(&self) -> usize {
        self.psi.dim() + 1
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        let n = self.psi.dim();
        let (x, t) = (&z[..n], z[n]);
        if t == 0.0 {
            return self.psi.eval(x);
        }
        if !(t > 0.0 && t < self.cfg.delta) {
            return Err(Error::OutOfRange { value: t, lo: 0.0, hi: self.cfg.delta });
        }
        if !self.support_at(t).contains(x) {
            return Ok(0.0);
        }
        extend_h(&*self.psi, &self.cfg, x, t)
    }

    fn support(&self) -> Option<Aabb> {
        Some(self.support_at(self.cfg.delta).extend(0.0, self.cfg.delta))
    }

    fn slice_support(&self, t: f64) -> Option<Aabb> {
        Some(self.support_at(t))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Composed
    }
}

/// `Sφ(x, t) = φ(x, t)` for `t ≥ 0` and `Σ a_i φ(x, −b_i t)` for `t < 0`.
#[derive(Clone)]
pub struct Seeley {
    phi: SharedField,
    pairs: Vec<(f64, f64)>,
    delta: f64,
}

pub fn seeley_extend(phi: SharedField, cfg: &ExtensionConfig) -> Seeley {
    Seeley { phi, pairs: cfg.seeley.clone(), delta: cfg.delta }
}

impl Seeley {
    fn b_max(&self) -> f64 {
        self.pairs.iter().map(|(_, b)| *b).fold(0.0, f64::max)
    }

    /// Largest `|t|` on the negative side.
    pub fn lower_limit(&self) -> f64 {
        self.delta / self.b_max()
    }
}

impl ScalarField for Seeley {
    fn dim(&self) -> usize {
        self.phi.dim()
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        let n = z.len() - 1;
        let t = z[n];
        if t >= 0.0 {
            return self.phi.eval(z);
        }
        if -t >= self.lower_limit() {
            return Err(Error::OutOfRange { value: t, lo: -self.lower_limit(), hi: self.delta });
        }
        let mut w = [0.0; MAX_DIM + 1];
        w[..n].copy_from_slice(&z[..n]);
        let mut acc = 0.0;
        for &(a, b) in &self.pairs {
            w[n] = -b * t;
            acc += a * self.phi.eval(&w[..=n])?;
        }
        Ok(acc)
    }

    fn support(&self) -> Option<Aabb> {
        let s = self.phi.support()?;
        let n = s.dim() - 1;
        let lo = -s.hi[n] / self.b_max();
        Some(Aabb { lo: s.lo[..n].iter().copied().chain([lo.min(s.lo[n])]).collect(), hi: s.hi.clone() })
    }

    fn slice_support(&self, t: f64) -> Option<Aabb> {
        if t >= 0.0 {
            return self.phi.slice_support(t);
        }
        // hull over the reflected heights
        let mut acc: Option<Aabb> = None;
        for &(_, b) in &self.pairs {
            let s = self.phi.slice_support(-b * t)?;
            acc = Some(match acc {
                None => s,
                Some(a) => Aabb {
                    lo: a.lo.iter().zip(&s.lo).map(|(u, v)| u.min(*v)).collect(),
                    hi: a.hi.iter().zip(&s.hi).map(|(u, v)| u.max(*v)).collect(),
                },
            });
        }
        acc
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Composed
    }
}

/// `(x, t) ↦ ρ(t) · S(Eψ)(x, t)` with `ρ(t) = b(t / radius)`.
#[derive(Clone)]
pub struct FullExtension {
    seeley: Seeley,
    cutoff: Bump,
    radius: f64,
}

pub fn full_extension(psi: SharedField, cfg: Arc<ExtensionConfig>) -> Result<FullExtension> {
    let radius = cfg.cutoff_radius;
    let seeley = seeley_extend(Arc::new(extend_e(psi, cfg.clone())?), &cfg);
    Ok(FullExtension { seeley, cutoff: Bump::new(alloc::vec![0.0], radius), radius })
}

impl FullExtension {
    /// The cutoff `ρ`.
    pub fn cutoff(&self, t: f64) -> f64 {
        self.cutoff.value(&[t])
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl ScalarField for FullExtension {
    fn dim(&self) -> usize {
        self.seeley.dim()
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        let t = z[z.len() - 1];
        if libm::fabs(t) >= self.radius {
            return Ok(0.0);
        }
        let r = self.cutoff(t);
        Ok(r * self.seeley.eval(z)?)
    }

    fn support(&self) -> Option<Aabb> {
        let lo = self.seeley.slice_support(-self.radius * (1.0 - 1e-12))?;
        let hi = self.seeley.slice_support(self.radius)?;
        let x = Aabb {
            lo: lo.lo.iter().zip(&hi.lo).map(|(u, v)| u.min(*v)).collect(),
            hi: lo.hi.iter().zip(&hi.hi).map(|(u, v)| u.max(*v)).collect(),
        };
        Some(x.extend(-self.radius, self.radius))
    }

    fn slice_support(&self, t: f64) -> Option<Aabb> {
        self.seeley.slice_support(t)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Composed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::bump;
    use crate::field::VectorField;
    use crate::scalar::{ExprField, Separable};
    use alloc::vec;

    fn heisenberg_cfg() -> ExtensionConfig {
        let f = |t: &[&str]| VectorField::parse(t, 3).unwrap();
        let basis = Basis::with_brackets(vec![f(&["1", "0", "0"]), f(&["0", "1", "x1"])], &[(0, 1)]).unwrap();
        ExtensionConfig::new(basis, 0.2, Aabb::cube(3, 0.0, 1.0), Aabb::cube(3, 0.0, 0.4)).unwrap()
    }

    #[test]
    fn averages_of_coordinates() {
        let cfg = heisenberg_cfg();
        let x1 = ExprField::parse("x1", 3).unwrap();
        let x3 = ExprField::parse("x3", 3).unwrap();
        let x = [0.1, -0.2, 0.3];
        let t = 0.15;
        assert!((hardy_average(&x1, 0, &cfg, &x, t).unwrap() - (0.1 + t / 2.0)).abs() < 1e-15);
        assert!((hardy_average(&x3, 2, &cfg, &x, t).unwrap() - (0.3 + t * t / 2.0)).abs() < 1e-15);
        let c = ExprField::constant(2.5, 3);
        assert!((extend_h(&c, &cfg, &x, t).unwrap() - 2.5).abs() < 1e-14);
        assert!(hardy_average(&x1, 0, &cfg, &x, 0.0).is_err());
    }

    #[test]
    fn heisenberg_h_of_x2() {
        // η(τ, x) = (x1 + a, x2 + b, x3 + c + x1 b) for τ = (a, b, c)
        let cfg = heisenberg_cfg();
        let x2 = ExprField::parse("x2", 3).unwrap();
        let x3 = ExprField::parse("x3", 3).unwrap();
        let t = 0.2;
        assert!((extend_h(&x2, &cfg, &[0.0; 3], t).unwrap() - t / 2.0).abs() < 1e-15);
        // mean of x3 + c + x1 b with x1 = 0.3 → x3 + t²/2 + 0.3 t/2
        let v = extend_h(&x3, &cfg, &[0.3, 0.0, 0.1], t).unwrap();
        assert!((v - (0.1 + t * t / 2.0 + 0.3 * t / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn seeley_on_monomials() {
        let cfg = heisenberg_cfg();
        let mk = |text: &str| -> SharedField { Arc::new(ExprField::parse(text, 2).unwrap()) };
        let c = seeley_extend(mk("4"), &cfg);
        assert!((c.eval(&[0.0, -0.05]).unwrap() - 4.0).abs() < 1e-15);
        let lin = seeley_extend(mk("x2"), &cfg);
        assert!((lin.eval(&[0.0, -0.05]).unwrap() + 0.05).abs() < 1e-15);
        let quad = seeley_extend(mk("x2^2"), &cfg);
        assert!((quad.eval(&[0.0, -0.05]).unwrap() + 5.0 * 0.0025).abs() < 1e-15);
        assert!(lin.eval(&[0.0, -0.2]).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = heisenberg_cfg();
        assert!((cfg.cutoff_radius() - 0.1).abs() < 1e-15);
        assert!(cfg.clone().with_seeley(vec![(1.0, 1.0)]).is_err());
        assert!(cfg.clone().with_cutoff_radius(0.15).is_err());
        assert!(cfg.with_quad_order(0).is_err());
    }

    #[test]
    fn roundtrip_and_support_errors() {
        let cfg = Arc::new(heisenberg_cfg().with_quad_order(4).unwrap());
        let psi: SharedField = Arc::new(bump(&[0.05, 0.0, -0.1], 0.2));
        let ext = full_extension(psi.clone(), cfg.clone()).unwrap();
        let r = restrict(Arc::new(ext.clone()));
        for x in [[0.05, 0.0, -0.1], [0.1, 0.1, 0.0], [0.5, 0.5, 0.5]] {
            assert_eq!(r.eval(&x).unwrap(), psi.eval(&x).unwrap());
        }
        assert_eq!(ext.eval(&[0.0, 0.0, 0.0, 0.1]).unwrap(), 0.0);
        let outside: SharedField = Arc::new(bump(&[0.35, 0.0, 0.0], 0.2));
        assert!(matches!(extend_e(outside, cfg), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn restriction_of_products() {
        let phi: SharedField = Arc::new(Separable {
            space: Arc::new(bump(&[0.0, 0.0], 0.5)),
            time: Arc::new(bump(&[0.0], 0.3)),
        });
        let r = restrict(phi);
        assert_eq!(r.eval(&[0.1, 0.2]).unwrap(), bump(&[0.0, 0.0], 0.5).value(&[0.1, 0.2]));
        let tphi: SharedField = Arc::new(ExprField::parse("x3*x1", 3).unwrap());
        assert_eq!(restrict(tphi).eval(&[0.4, 0.1]).unwrap(), 0.0);
    }
}
