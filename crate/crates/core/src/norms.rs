//! `L^p` norms, moduli of continuity along flows and translations, the
//! flow-Besov norm, the anisotropic Sobolev norm and the Hardy–Littlewood
//! ratio.
//!
//! Moduli of compactly supported functions are integrated on the support
//! box `A` only: for a flow map `Φ` that keeps `A` inside `V`,
//!
//! ```text
//! ‖ψ∘Φ − ψ‖_p^p = ∫_A |ψ∘Φ − ψ|^p + ∫_A |ψ|^p J − ∫_A |ψ∘Φ|^p,
//! ```
//!
//! with `J = |det DΦ^{-1}|`, which is 1 for divergence-free fields and is
//! obtained from Liouville's formula otherwise.

use alloc::string::String;
use alloc::vec::Vec;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::Aabb;
use crate::linalg::pairwise_sum;
use crate::ode::{integrate, FlowSolverConfig, MAX_DIM};
use crate::quad::GaussLegendre;
use crate::scalar::ScalarField;

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub p: f64,
    /// Upper limit of the `dt/t` integrals.
    pub delta: f64,
    /// Log-spaced nodes on `[δ 2^{−t_floor_exponent}, δ]`.
    pub t_nodes: usize,
    /// `m`: the sup over `|τ| ≤ t` samples `τ = ±t i/m`.
    pub tau_samples: usize,
    /// Midpoint cells per axis on support boxes and `t`-slices.
    pub grid_res: usize,
    pub t_floor_exponent: i32,
    /// Gauss nodes per `t`-panel in the Sobolev norm.
    pub panel_nodes: usize,
    /// Allow central differences for functions without a closed-form gradient.
    pub finite_differences: bool,
}

impl Default for NormParams {
    fn default() -> Self {
        NormParams {
            p: 2.0,
            delta: 0.2,
            t_nodes: 48,
            tau_samples: 8,
            grid_res: 33,
            t_floor_exponent: 16,
            panel_nodes: 4,
            finite_differences: true,
        }
    }
}

impl NormParams {
    pub fn new(p: f64, delta: f64) -> Result<NormParams> {
        let params = NormParams { p, delta, ..NormParams::default() };
        params.validate()?;
        Ok(params)
    }

    /// `θ = 1 − 1/p`.
    pub fn theta(&self) -> f64 {
        1.0 - 1.0 / self.p
    }

    /// `σ = (1 − 1/p)/2`.
    pub fn sigma(&self) -> f64 {
        0.5 * (1.0 - 1.0 / self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::OutOfRange { value: self.p, lo: 1.0, hi: f64::INFINITY });
        }
        if !(self.delta > 0.0) || self.t_nodes < 2 || self.tau_samples < 1 || self.grid_res < 1 || self.panel_nodes < 1 {
            return Err(Error::InvalidConfig(String::from(
                "norm parameters need delta > 0, t_nodes >= 2 and positive sample counts",
            )));
        }
        Ok(())
    }

    /// The `dt/t` quadrature nodes, increasing.
    pub fn t_grid(&self) -> Vec<f64> {
        let n = self.t_nodes;
        let lo = -(self.t_floor_exponent as f64);
        (0..n)
            .map(|j| self.delta * libm::exp2(lo * (1.0 - j as f64 / (n - 1) as f64)))
            .collect()
    }

    /// Doubles every quadrature resolution except the spatial grid.
    pub fn refined(&self) -> NormParams {
        NormParams {
            t_nodes: 2 * self.t_nodes,
            tau_samples: 2 * self.tau_samples,
            panel_nodes: 2 * self.panel_nodes,
            ..self.clone()
        }
    }
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        libm::pow(libm::fabs(x), p)
    }
}

fn root(sum: f64, p: f64) -> f64 {
    if p == 2.0 {
        libm::sqrt(sum)
    } else {
        libm::pow(sum, 1.0 / p)
    }
}

/// `(Σ |f(x_i)|^p · cellvol)^{1/p}` over the midpoint grid of `region`.
pub fn lp_norm(f: &dyn ScalarField, region: &Aabb, p: f64, grid_res: usize) -> Result<f64> {
    let grid = region.midpoint_grid(grid_res);
    let mut x = alloc::vec![0.0; region.dim()];
    let mut terms = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        grid.point(i, &mut x);
        let v = f.eval(&x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "lp_norm sample" });
        }
        terms.push(pow_abs(v, p));
    }
    Ok(root(pairwise_sum(&terms) * region.cell_volume(grid_res), p))
}

/// `‖f‖_{L^p(V)}` integrating over `supp f ∩ V` when the support is declared.
pub fn lp_norm_on(f: &dyn ScalarField, v: &Aabb, p: f64, grid_res: usize) -> Result<f64> {
    match f.support() {
        Some(s) => match s.intersect(v) {
            Some(a) => lp_norm(f, &a, p, grid_res),
            None => Ok(0.0),
        },
        None => lp_norm(f, v, p, grid_res),
    }
}

/// Samples of `ψ` on the integration region of a modulus.
struct Sampled {
    n: usize,
    points: Vec<f64>,
    values: Vec<f64>,
    cell: f64,
    /// `ψ` has a declared support and the region is `supp ψ ∩ V`.
    supported: bool,
    base: f64,
}

impl Sampled {
    fn new(psi: &dyn ScalarField, v: &Aabb, p: f64, grid_res: usize) -> Result<Option<Sampled>> {
        let (region, supported) = match psi.support() {
            Some(s) => match s.intersect(v) {
                Some(a) => (a, true),
                None => return Ok(None),
            },
            None => (v.clone(), false),
        };
        let n = region.dim();
        let grid = region.midpoint_grid(grid_res);
        let mut points = alloc::vec![0.0; n * grid.len()];
        let mut values = Vec::with_capacity(grid.len());
        for (i, x) in points.chunks_mut(n).enumerate() {
            grid.point(i, x);
            let val = psi.eval(x)?;
            if !val.is_finite() {
                return Err(Error::NonFinite { context: "modulus sample" });
            }
            values.push(val);
        }
        let base = pairwise_sum(&values.iter().map(|v| pow_abs(*v, p)).collect::<Vec<_>>());
        Ok(Some(Sampled { n, points, values, cell: region.cell_volume(grid_res), supported, base }))
    }

    /// `‖ψ∘Φ − ψ‖_{L^p(V)}`; `jac(y)` is `|det DΦ^{-1}(y)|` (or `None` for 1)
    /// and `inside(y)` tells whether `Φ^{-1}(y) ∈ V`.
    fn distance(
        &self,
        psi: &dyn ScalarField,
        p: f64,
        map: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
        mut jac: Option<&mut dyn FnMut(&[f64]) -> Result<f64>>,
        mut inside: Option<&mut dyn FnMut(&[f64]) -> bool>,
    ) -> Result<f64> {
        let count = self.values.len();
        let mut diff = Vec::with_capacity(count);
        let mut moved = Vec::with_capacity(count);
        let mut weighted = Vec::new();
        let mut y = [0.0; MAX_DIM];
        for (i, x) in self.points.chunks(self.n).enumerate() {
            map(x, &mut y[..self.n])?;
            let v = psi.eval(&y[..self.n])?;
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "modulus sample" });
            }
            diff.push(pow_abs(v - self.values[i], p));
            if self.supported {
                moved.push(pow_abs(v, p));
                if jac.is_some() || inside.is_some() {
                    let mut w = pow_abs(self.values[i], p);
                    if let Some(inside) = inside.as_mut() {
                        if !inside(x) {
                            w = 0.0;
                        }
                    }
                    if w != 0.0 {
                        if let Some(jac) = jac.as_mut() {
                            w *= jac(x)?;
                        }
                    }
                    weighted.push(w);
                }
            }
        }
        let mut total = pairwise_sum(&diff);
        if self.supported {
            let mass = if jac.is_some() || inside.is_some() { pairwise_sum(&weighted) } else { self.base };
            total += (mass - pairwise_sum(&moved)).max(0.0);
        }
        Ok(root(total * self.cell, p))
    }
}

/// `|det D e^{−τZ}(y)| = exp(−∫_0^τ div Z(e^{−uZ} y) du)`.
struct Liouville<'a> {
    z: &'a VectorField,
    div: crate::expr::Expr,
    rule: GaussLegendre,
}

impl<'a> Liouville<'a> {
    fn new(z: &'a VectorField) -> Option<Liouville<'a>> {
        let div = z.divergence();
        (!div.is_zero()).then(|| Liouville { z, div, rule: GaussLegendre::new(8) })
    }

    fn jacobian(&self, y: &[f64], tau: f64, cfg: &FlowSolverConfig) -> Result<f64> {
        let mut w = [0.0; MAX_DIM];
        let n = y.len();
        let mut acc = 0.0;
        for (u, wt) in self.rule.on(0.0, tau) {
            integrate(self.z, y, -u, cfg, &mut w[..n])?;
            acc += wt * self.div.eval(&w[..n]);
        }
        Ok(libm::exp(-acc))
    }
}

fn check_support(psi: &dyn ScalarField, v1: &Aabb) -> Result<()> {
    match psi.support() {
        Some(s) if !s.within(v1) => Err(Error::SupportViolation { context: "supp ψ must lie in V1" }),
        _ => Ok(()),
    }
}

fn flow_modulus_sampled(
    sampled: &Sampled,
    t: f64,
    psi: &dyn ScalarField,
    z: &VectorField,
    params: &NormParams,
    cfg: &FlowSolverConfig,
) -> Result<f64> {
    if t == 0.0 || z.is_zero() {
        return Ok(0.0);
    }
    let liouville = if sampled.supported { Liouville::new(z) } else { None };
    let m = params.tau_samples;
    let mut best: f64 = 0.0;
    for i in 1..=m {
        for sign in [1.0, -1.0] {
            let tau = sign * t * i as f64 / m as f64;
            let mut map = |x: &[f64], y: &mut [f64]| integrate(z, x, tau, cfg, y);
            let mut jac_fn;
            let jac: Option<&mut dyn FnMut(&[f64]) -> Result<f64>> = match &liouville {
                Some(l) => {
                    jac_fn = move |y: &[f64]| l.jacobian(y, tau, cfg);
                    Some(&mut jac_fn)
                }
                None => None,
            };
            best = best.max(sampled.distance(psi, params.p, &mut map, jac, None)?);
        }
    }
    Ok(best)
}

fn modulus_cfg(sampled: &Sampled, v: &Aabb, cfg: &FlowSolverConfig) -> FlowSolverConfig {
    if sampled.supported {
        cfg.clone().with_bounds(v.clone())
    } else {
        cfg.clone().without_bounds()
    }
}

/// `max_{τ = ±t i/m} ‖ψ∘e^{τZ} − ψ‖_{L^p(V)}`.
///
/// Functions with a declared support are integrated on `supp ψ ∩ V` and
/// their flows must stay in `V`; otherwise the grid covers `V` and flows
/// are unconstrained.
pub fn flow_modulus(
    t: f64,
    psi: &dyn ScalarField,
    z: &VectorField,
    v1: &Aabb,
    v: &Aabb,
    params: &NormParams,
    cfg: &FlowSolverConfig,
) -> Result<f64> {
    params.validate()?;
    check_support(psi, v1)?;
    let Some(sampled) = Sampled::new(psi, v, params.p, params.grid_res)? else {
        return Ok(0.0);
    };
    flow_modulus_sampled(&sampled, t, psi, z, params, &modulus_cfg(&sampled, v, cfg))
}

/// Unit shift directions: `±e_i` and the `2^n` diagonals.
fn shift_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = alloc::vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n > 1 {
        let norm = 1.0 / libm::sqrt(n as f64);
        for mask in 0..(1usize << n) {
            dirs.push((0..n).map(|i| if mask >> i & 1 == 1 { -norm } else { norm }).collect());
        }
    }
    dirs
}

fn classical_modulus_sampled(sampled: &Sampled, t: f64, psi: &dyn ScalarField, v: &Aabb, p: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for dir in shift_directions(sampled.n) {
        let s: Vec<f64> = dir.iter().map(|d| t * d).collect();
        let mut map = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = x[i] + s[i];
            }
            Ok(())
        };
        let mut inside_fn = |y: &[f64]| y.iter().zip(&s).enumerate().all(|(i, (a, b))| v.lo[i] <= a - b && a - b <= v.hi[i]);
        best = best.max(sampled.distance(psi, p, &mut map, None, Some(&mut inside_fn))?);
    }
    Ok(best)
}

/// `max ‖ψ(· + s) − ψ‖_{L^p(V)}` over shifts `s = t·u`, `u` running over
/// `±e_i` and the normalized diagonals.
pub fn classical_modulus(t: f64, psi: &dyn ScalarField, v: &Aabb, p: f64, grid_res: usize) -> Result<f64> {
    let Some(sampled) = Sampled::new(psi, v, p, grid_res)? else {
        return Ok(0.0);
    };
    classical_modulus_sampled(&sampled, t, psi, v, p)
}

/// Trapezoid rule in `log t` for `∫ g(t) dt/t`.
fn log_trapezoid(ts: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 1..ts.len() {
        acc += 0.5 * (g[j] + g[j - 1]) * libm::log(ts[j] / ts[j - 1]);
    }
    acc
}

/// `{∫ [t^{−exponent} ω(t)]^p dt/t}^{1/p}` from moduli sampled at increasing `ts`.
pub fn modulus_seminorm(ts: &[f64], omegas: &[f64], exponent: f64, p: f64) -> f64 {
    besov_part(ts, omegas, exponent, p)
}

fn besov_part(ts: &[f64], omegas: &[f64], exponent: f64, p: f64) -> f64 {
    let g: Vec<f64> = ts.iter().zip(omegas).map(|(t, w)| pow_abs(w * libm::pow(*t, -exponent), p)).collect();
    root(log_trapezoid(ts, &g), p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BesovNorm {
    pub total: f64,
    pub lp: f64,
    /// One seminorm per first-layer field.
    pub seminorms: Vec<f64>,
}

/// `‖ψ‖_{L^p(V)} + Σ_i {∫_0^δ [t^{−θ} ω_i(t)]^p dt/t}^{1/p}` over the
/// first layer of `beta_prime`.
pub fn flow_besov_breakdown(
    psi: &dyn ScalarField,
    beta_prime: &Basis,
    v1: &Aabb,
    v: &Aabb,
    params: &NormParams,
    cfg: &FlowSolverConfig,
) -> Result<BesovNorm> {
    params.validate()?;
    check_support(psi, v1)?;
    let fields = beta_prime.first_layer_fields();
    let Some(sampled) = Sampled::new(psi, v, params.p, params.grid_res)? else {
        return Ok(BesovNorm { total: 0.0, lp: 0.0, seminorms: alloc::vec![0.0; fields.len()] });
    };
    let lp = root(sampled.base * sampled.cell, params.p);
    let cfg = modulus_cfg(&sampled, v, cfg);
    let ts = params.t_grid();
    let mut seminorms = Vec::with_capacity(fields.len());
    for z in fields {
        let omegas = ts
            .iter()
            .map(|&t| flow_modulus_sampled(&sampled, t, psi, z, params, &cfg))
            .collect::<Result<Vec<_>>>()?;
        seminorms.push(besov_part(&ts, &omegas, params.theta(), params.p));
    }
    Ok(BesovNorm { total: lp + seminorms.iter().sum::<f64>(), lp, seminorms })
}

pub fn flow_besov_norm(
    psi: &dyn ScalarField,
    beta_prime: &Basis,
    v1: &Aabb,
    v: &Aabb,
    params: &NormParams,
    cfg: &FlowSolverConfig,
) -> Result<f64> {
    flow_besov_breakdown(psi, beta_prime, v1, v, params, cfg).map(|b| b.total)
}

/// `{∫_0^δ [t^{−σ} ω(t)]^p dt/t}^{1/p}` with the translation modulus.
pub fn classical_besov_seminorm(psi: &dyn ScalarField, v: &Aabb, params: &NormParams) -> Result<f64> {
    params.validate()?;
    let Some(sampled) = Sampled::new(psi, v, params.p, params.grid_res)? else {
        return Ok(0.0);
    };
    let ts = params.t_grid();
    let omegas = ts
        .iter()
        .map(|&t| classical_modulus_sampled(&sampled, t, psi, v, params.p))
        .collect::<Result<Vec<_>>>()?;
    Ok(besov_part(&ts, &omegas, params.sigma(), params.p))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SobolevNorm {
    pub total: f64,
    pub lp: f64,
    /// `‖Y_j φ‖_{L^p(U)}` per basis field.
    pub derivative_norms: Vec<f64>,
}

/// Gauss nodes in `t` on `[lo, hi]`, graded geometrically towards `t = 0`
/// down to `scale / 4`.
fn t_nodes(lo: f64, hi: f64, scale: f64, per_panel: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(per_panel);
    let mut panels: Vec<(f64, f64)> = Vec::new();
    let mut side = |end: f64| {
        let mut b = end;
        let floor = 0.25 * scale;
        let mut count = 0;
        while libm::fabs(b) > floor && count < 40 {
            panels.push((0.5 * b, b));
            b *= 0.5;
            count += 1;
        }
        panels.push((0.0, b));
    };
    if lo < 0.0 && hi > 0.0 {
        side(lo);
        side(hi);
    } else {
        let k = 8;
        for i in 0..k {
            let a = lo + (hi - lo) * i as f64 / k as f64;
            panels.push((a, a + (hi - lo) / k as f64));
        }
    }
    let mut out = Vec::new();
    for (a, b) in panels {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        out.extend(rule.on(a, b));
    }
    out
}

/// `‖φ‖_{L^p(U)} + Σ_j ‖Y_j φ‖_{L^p(U)}` for the basis `beta` on ℝ^{n+1}.
///
/// The `t`-axis uses graded Gauss panels split at `t = 0`; each slice is a
/// midpoint grid on `slice_support(t) ∩ V`. Derivatives use the closed-form
/// gradient when available and central differences along `Y_j` otherwise.
pub fn sobolev_breakdown(phi: &dyn ScalarField, beta: &Basis, u: &Aabb, params: &NormParams) -> Result<SobolevNorm> {
    params.validate()?;
    let d = u.dim();
    if phi.dim() != d || beta.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: phi.dim() });
    }
    let n = d - 1;
    let v = u.project();
    let (mut t_lo, mut t_hi) = (u.lo[n], u.hi[n]);
    if let Some(s) = phi.support() {
        t_lo = t_lo.max(s.lo[n]);
        t_hi = t_hi.min(s.hi[n]);
    }
    let k = beta.len();
    if t_lo >= t_hi {
        return Ok(SobolevNorm { total: 0.0, lp: 0.0, derivative_norms: alloc::vec![0.0; k] });
    }
    let scale = phi.slice_support(0.0).map_or(0.5 * (t_hi - t_lo), |b| b.inradius());
    let nodes = t_nodes(t_lo, t_hi, scale, params.panel_nodes);

    let p = params.p;
    let res = params.grid_res;
    let mut sums = alloc::vec![Vec::<f64>::new(); k + 1];
    let mut z = alloc::vec![0.0; d];
    let mut grad = alloc::vec![0.0; d];
    let mut dir = alloc::vec![0.0; d];
    let mut zp = alloc::vec![0.0; d];
    let mut slice_terms = alloc::vec![Vec::<f64>::new(); k + 1];
    for (t, wt) in nodes {
        let region = match phi.slice_support(t) {
            Some(b) => match b.intersect(&v) {
                Some(r) => r,
                None => continue,
            },
            None => v.clone(),
        };
        let grid = region.midpoint_grid(res);
        let weight = wt * region.cell_volume(res);
        let min_width = (0..n).map(|i| region.width(i)).fold(f64::INFINITY, f64::min);
        let h = (min_width / (8.0 * res as f64)).min(0.25 * libm::fabs(t));
        slice_terms.iter_mut().for_each(Vec::clear);
        for i in 0..grid.len() {
            grid.point(i, &mut z[..n]);
            z[n] = t;
            let val = phi.eval(&z)?;
            if !val.is_finite() {
                return Err(Error::NonFinite { context: "sobolev_norm sample" });
            }
            slice_terms[0].push(pow_abs(val, p));
            let closed = phi.gradient(&z, &mut grad)?;
            if !closed && !params.finite_differences {
                return Err(Error::MissingDerivative);
            }
            for (j, y) in beta.fields().iter().enumerate() {
                y.eval_into(&z, &mut dir);
                let dv = if closed {
                    dir.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>()
                } else if h > 0.0 {
                    for l in 0..d {
                        zp[l] = z[l] + h * dir[l];
                    }
                    let fp = phi.eval(&zp)?;
                    for l in 0..d {
                        zp[l] = z[l] - h * dir[l];
                    }
                    let fm = phi.eval(&zp)?;
                    (fp - fm) / (2.0 * h)
                } else {
                    0.0
                };
                if !dv.is_finite() {
                    return Err(Error::NonFinite { context: "sobolev_norm derivative" });
                }
                slice_terms[j + 1].push(pow_abs(dv, p));
            }
        }
        for (acc, terms) in sums.iter_mut().zip(&slice_terms) {
            acc.push(weight * pairwise_sum(terms));
        }
    }
    let norms: Vec<f64> = sums.iter().map(|s| root(pairwise_sum(s).max(0.0), p)).collect();
    let lp = norms[0];
    let derivative_norms = norms[1..].to_vec();
    Ok(SobolevNorm { total: lp + derivative_norms.iter().sum::<f64>(), lp, derivative_norms })
}

pub fn sobolev_norm(phi: &dyn ScalarField, beta: &Basis, u: &Aabb, params: &NormParams) -> Result<f64> {
    sobolev_breakdown(phi, beta, u, params).map(|s| s.total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardyLittlewood {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `{∫_0^T |t^{−1}∫_0^t h|^q dt}^{1/q}` against `{∫_0^T h^q}^{1/q}` from
/// samples of `h` at increasing `ts` in `(0, T]`. The value at `t = 0` is
/// extrapolated linearly from the first two samples.
pub fn hardy_littlewood_check(ts: &[f64], h: &[f64], q: f64) -> Result<HardyLittlewood> {
    if !(q > 1.0) {
        return Err(Error::OutOfRange { value: q, lo: 1.0, hi: f64::INFINITY });
    }
    if ts.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: ts.len(), found: h.len() });
    }
    if ts.len() < 2 {
        return Err(Error::InsufficientPoints { usable: ts.len() });
    }
    if ts[0] <= 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(String::from("sample times must be positive and increasing")));
    }
    if h.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidConfig(String::from("h must be nonnegative")));
    }
    let slope = (h[1] - h[0]) / (ts[1] - ts[0]);
    let h0 = (h[0] - slope * ts[0]).max(0.0);
    let mut t = Vec::with_capacity(ts.len() + 1);
    let mut hv = Vec::with_capacity(ts.len() + 1);
    t.push(0.0);
    hv.push(h0);
    t.extend_from_slice(ts);
    hv.extend_from_slice(h);
    let mut avg = Vec::with_capacity(t.len());
    avg.push(h0);
    let mut cumulative = 0.0;
    for i in 1..t.len() {
        cumulative += 0.5 * (hv[i] + hv[i - 1]) * (t[i] - t[i - 1]);
        avg.push(cumulative / t[i]);
    }
    let trap = |f: &[f64]| -> f64 {
        (1..t.len()).map(|i| 0.5 * (pow_abs(f[i], q) + pow_abs(f[i - 1], q)) * (t[i] - t[i - 1])).sum()
    };
    let lhs = root(trap(&avg), q);
    let rhs = root(trap(&hv), q);
    if rhs == 0.0 {
        if lhs > 0.0 {
            return Err(Error::InvalidConfig(String::from("rhs vanishes while lhs does not")));
        }
        return Ok(HardyLittlewood { lhs, rhs, ratio: 0.0 });
    }
    Ok(HardyLittlewood { lhs, rhs, ratio: lhs / rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::bump;
    use crate::scalar::{ExprField, FnField};
    use alloc::vec;

    #[test]
    fn lp_of_constants() {
        let one = ExprField::constant(1.0, 2);
        let unit = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((lp_norm(&one, &unit, 2.0, 8).unwrap() - 1.0).abs() < 1e-15);
        let c = ExprField::constant(3.0, 2);
        let b = Aabb::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        assert!((lp_norm(&c, &b, 3.0, 5).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn derived_exponents() {
        let p = NormParams::new(4.0, 0.1).unwrap();
        assert_eq!(p.theta(), 0.75);
        assert_eq!(p.sigma(), 0.375);
        assert!(NormParams::new(1.0, 0.1).is_err());
        let ts = p.t_grid();
        assert_eq!(ts.len(), 48);
        assert!((ts[47] - 0.1).abs() < 1e-17 && (ts[0] - 0.1 / 65536.0).abs() < 1e-18);
    }

    #[test]
    fn moduli_vanish_at_zero_and_for_zero() {
        let psi = bump(&[0.0, 0.0], 0.3);
        let v = Aabb::cube(2, 0.0, 1.0);
        let v1 = Aabb::cube(2, 0.0, 0.6);
        let z = VectorField::coordinate(2, 0);
        let params = NormParams { grid_res: 16, ..NormParams::default() };
        let cfg = FlowSolverConfig::default();
        assert_eq!(flow_modulus(0.0, &psi, &z, &v1, &v, &params, &cfg).unwrap(), 0.0);
        let zero = FnField { dim: 2, f: |_: &[f64]| 0.0, support: Some(Aabb::cube(2, 0.0, 0.3)) };
        assert_eq!(flow_modulus(0.1, &zero, &z, &v1, &v, &params, &cfg).unwrap(), 0.0);
        assert_eq!(classical_modulus(0.0, &psi, &v, 2.0, 16).unwrap(), 0.0);
    }

    #[test]
    fn large_shifts_saturate() {
        // once the shifted support is disjoint, the distance is 2^{1/p} ‖ψ‖
        let psi = bump(&[0.0], 0.1);
        let v = Aabb::cube(1, 0.0, 1.0);
        let norm = lp_norm_on(&psi, &v, 2.0, 64).unwrap();
        let w = classical_modulus(0.5, &psi, &v, 2.0, 64).unwrap();
        assert!((w - libm::sqrt(2.0) * norm).abs() < 1e-12);
    }

    #[test]
    fn hardy_littlewood_closed_forms() {
        let ts: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let ones = vec![1.0; 100];
        assert!((hardy_littlewood_check(&ts, &ones, 2.0).unwrap().ratio - 1.0).abs() < 1e-14);
        let lin = ts.clone();
        assert!((hardy_littlewood_check(&ts, &lin, 2.0).unwrap().ratio - 0.5).abs() < 1e-14);
        assert!(hardy_littlewood_check(&ts, &ones, 1.0).is_err());
    }

    #[test]
    fn graded_nodes_integrate_polynomials() {
        let nodes = t_nodes(-0.3, 0.5, 0.01, 4);
        let integral: f64 = nodes.iter().map(|(t, w)| w * t * t).sum();
        assert!((integral - (0.125 + 0.027) / 3.0).abs() < 1e-14);
    }
}
