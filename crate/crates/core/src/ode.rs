//! Integral curves of autonomous vector fields.
//!
//! Two integrators sit behind [`integrate`]:
//!
//! * a closed-form path for *triangular polynomial* fields, where each
//!   coefficient is a polynomial in coordinates that are integrated earlier
//!   (the Heisenberg and Grushin frames, `∂/∂t − t^m ∂/∂x₁`, …). Every
//!   coordinate of the curve is then a polynomial in the flow time and is
//!   computed exactly;
//! * adaptive Dormand–Prince 5(4) stepping for everything else.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::Aabb;
use crate::mpoly::PolyFlow;
use crate::poly::Poly;

/// Flows are supported up to this dimension.
pub const MAX_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowMethod {
    /// Embedded explicit Runge–Kutta 5(4) with local error control.
    DormandPrince45,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    pub method: FlowMethod,
    /// Use the closed-form path when the field allows it.
    pub exact_polynomial: bool,
    /// Working box; leaving it is an error.
    pub bounds: Option<Aabb>,
}

impl Default for FlowSolverConfig {
    fn default() -> Self {
        FlowSolverConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: 0.25,
            min_step: 1e-14,
            max_steps: 200_000,
            method: FlowMethod::DormandPrince45,
            exact_polynomial: true,
            bounds: None,
        }
    }
}

impl FlowSolverConfig {
    pub fn with_bounds(mut self, bounds: Aabb) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn without_bounds(mut self) -> Self {
        self.bounds = None;
        self
    }

    /// Forces Runge–Kutta stepping even for polynomial fields.
    pub fn adaptive_only(mut self) -> Self {
        self.exact_polynomial = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.min_step > 0.0) {
            return Err(Error::InvalidConfig(alloc::string::String::from(
                "flow tolerances and step limits must be positive",
            )));
        }
        Ok(())
    }
}

#[inline]
fn check_bounds(cfg: &FlowSolverConfig, y: &[f64], time: f64) -> Result<()> {
    if let Some(b) = &cfg.bounds {
        if b.lo.len() == y.len() {
            for i in 0..y.len() {
                if !(b.lo[i] <= y[i] && y[i] <= b.hi[i]) {
                    return Err(Error::FlowExit { point: y.to_vec(), time });
                }
            }
        }
    }
    Ok(())
}

/// Writes `e^{τZ} x` into `out`.
pub fn integrate(field: &VectorField, x: &[f64], tau: f64, cfg: &FlowSolverConfig, out: &mut [f64]) -> Result<()> {
    let d = field.dim();
    if x.len() != d || out.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    if d > MAX_DIM {
        return Err(Error::InvalidConfig(alloc::format!("flows support at most {MAX_DIM} dimensions")));
    }
    check_bounds(cfg, x, 0.0)?;
    if tau == 0.0 || field.is_zero() {
        out.copy_from_slice(x);
        return Ok(());
    }
    if cfg.exact_polynomial {
        if let Some(map) = field.flow_map() {
            return compiled_flow(map, x, tau, cfg, out);
        }
        if let Some(order) = field.triangular_order() {
            if exact_polynomial_flow(field, order, x, tau, cfg, out)? {
                return Ok(());
            }
        }
    }
    match cfg.method {
        FlowMethod::DormandPrince45 => dormand_prince(field, x, tau, cfg, out),
    }
}

fn compiled_flow(map: &PolyFlow, x: &[f64], tau: f64, cfg: &FlowSolverConfig, out: &mut [f64]) -> Result<()> {
    let d = map.dim();
    let mut stack = [0.0; 64];
    let mut heap = Vec::new();
    let buf: &mut [f64] = if map.len() <= stack.len() {
        &mut stack[..map.len()]
    } else {
        heap.resize(map.len(), 0.0);
        &mut heap
    };
    map.coefficients(x, buf);
    // A segment stays in the box when both ends do.
    if cfg.bounds.is_some() && !map.is_affine_in_time() {
        let mut probe = [0.0; MAX_DIM];
        for i in 1..PROBES {
            let s = tau * i as f64 / PROBES as f64;
            map.eval_at(buf, s, &mut probe[..d]);
            check_bounds(cfg, &probe[..d], s)?;
        }
    }
    map.eval_at(buf, tau, out);
    check_bounds(cfg, out, tau)
}

/// Intermediate points checked against the working box on closed-form paths.
const PROBES: usize = 8;

/// Returns `Ok(false)` when some coefficient is not polynomial along the curve.
fn exact_polynomial_flow(
    field: &VectorField,
    order: &[usize],
    x: &[f64],
    tau: f64,
    cfg: &FlowSolverConfig,
    out: &mut [f64],
) -> Result<bool> {
    let d = field.dim();
    let mut curve = [Poly::zero(); MAX_DIM];
    for j in 0..d {
        curve[j] = Poly::constant(x[j]);
    }
    for &j in order {
        let Some(rate) = field.coeffs()[j].eval_poly(&curve[..d]) else {
            return Ok(false);
        };
        let Some(displacement) = rate.integrate() else {
            return Ok(false);
        };
        curve[j] = Poly::constant(x[j]).add(&displacement);
    }
    if cfg.bounds.is_some() {
        let mut probe = [0.0; MAX_DIM];
        for i in 1..=8 {
            let s = tau * i as f64 / 8.0;
            for j in 0..d {
                probe[j] = curve[j].eval(s);
            }
            check_bounds(cfg, &probe[..d], s)?;
        }
    }
    for j in 0..d {
        out[j] = curve[j].eval(tau);
    }
    Ok(true)
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dormand_prince(field: &VectorField, x: &[f64], tau: f64, cfg: &FlowSolverConfig, out: &mut [f64]) -> Result<()> {
    let d = field.dim();
    let dir = if tau > 0.0 { 1.0 } else { -1.0 };
    let mut y = [0.0; MAX_DIM];
    y[..d].copy_from_slice(x);
    let mut k = [[0.0; MAX_DIM]; 7];
    let mut stage = [0.0; MAX_DIM];
    let mut y_new = [0.0; MAX_DIM];
    let mut t = 0.0;
    let mut h = libm::fabs(tau).min(cfg.max_step);
    field.eval_into(&y[..d], &mut k[0][..d]);
    let mut steps = 0;
    while dir * (tau - t) > 0.0 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::StepUnderflow { time: t });
        }
        let remaining = libm::fabs(tau - t);
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        for s in 1..7 {
            for j in 0..d {
                let mut acc = y[j];
                for r in 0..s {
                    acc += hs * A[s][r] * k[r][j];
                }
                stage[j] = acc;
            }
            field.eval_into(&stage[..d], &mut k[s][..d]);
        }
        // FSAL: stage 6 input is the 5th-order solution.
        y_new[..d].copy_from_slice(&stage[..d]);
        let mut err: f64 = 0.0;
        for j in 0..d {
            let e: f64 = (0..7).map(|r| E[r] * k[r][j]).sum::<f64>() * hs;
            let scale = cfg.abs_tol + cfg.rel_tol * libm::fabs(y[j]).max(libm::fabs(y_new[j]));
            err = err.max(libm::fabs(e) / scale);
        }
        if !err.is_finite() {
            return Err(Error::NonFinite { context: "flow integration" });
        }
        if err <= 1.0 {
            t = if last { tau } else { t + hs };
            y[..d].copy_from_slice(&y_new[..d]);
            k[0] = k[6];
            check_bounds(cfg, &y[..d], t)?;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(cfg.max_step);
        if h < cfg.min_step && dir * (tau - t) > cfg.min_step {
            return Err(Error::StepUnderflow { time: t });
        }
    }
    out.copy_from_slice(&y[..d]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(texts: &[&str]) -> VectorField {
        VectorField::parse(texts, texts.len()).unwrap()
    }

    #[test]
    fn both_paths_agree_on_a_polynomial_field() {
        let z = f(&["0", "1 + x1^2", "x1*x2"]);
        let x = [0.3, -0.2, 0.1];
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        integrate(&z, &x, 0.7, &FlowSolverConfig::default(), &mut a).unwrap();
        integrate(&z, &x, 0.7, &FlowSolverConfig::default().adaptive_only(), &mut b).unwrap();
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rotation_stays_on_the_circle() {
        // not triangular: forces Runge–Kutta
        let z = f(&["-x2", "x1"]);
        let mut y = [0.0; 2];
        integrate(&z, &[1.0, 0.0], core::f64::consts::FRAC_PI_2, &FlowSolverConfig::default(), &mut y).unwrap();
        assert!(y[0].abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);
        integrate(&z, &[1.0, 0.0], -1.0, &FlowSolverConfig::default(), &mut y).unwrap();
        assert!((y[0] - libm::cos(1.0)).abs() < 1e-9 && (y[1] + libm::sin(1.0)).abs() < 1e-9);
    }

    #[test]
    fn exit_is_an_error() {
        let cfg = FlowSolverConfig::default().with_bounds(Aabb::cube(2, 0.0, 1.0));
        let mut y = [0.0; 2];
        let exact = integrate(&f(&["1", "0"]), &[0.5, 0.0], 0.6, &cfg, &mut y);
        assert!(matches!(exact, Err(Error::FlowExit { .. })));
        let rk = integrate(&f(&["-x2", "x1"]), &[0.9, 0.0], 0.2, &cfg.clone().adaptive_only(), &mut y);
        assert!(rk.is_ok());
        let rk = integrate(&f(&["1 + 0*x2", "x1"]), &[0.5, 0.0], 0.6, &cfg.adaptive_only(), &mut y);
        assert!(matches!(rk, Err(Error::FlowExit { .. })));
    }

    #[test]
    fn nonpolynomial_triangular_field_falls_back() {
        // x2' = exp(x1) with x1 moving: not polynomial along the curve.
        let z = f(&["1", "exp(x1)"]);
        let mut y = [0.0; 2];
        integrate(&z, &[0.0, 0.0], 0.5, &FlowSolverConfig::default(), &mut y).unwrap();
        assert!((y[1] - (libm::exp(0.5) - 1.0)).abs() < 1e-9);
    }
}
