//! One-dimensional quadrature rules.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if libm::fabs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok((k * h, libm::fabs((k - g) * h)))
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature to absolute tolerance `tol`.
pub fn adaptive<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut stack: Vec<(f64, f64, f64, usize)> = Vec::new();
    let (v, e) = kronrod15(&mut f, a, b)?;
    if !v.is_finite() {
        return Err(Error::NonFinite { context: "adaptive quadrature" });
    }
    if e <= tol {
        return Ok(v);
    }
    stack.push((a, b, tol, 0));
    let mut total = 0.0;
    while let Some((lo, hi, local_tol, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&mut f, lo, mid)?;
        let (v2, e2) = kronrod15(&mut f, mid, hi)?;
        if !(v1 + v2).is_finite() {
            return Err(Error::NonFinite { context: "adaptive quadrature" });
        }
        if e1 + e2 <= local_tol || depth >= 40 {
            if depth >= 40 && e1 + e2 > local_tol {
                return Err(Error::QuadratureNonconvergence { estimate: total + v1 + v2, error: e1 + e2 });
            }
            total += v1 + v2;
        } else {
            stack.push((lo, mid, 0.5 * local_tol, depth + 1));
            stack.push((mid, hi, 0.5 * local_tol, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=16 {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n = {n}");
            // degree 2n − 1 monomial on [0, 1]
            let deg = 2 * n as i32 - 1;
            let got = rule.integrate(0.0, 1.0, |x| x.powi(deg));
            assert!((got - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn twelve_point_rule_matches_tables() {
        let rule = GaussLegendre::new(12);
        assert!((rule.nodes[11] - 0.981_560_634_246_719_3).abs() < 1e-15);
        assert!((rule.weights[11] - 0.047_175_336_386_511_83).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_a_peak() {
        // ∫₀¹ 1 / (1e-4 + (x − 0.3)²) dx
        let exact = 100.0 * (libm::atan(70.0) + libm::atan(30.0));
        let got = adaptive(|x| Ok(1.0 / (1e-4 + (x - 0.3) * (x - 0.3))), 0.0, 1.0, 1e-9).unwrap();
        assert!((got - exact).abs() < 1e-8);
    }

    #[test]
    fn adaptive_propagates_errors() {
        let r = adaptive(|x| if x > 0.5 { Err(Error::MissingSupport) } else { Ok(x) }, 0.0, 1.0, 1e-9);
        assert!(r.is_err());
    }
}
