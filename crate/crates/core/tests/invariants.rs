use std::sync::Arc;

use proptest::prelude::*;

use sobtrace_core::domain::bump;
use sobtrace_core::flows::{flow, reconstruct, straighten};
use sobtrace_core::norms::lp_norm;
use sobtrace_core::scalar::Combination;
use sobtrace_core::traceops::{extend_h, full_extension, restrict, ExtensionConfig};
use sobtrace_core::{
    check_step2, lie_bracket, Aabb, Basis, Expr, ExprField, FlowSolverConfig, ScalarField, SharedField, VectorField,
};

const DIM: usize = 3;

fn coeff() -> impl Strategy<Value = f64> {
    (-20i32..=20).prop_map(|k| k as f64 / 10.0)
}

/// A polynomial of degree at most two in three variables.
fn poly_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(coeff(), 6).prop_map(|c| {
        format!(
            "({}) + ({})*x1 + ({})*x2 + ({})*x3 + ({})*x1*x2 + ({})*x3^2",
            c[0], c[1], c[2], c[3], c[4], c[5]
        )
    })
}

fn field() -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(poly_text(), DIM).prop_map(|t| VectorField::parse(&t, DIM).unwrap())
}

/// Triangular fields `(a, b + c x1, e + f x1 x2 + g x1²)`: exact flows.
fn triangular() -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(coeff(), 6).prop_map(|c| {
        let texts = [
            format!("{}", 1.0 + c[0].abs()),
            format!("({}) + ({})*x1", c[1], c[2]),
            format!("({}) + ({})*x1*x2 + ({})*x1^2", c[3], c[4], c[5]),
        ];
        VectorField::parse(&texts, DIM).unwrap()
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-0.5f64..0.5, DIM)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol * (1.0 + v.abs()))
}

fn heisenberg_cfg() -> ExtensionConfig {
    let z1 = VectorField::parse(&["1", "0", "0"], 3).unwrap();
    let z2 = VectorField::parse(&["0", "1", "x1"], 3).unwrap();
    let basis = Basis::with_brackets(vec![z1, z2], &[(0, 1)]).unwrap();
    ExtensionConfig::new(basis, 0.2, Aabb::cube(3, 0.0, 1.0), Aabb::cube(3, 0.0, 0.4)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_antisymmetry(x in field(), y in field(), p in point()) {
        let xy = lie_bracket(&x, &y).unwrap().evaluate(&p).unwrap();
        let yx = lie_bracket(&y, &x).unwrap().evaluate(&p).unwrap();
        let neg: Vec<f64> = yx.iter().map(|v| -v).collect();
        prop_assert!(close(&xy, &neg, 1e-12));
    }

    #[test]
    fn jacobi_identity(x in field(), y in field(), z in field(), p in point()) {
        let a = lie_bracket(&x, &lie_bracket(&y, &z).unwrap()).unwrap().evaluate(&p).unwrap();
        let b = lie_bracket(&y, &lie_bracket(&z, &x).unwrap()).unwrap().evaluate(&p).unwrap();
        let c = lie_bracket(&z, &lie_bracket(&x, &y).unwrap()).unwrap().evaluate(&p).unwrap();
        let scale = a.iter().chain(&b).chain(&c).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..DIM {
            prop_assert!((a[i] + b[i] + c[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn symbolic_derivative_matches_differences(text in poly_text(), p in point()) {
        let e = Expr::parse(&format!("sin({text}) + x2 * exp(x3)"), DIM).unwrap();
        let h = 1e-5;
        for var in 0..DIM {
            let mut up = p.clone();
            let mut down = p.clone();
            up[var] += h;
            down[var] -= h;
            let fd = (e.eval(&up) - e.eval(&down)) / (2.0 * h);
            let exact = e.derivative(var).eval(&p);
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn flow_group_law(z in triangular(), x in point(), s in -0.4f64..0.4, t in -0.4f64..0.4) {
        for cfg in [FlowSolverConfig::default(), FlowSolverConfig::default().adaptive_only()] {
            let two_step = flow(&z, &flow(&z, &x, s, &cfg).unwrap(), t, &cfg).unwrap();
            let one_step = flow(&z, &x, s + t, &cfg).unwrap();
            prop_assert!(close(&two_step, &one_step, 1e-8));
        }
    }

    #[test]
    fn flow_inversion(z in triangular(), x in point(), t in -0.6f64..0.6) {
        let cfg = FlowSolverConfig::default();
        let y = flow(&z, &x, t, &cfg).unwrap();
        prop_assert!(close(&flow(&z, &y, -t, &cfg).unwrap(), &x, 1e-10));
    }

    #[test]
    fn compiled_and_adaptive_flows_agree(z in triangular(), x in point(), t in -0.5f64..0.5) {
        let exact = flow(&z, &x, t, &FlowSolverConfig::default()).unwrap();
        let stepped = flow(&z, &x, t, &FlowSolverConfig::default().adaptive_only()).unwrap();
        prop_assert!(close(&exact, &stepped, 1e-8));
    }

    #[test]
    fn straightening_roundtrip(a in coeff(), b in coeff(), x in proptest::collection::vec(-0.5f64..0.5, 2), t in -0.5f64..0.5) {
        let texts = [format!("({a})*t + x2*t^2"), format!("({b})*t*x1"), String::from("0")];
        let xf = VectorField::parse(&texts, 3).unwrap();
        let st = straighten(&xf, None, &FlowSolverConfig::default()).unwrap();
        let y = st.forward(&x, t).unwrap();
        prop_assert!(close(&st.inverse(&y, t).unwrap(), &x, 1e-9));
    }

    #[test]
    fn reconstruction_is_linear(c1 in coeff(), c2 in coeff(), x in proptest::collection::vec(-0.5f64..0.5, 2), t in -0.4f64..0.4) {
        let xf = VectorField::parse(&["t", "x1", "0"], 3).unwrap();
        let st = straighten(&xf, None, &FlowSolverConfig::default()).unwrap();
        let g0 = ExprField::parse("cos(x1) + x2", 2).unwrap();
        let h0 = ExprField::parse("x1 * x2^2", 2).unwrap();
        let g = ExprField::parse("x1 * t", 3).unwrap();
        let h = ExprField::parse("exp(x2) - t^2", 3).unwrap();
        let sum0 = ExprField::parse(&format!("({c1})*(cos(x1) + x2) + ({c2})*(x1 * x2^2)"), 2).unwrap();
        let sum = ExprField::parse(&format!("({c1})*(x1 * t) + ({c2})*(exp(x2) - t^2)"), 3).unwrap();
        let lhs = reconstruct(&sum0, &sum, &st, &x, t, 1e-11).unwrap();
        let rhs = c1 * reconstruct(&g0, &g, &st, &x, t, 1e-11).unwrap()
            + c2 * reconstruct(&h0, &h, &st, &x, t, 1e-11).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn lp_homogeneity(c in -5.0f64..5.0, p in 1.0f64..4.0) {
        let f: SharedField = Arc::new(ExprField::parse("sin(3*x1) + x2*x3", 3).unwrap());
        let cf = Combination::scaled(c, f.clone());
        let region = Aabb::cube(3, 0.0, 0.5);
        let a = lp_norm(&cf, &region, p, 8).unwrap();
        let b = c.abs() * lp_norm(&f, &region, p, 8).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn lp_triangle_inequality(c in coeff(), p in 1.0f64..4.0) {
        let f: SharedField = Arc::new(ExprField::parse("sin(3*x1) + x2*x3", 3).unwrap());
        let g: SharedField = Arc::new(ExprField::parse(&format!("({c}) - x1^2 + cos(x3)"), 3).unwrap());
        let sum = Combination { terms: vec![(1.0, f.clone()), (1.0, g.clone())] };
        let region = Aabb::cube(3, 0.0, 0.5);
        let lhs = lp_norm(&sum, &region, p, 8).unwrap();
        let rhs = lp_norm(&f, &region, p, 8).unwrap() + lp_norm(&g, &region, p, 8).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn step2_rank_invariant_under_recombination(a in coeff(), b in coeff(), p in point()) {
        let y1 = VectorField::parse(&["1", "0", "0"], 3).unwrap();
        let y2 = VectorField::parse(&["0", "1", "x1"], 3).unwrap();
        let base = check_step2(&[y1.clone(), y2.clone()], &p, 1e-8).unwrap();
        let det = 1.0 + a.abs();
        let w1 = y1.scale(det).add(&y2.scale(b)).unwrap();
        let mixed = check_step2(&[w1, y2], &p, 1e-8).unwrap();
        prop_assert_eq!(base.rank, mixed.rank);
        prop_assert!(mixed.satisfied);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn averaging_preserves_constants(c in -3.0f64..3.0, x in proptest::collection::vec(-0.3f64..0.3, 3), t in 0.01f64..0.2) {
        let cfg = heisenberg_cfg().with_quad_order(4).unwrap();
        let f = ExprField::constant(c, 3);
        prop_assert!((extend_h(&f, &cfg, &x, t).unwrap() - c).abs() <= 1e-12);
    }

    #[test]
    fn extension_is_linear_and_restricts_back(
        c1 in coeff(), c2 in coeff(),
        ca in proptest::collection::vec(-0.1f64..0.1, 3),
        z in proptest::collection::vec(-0.35f64..0.35, 3), t in -0.1f64..0.1,
    ) {
        let cfg = Arc::new(heisenberg_cfg().with_quad_order(4).unwrap());
        let f: SharedField = Arc::new(bump(&ca, 0.2));
        let g: SharedField = Arc::new(bump(&[0.05, -0.05, 0.1], 0.15));
        let combo: SharedField = Arc::new(Combination { terms: vec![(c1, f.clone()), (c2, g.clone())] });
        let ef = full_extension(f.clone(), cfg.clone()).unwrap();
        let eg = full_extension(g, cfg.clone()).unwrap();
        let ec = full_extension(combo, cfg).unwrap();
        let mut q = z.clone();
        q.push(t);
        let lhs = ec.eval(&q).unwrap();
        let rhs = c1 * ef.eval(&q).unwrap() + c2 * eg.eval(&q).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        let back = restrict(Arc::new(ef)).eval(&z).unwrap();
        prop_assert!((back - f.eval(&z).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn flow_modulus_is_nearly_monotone() {
    use sobtrace_core::norms::{flow_modulus, NormParams};
    let z2 = VectorField::parse(&["0", "1", "x1"], 3).unwrap();
    let psi = bump(&[0.0, 0.05, 0.0], 0.2);
    let params = NormParams { grid_res: 12, ..NormParams::default() };
    let v1 = Aabb::cube(3, 0.0, 0.6);
    let v = Aabb::cube(3, 0.0, 1.0);
    let cfg = FlowSolverConfig::default();
    let mut prev = 0.0;
    for t in params.t_grid().into_iter().step_by(4) {
        let w = flow_modulus(t, &psi, &z2, &v1, &v, &params, &cfg).unwrap();
        // sampled supremum: allow a small relative dip
        assert!(w >= prev * 0.98, "omega({t}) = {w} < {prev}");
        prev = w;
    }
    assert!(prev > 0.0);
}
