//! Nested boxes, admissible flow radii and the test-function corpus.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Aabb;
use crate::ode::{integrate, FlowSolverConfig};
use crate::scalar::{Bump, ExprField, Product, ScalarField, Separable, SharedField};

/// `V_2 ⊂⊂ V_1 ⊂⊂ V` in ℝ^n, the slab half-width `ε` of `U = V × (−ε, ε)`,
/// the flow radius `δ` and grid resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub v: Aabb,
    pub v1: Aabb,
    pub v2: Aabb,
    pub eps: f64,
    pub delta: f64,
    pub grid_res: usize,
    pub t_res: usize,
}

impl DomainSpec {
    /// `V = [−1,1]^n`, `V_1 = [−0.6,0.6]^n`, `V_2 = [−0.4,0.4]^n`,
    /// `ε = 0.5`, `δ = 0.2`, 33 points per axis, 24 along `t`.
    pub fn standard(n: usize) -> DomainSpec {
        DomainSpec {
            v: Aabb::cube(n, 0.0, 1.0),
            v1: Aabb::cube(n, 0.0, 0.6),
            v2: Aabb::cube(n, 0.0, 0.4),
            eps: 0.5,
            delta: 0.2,
            grid_res: 33,
            t_res: 24,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    /// `U = V × (−ε, ε)`.
    pub fn u(&self) -> Aabb {
        self.v.extend(-self.eps, self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v2.compactly_within(&self.v1) {
            return Err(Error::NotNested { inner: "V2", outer: "V1" });
        }
        if !self.v1.compactly_within(&self.v) {
            return Err(Error::NotNested { inner: "V1", outer: "V" });
        }
        if !(self.delta > 0.0 && self.eps > 0.0) {
            return Err(Error::InvalidConfig(String::from("delta and eps must be positive")));
        }
        if self.grid_res < 8 || self.t_res < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid_res must be at least 8 (got {}), t_res at least 2 (got {})",
                self.grid_res, self.t_res
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleDelta {
    /// Largest radius found by bisection.
    pub raw: f64,
    /// `0.9 · raw`.
    pub safe: f64,
}

/// Largest `δ ≤ delta_max` (10 bisection steps) such that every basis flow
/// from a boundary sample of `V_1` with `|τ| ≤ δ` stays in `V`.
pub fn admissible_delta(
    basis: &Basis,
    v1: &Aabb,
    v: &Aabb,
    delta_max: f64,
    samples_per_axis: usize,
    cfg: &FlowSolverConfig,
) -> Result<AdmissibleDelta> {
    if !v1.compactly_within(v) {
        return Err(Error::NotNested { inner: "V1", outer: "V" });
    }
    if !(delta_max > 0.0) {
        return Err(Error::InvalidConfig(String::from("delta_max must be positive")));
    }
    let cfg = cfg.clone().with_bounds(v.clone());
    let points = v1.boundary_samples(samples_per_axis);
    let mut out = alloc::vec![0.0; v.dim()];
    let mut stays = |delta: f64| -> Result<bool> {
        for z in basis.fields() {
            if z.is_zero() {
                continue;
            }
            for x in &points {
                for tau in [delta, -delta] {
                    match integrate(z, x, tau, &cfg, &mut out) {
                        Ok(()) => {}
                        Err(Error::FlowExit { .. }) => return Ok(false),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(true)
    };
    let raw = if stays(delta_max)? {
        delta_max
    } else {
        let (mut lo, mut hi) = (0.0, delta_max);
        for _ in 0..10 {
            let mid = 0.5 * (lo + hi);
            if stays(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if raw <= 0.0 {
        return Err(Error::NoAdmissibleDelta { resolution: delta_max / 1024.0 });
    }
    Ok(AdmissibleDelta { raw, safe: 0.9 * raw })
}

/// The standard bump of radius `scale` about `center`.
pub fn bump(center: &[f64], scale: f64) -> Bump {
    Bump::new(center.to_vec(), scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusKind {
    Centered,
    Modulated,
    Translated,
}

#[derive(Clone)]
pub struct CorpusMember {
    pub id: String,
    pub kind: CorpusKind,
    /// Radius of the underlying bump.
    pub scale: f64,
    /// Upper bound for `|ψ|`.
    pub sup_bound: f64,
    pub field: SharedField,
}

impl core::fmt::Debug for CorpusMember {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CorpusMember")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("scale", &self.scale)
            .finish()
    }
}

/// Deterministic test functions supported in `V_2`.
///
/// With `R` the inradius of `V_2` and `c` its centre, the families are
/// `C_j = bump(c, R 2^{−j−1})`, `M_j = (1 + (x_1 − c_1)/s) C_j`, and
/// `T_j`, the bump of radius `s = R 2^{−j−1}` moved by `(R − s)/2` along
/// axis `⌊j/2⌋ mod n`, flipping sign after each sweep over the axes. The output interleaves
/// `C_0, C_1, M_0, C_2, T_1, C_3, M_2, C_4, T_3, …`.
pub fn test_corpus(spec: &DomainSpec, count: usize) -> Vec<CorpusMember> {
    let n = spec.dim();
    let c = spec.v2.center();
    let r = spec.v2.inradius();
    let scale = |j: usize| r * libm::ldexp(1.0, -(j as i32) - 1);
    let centered = |j: usize| {
        let s = scale(j);
        CorpusMember {
            id: format!("C{j}"),
            kind: CorpusKind::Centered,
            scale: s,
            sup_bound: 1.0,
            field: Arc::new(bump(&c, s)),
        }
    };
    let other = |j: usize| {
        let s = scale(j);
        if j.is_multiple_of(2) {
            let modulation =
                Expr::add(Expr::one(), Expr::mul(Expr::Const(1.0 / s), Expr::sub(Expr::Var(0), Expr::Const(c[0]))));
            let m = ExprField::new(modulation, n).expect("modulation uses x1");
            CorpusMember {
                id: format!("M{j}"),
                kind: CorpusKind::Modulated,
                scale: s,
                sup_bound: 2.0,
                field: Arc::new(Product { a: Arc::new(bump(&c, s)), b: Arc::new(m) }),
            }
        } else {
            let axis = (j / 2) % n;
            let sign = if (j / 2 / n).is_multiple_of(2) { 1.0 } else { -1.0 };
            let mut center = c.clone();
            center[axis] += sign * 0.5 * (r - s);
            CorpusMember {
                id: format!("T{j}"),
                kind: CorpusKind::Translated,
                scale: s,
                sup_bound: 1.0,
                field: Arc::new(bump(&center, s)),
            }
        }
    };
    let mut out = Vec::with_capacity(count);
    let (mut a, mut b) = (0, 0);
    // A0, A1, B0, A2, B1, …
    while out.len() < count {
        if out.len() < 2 || out.len() % 2 == 1 {
            out.push(centered(a));
            a += 1;
        } else {
            out.push(other(b));
            b += 1;
        }
    }
    out
}

/// Functions on ℝ^{n+1}: each corpus member times a bump in `t` whose
/// radius follows the member's scale, capped at `ε/2`.
pub fn product_corpus(spec: &DomainSpec, count: usize) -> Vec<CorpusMember> {
    test_corpus(spec, count)
        .into_iter()
        .map(|m| {
            let st = m.scale.min(0.5 * spec.eps);
            let field: SharedField = Arc::new(Separable { space: m.field.clone(), time: Arc::new(bump(&[0.0], st)) });
            CorpusMember { field, ..m }
        })
        .collect()
}

/// Checks that `f` vanishes outside `region` according to its declared support.
pub fn support_within(f: &dyn ScalarField, region: &Aabb) -> bool {
    f.support().is_some_and(|s| s.within(region))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use alloc::vec;

    #[test]
    fn translation_radius_is_geometric() {
        let n = 2;
        let basis = Basis::first_layer(vec![VectorField::coordinate(n, 0)]).unwrap();
        let d = admissible_delta(&basis, &Aabb::cube(n, 0.0, 0.5), &Aabb::cube(n, 0.0, 1.0), 1.0, 5, &Default::default())
            .unwrap();
        assert_eq!(d.raw, 0.5);
        assert!((d.safe - 0.45).abs() < 1e-15);
    }

    #[test]
    fn zero_field_admits_everything() {
        let basis = Basis::first_layer(vec![VectorField::zero(2)]).unwrap();
        let d = admissible_delta(&basis, &Aabb::cube(2, 0.0, 0.5), &Aabb::cube(2, 0.0, 1.0), 0.7, 5, &Default::default())
            .unwrap();
        assert_eq!(d.raw, 0.7);
    }

    #[test]
    fn touching_boxes_are_rejected() {
        let basis = Basis::first_layer(vec![VectorField::coordinate(2, 0)]).unwrap();
        let r = admissible_delta(&basis, &Aabb::cube(2, 0.0, 1.0), &Aabb::cube(2, 0.0, 1.0), 1.0, 5, &Default::default());
        assert!(matches!(r, Err(Error::NotNested { .. })));
    }

    #[test]
    fn corpus_generation_rule() {
        let spec = DomainSpec::standard(3);
        let one = test_corpus(&spec, 1);
        assert_eq!(one[0].id, "C0");
        assert!((one[0].scale - 0.2).abs() < 1e-15);
        let ids: Vec<String> = test_corpus(&spec, 9).into_iter().map(|m| m.id).collect();
        assert_eq!(ids, ["C0", "C1", "M0", "C2", "T1", "C3", "M2", "C4", "T3"]);
        for m in test_corpus(&spec, 12) {
            assert!(support_within(&*m.field, &spec.v2), "{}", m.id);
        }
    }

    #[test]
    fn default_spec_is_valid() {
        assert!(DomainSpec::standard(3).validate().is_ok());
        let mut bad = DomainSpec::standard(3);
        bad.grid_res = 4;
        assert!(bad.validate().is_err());
    }
}
