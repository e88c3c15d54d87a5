//! Frames built from a first layer of fields and their brackets, and the
//! step-2 bracket-generating check.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{lie_bracket, VectorField};
use crate::linalg::numerical_rank;

/// Default relative singular-value cutoff for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// `Z_1 … Z_k` followed by bracket fields `Z_i = [Z_ℓ, Z_m]` with `ℓ, m < k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    fields: Vec<VectorField>,
    k: usize,
    provenance: Vec<(usize, usize)>,
}

impl Basis {
    /// A basis with no bracket layer.
    pub fn first_layer(fields: Vec<VectorField>) -> Result<Basis> {
        check_dims(&fields)?;
        let k = fields.len();
        Ok(Basis { fields, k, provenance: Vec::new() })
    }

    /// Appends `[Z_ℓ, Z_m]` for every pair (zero-based indices into `first`).
    pub fn with_brackets(first: Vec<VectorField>, pairs: &[(usize, usize)]) -> Result<Basis> {
        check_dims(&first)?;
        let k = first.len();
        let mut fields = first;
        for &(l, m) in pairs {
            if l >= k || m >= k {
                return Err(Error::InvalidConfig(String::from("bracket index outside the first layer")));
            }
            let b = lie_bracket(&fields[l], &fields[m])?;
            fields.push(b);
        }
        Ok(Basis { fields, k, provenance: pairs.to_vec() })
    }

    /// Assembles a basis from explicit bracket fields and checks each against
    /// the symbolic bracket of its provenance pair at `points`.
    pub fn from_parts(fields: Vec<VectorField>, k: usize, provenance: Vec<(usize, usize)>, points: &[Vec<f64>]) -> Result<Basis> {
        check_dims(&fields)?;
        if k > fields.len() || fields.len() - k != provenance.len() {
            return Err(Error::InvalidConfig(String::from("provenance must cover every bracket field")));
        }
        let basis = Basis { fields, k, provenance };
        let err = basis.bracket_error(points)?;
        if err > 1e-10 {
            return Err(Error::InvalidConfig(alloc::format!("bracket field mismatch: sup error {err:e}")));
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.fields.first().map_or(0, VectorField::dim)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Size of the first layer.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &VectorField {
        &self.fields[i]
    }

    pub fn first_layer_fields(&self) -> &[VectorField] {
        &self.fields[..self.k]
    }

    /// Bracket pair of field `i`, zero-based; `None` on the first layer.
    pub fn provenance(&self, i: usize) -> Option<(usize, usize)> {
        i.checked_sub(self.k).and_then(|j| self.provenance.get(j).copied())
    }

    pub fn is_bracket(&self, i: usize) -> bool {
        i >= self.k
    }

    /// Sup over `points` of the coefficient error between stored bracket
    /// fields and freshly computed brackets.
    pub fn bracket_error(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (j, &(l, m)) in self.provenance.iter().enumerate() {
            let fresh = lie_bracket(&self.fields[l], &self.fields[m])?;
            let stored = &self.fields[self.k + j];
            for x in points {
                let a = fresh.evaluate(x)?;
                let b = stored.evaluate(x)?;
                for (u, v) in a.iter().zip(&b) {
                    worst = worst.max(libm::fabs(u - v));
                }
            }
        }
        Ok(worst)
    }

    pub fn rank_at(&self, point: &[f64]) -> Result<usize> {
        let cols = self.fields.iter().map(|f| f.evaluate(point)).collect::<Result<Vec<_>>>()?;
        Ok(numerical_rank(&cols, DEFAULT_RANK_TOL))
    }
}

fn check_dims(fields: &[VectorField]) -> Result<()> {
    let Some(first) = fields.first() else {
        return Err(Error::InvalidConfig(String::from("empty field list")));
    };
    for f in fields {
        if f.dim() != first.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), found: f.dim() });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Step2Check {
    pub satisfied: bool,
    pub rank: usize,
    /// The input fields followed by the brackets greedily selected to raise
    /// the rank, in lexicographic pair order.
    pub spanning_set: Basis,
}

fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |l| (l + 1..k).map(move |m| (l, m)))
}

/// Numerical rank of the fields and all their pairwise brackets at `point`.
/// `rel_tol` is relative to the largest singular value.
pub fn check_step2(fields: &[VectorField], point: &[f64], rel_tol: f64) -> Result<Step2Check> {
    check_dims(fields)?;
    let d = fields[0].dim();
    if point.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: point.len() });
    }
    let k = fields.len();
    let mut cols = Vec::new();
    for f in fields {
        cols.push(f.evaluate(point)?);
    }
    let mut brackets = Vec::new();
    for (l, m) in pairs(k) {
        let b = lie_bracket(&fields[l], &fields[m])?;
        brackets.push(((l, m), b.evaluate(point)?));
    }
    let mut all = cols.clone();
    all.extend(brackets.iter().map(|(_, v)| v.clone()));
    let rank = numerical_rank(&all, rel_tol);

    let mut chosen = Vec::new();
    let mut current = cols;
    let mut r = numerical_rank(&current, rel_tol);
    for (pair, v) in brackets {
        if r >= d {
            break;
        }
        current.push(v);
        let r2 = numerical_rank(&current, rel_tol);
        if r2 > r {
            chosen.push(pair);
            r = r2;
        } else {
            current.pop();
        }
    }
    let spanning_set = Basis::with_brackets(fields.to_vec(), &chosen)?;
    Ok(Step2Check { satisfied: rank == d, rank, spanning_set })
}

/// Completes an independent first layer to a frame of ℝ^d at `point` with
/// brackets chosen greedily in lexicographic `(ℓ, m)` order.
pub fn complete_basis(first_layer: &[VectorField], point: &[f64]) -> Result<Basis> {
    let check = check_step2(first_layer, point, DEFAULT_RANK_TOL)?;
    let d = first_layer[0].dim();
    if !check.satisfied {
        return Err(Error::Step2Failed { rank: check.rank, dim: d });
    }
    if check.spanning_set.len() != d {
        let r = check.spanning_set.first_layer_fields().len() + d - check.spanning_set.len();
        return Err(Error::RankDeficient { rank: r, expected: first_layer.len() });
    }
    Ok(check.spanning_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn f(texts: &[&str]) -> VectorField {
        VectorField::parse(texts, texts.len()).unwrap()
    }

    fn heisenberg() -> Vec<VectorField> {
        vec![f(&["1", "0", "0"]), f(&["0", "1", "x1"])]
    }

    #[test]
    fn heisenberg_pair_is_step2() {
        let c = check_step2(&heisenberg(), &[0.0; 3], DEFAULT_RANK_TOL).unwrap();
        assert!(c.satisfied);
        assert_eq!(c.rank, 3);
        assert_eq!(c.spanning_set.provenance(2), Some((0, 1)));
    }

    #[test]
    fn single_field_is_not() {
        let c = check_step2(&[f(&["1", "0"])], &[0.3, 0.4], DEFAULT_RANK_TOL).unwrap();
        assert!(!c.satisfied);
        assert_eq!(c.rank, 1);
        assert!(matches!(complete_basis(&[f(&["1", "0"])], &[0.0, 0.0]), Err(Error::Step2Failed { rank: 1, dim: 2 })));
    }

    #[test]
    fn grushin_uses_its_bracket() {
        let c = check_step2(&[f(&["1", "0"]), f(&["0", "x1"])], &[0.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert!(c.satisfied);
        assert_eq!(c.rank, 2);
        assert_eq!(c.spanning_set.len(), 3);
        assert_eq!(c.spanning_set.field(2), &f(&["0", "1"]));
    }

    #[test]
    fn completion() {
        let b = complete_basis(&heisenberg(), &[0.0; 3]).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.k(), 2);
        assert_eq!(b.field(2), &VectorField::coordinate(3, 2));
        let shifted = complete_basis(&heisenberg(), &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(shifted, b);
        let plane = complete_basis(&[f(&["1", "0"]), f(&["0", "1"])], &[0.0, 0.0]).unwrap();
        assert_eq!(plane.len(), 2);
        assert_eq!(plane.provenance(1), None);
    }

    #[test]
    fn dependent_first_layer_is_rejected() {
        let fields = [f(&["1", "0", "0"]), f(&["2", "0", "0"]), f(&["0", "1", "x1"])];
        assert!(matches!(complete_basis(&fields, &[0.0; 3]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn from_parts_validates_brackets() {
        let first = heisenberg();
        let pts = vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 1.0]];
        let good = Basis::from_parts(
            vec![first[0].clone(), first[1].clone(), VectorField::coordinate(3, 2)],
            2,
            vec![(0, 1)],
            &pts,
        );
        assert!(good.is_ok());
        let bad = Basis::from_parts(
            vec![first[0].clone(), first[1].clone(), VectorField::coordinate(3, 1)],
            2,
            vec![(0, 1)],
            &pts,
        );
        assert!(bad.is_err());
    }
}
