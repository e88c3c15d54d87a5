//! Axis-aligned boxes and midpoint grids on them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Aabb> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidConfig(String::from("box bounds must satisfy lo < hi")));
        }
        Ok(Aabb { lo, hi })
    }

    /// `[c − h, c + h]^dim`.
    pub fn cube(dim: usize, center: f64, half: f64) -> Aabb {
        Aabb { lo: alloc::vec![center - half; dim], hi: alloc::vec![center + half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Half the smallest side.
    pub fn inradius(&self) -> f64 {
        (0..self.dim()).map(|i| 0.5 * self.width(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// `self ⊂⊂ outer` with a positive margin on every face.
    pub fn compactly_within(&self, outer: &Aabb) -> bool {
        self.dim() == outer.dim()
            && (0..self.dim()).all(|i| outer.lo[i] < self.lo[i] && self.hi[i] < outer.hi[i])
    }

    pub fn within(&self, outer: &Aabb) -> bool {
        self.dim() == outer.dim() && (0..self.dim()).all(|i| outer.lo[i] <= self.lo[i] && self.hi[i] <= outer.hi[i])
    }

    pub fn intersect(&self, other: &Aabb) -> Option<Aabb> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(a, b)| a < b).then_some(Aabb { lo, hi })
    }

    /// Grows each axis by `pad[axis]` on both sides.
    pub fn inflate(&self, pad: &[f64]) -> Aabb {
        Aabb {
            lo: self.lo.iter().zip(pad).map(|(a, p)| a - p).collect(),
            hi: self.hi.iter().zip(pad).map(|(b, p)| b + p).collect(),
        }
    }

    /// The box times `[t_lo, t_hi]`.
    pub fn extend(&self, t_lo: f64, t_hi: f64) -> Aabb {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.push(t_lo);
        hi.push(t_hi);
        Aabb { lo, hi }
    }

    /// Drops the last axis.
    pub fn project(&self) -> Aabb {
        let d = self.dim() - 1;
        Aabb { lo: self.lo[..d].to_vec(), hi: self.hi[..d].to_vec() }
    }

    pub fn midpoint_grid(&self, per_axis: usize) -> MidpointGrid<'_> {
        MidpointGrid { aabb: self, per_axis, index: 0, total: per_axis.pow(self.dim() as u32) }
    }

    /// Volume of one cell of `midpoint_grid(per_axis)`.
    pub fn cell_volume(&self, per_axis: usize) -> f64 {
        self.volume() / libm::pow(per_axis as f64, self.dim() as f64)
    }

    /// Points on the faces: a `per_axis^(d−1)` lattice on each of the 2d faces.
    pub fn boundary_samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let per_axis = per_axis.max(2);
        let mut out = Vec::new();
        for axis in 0..d {
            for side in [self.lo[axis], self.hi[axis]] {
                let count = per_axis.pow(d as u32 - 1);
                for mut idx in 0..count {
                    let mut x = alloc::vec![0.0; d];
                    for (j, v) in x.iter_mut().enumerate() {
                        if j == axis {
                            *v = side;
                        } else {
                            let i = idx % per_axis;
                            idx /= per_axis;
                            *v = self.lo[j] + self.width(j) * i as f64 / (per_axis - 1) as f64;
                        }
                    }
                    out.push(x);
                }
            }
        }
        out
    }
}

/// Cell centres of a uniform tensor grid, first axis fastest.
pub struct MidpointGrid<'a> {
    aabb: &'a Aabb,
    per_axis: usize,
    index: usize,
    total: usize,
}

impl MidpointGrid<'_> {
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Writes point `index` into `out`.
    pub fn point(&self, index: usize, out: &mut [f64]) {
        let mut idx = index;
        for (axis, v) in out.iter_mut().enumerate() {
            let i = idx % self.per_axis;
            idx /= self.per_axis;
            *v = self.aabb.lo[axis] + self.aabb.width(axis) * (i as f64 + 0.5) / self.per_axis as f64;
        }
    }
}

impl Iterator for MidpointGrid<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.index >= self.total {
            return None;
        }
        let mut x = alloc::vec![0.0; self.aabb.dim()];
        self.point(self.index, &mut x);
        self.index += 1;
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesting_requires_margin() {
        let v = Aabb::cube(2, 0.0, 1.0);
        assert!(Aabb::cube(2, 0.0, 0.5).compactly_within(&v));
        let touching = Aabb::new(alloc::vec![-1.0, -0.5], alloc::vec![0.5, 0.5]).unwrap();
        assert!(!touching.compactly_within(&v));
        assert!(touching.within(&v));
    }

    #[test]
    fn grid_covers_cells() {
        let b = Aabb::new(alloc::vec![0.0, 0.0], alloc::vec![1.0, 2.0]).unwrap();
        let pts: Vec<_> = b.midpoint_grid(4).collect();
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[0], [0.125, 0.25]);
        assert_eq!(pts[15], [0.875, 1.75]);
        assert!((b.cell_volume(4) * 16.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_samples_lie_on_faces() {
        let b = Aabb::cube(3, 0.0, 0.5);
        let s = b.boundary_samples(4);
        assert_eq!(s.len(), 6 * 16);
        assert!(s.iter().all(|x| x.iter().any(|v| (v.abs() - 0.5).abs() < 1e-15)));
    }
}
