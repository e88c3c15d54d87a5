//! Small dense helpers: singular values, determinants, line fits.

use alloc::vec::Vec;

/// Singular values of the `rows × cols` matrix given column by column,
/// sorted descending. One-sided Jacobi rotations on the columns.
pub fn singular_values(columns: &[Vec<f64>]) -> Vec<f64> {
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let m = a.len();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let (alpha, beta, gamma) = a[p].iter().zip(&a[q]).fold((0.0, 0.0, 0.0), |(al, be, ga), (x, y)| {
                    (al + x * x, be + y * y, ga + x * y)
                });
                if gamma == 0.0 || libm::fabs(gamma) <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let (left, right) = a.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| libm::sqrt(col.iter().map(|v| v * v).sum())).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
    sv
}

/// Numerical rank: singular values above `rel_tol × σ_max`.
pub fn numerical_rank(columns: &[Vec<f64>], rel_tol: f64) -> usize {
    let sv = singular_values(columns);
    let Some(&top) = sv.first() else { return 0 };
    if top == 0.0 || !top.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Determinant of a square matrix stored row-major, by partial pivoting.
pub fn determinant(n: usize, mut a: Vec<f64>) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| libm::fabs(a[i * n + col]).partial_cmp(&libm::fabs(a[j * n + col])).unwrap())
            .unwrap();
        let pv = a[pivot * n + col];
        if pv == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        det *= pv;
        for r in col + 1..n {
            let factor = a[r * n + col] / pv;
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
        }
    }
    det
}

/// Least-squares line `y ≈ slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = xs
        .iter()
        .zip(ys)
        .fold((0.0, 0.0), |(sxy, sxx), (x, y)| (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Pairwise summation; deterministic and accurate for long grids.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
