//! Tiny dense solvers for the low-dimensional systems arising in
//! equilibrium refinement and storage synthesis (at most 9 unknowns).

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Returns `None` for (numerically) singular `A`.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

/// Least-squares solution of the overdetermined system `M x = rhs`
/// (`M` row-major, `rows x cols`, `rows >= cols`) via normal equations.
/// Returns the solution and the residual norm `|| M x - rhs ||`.
pub fn least_squares(m: &[f64], rhs: &[f64], rows: usize, cols: usize) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(rhs.len(), rows);
    let mut mtm = vec![0.0; cols * cols];
    let mut mtb = vec![0.0; cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += m[r * cols + i] * m[r * cols + j];
            }
            mtm[i * cols + j] = s;
        }
        let mut s = 0.0;
        for r in 0..rows {
            s += m[r * cols + i] * rhs[r];
        }
        mtb[i] = s;
    }
    // Regularize the normal equations just enough to survive exact rank
    // deficiency (e.g. a fully stationary cost, where any nu solves them;
    // the minimum-norm choice is then nu = 0).
    let scale = mtm
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1e-30);
    for i in 0..cols {
        mtm[i * cols + i] += scale * 1e-12;
    }
    let x = solve(mtm, mtb)?;
    let mut res = 0.0;
    for r in 0..rows {
        let mut s = -rhs[r];
        for c in 0..cols {
            s += m[r * cols + c] * x[c];
        }
        res += s * s;
    }
    Some((x, res.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [2 1; 1 3] x = [3; 5] -> x = (4/5, 7/5)
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn singular_detected() {
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn least_squares_line_fit() {
        // Fit y = c over observations 1, 2, 3 -> c = 2, residual sqrt(2).
        let (x, res) = least_squares(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 3, 1).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert!((res - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn least_squares_exact_system() {
        let m = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let (x, res) = least_squares(&m, &[1.0, 2.0, 3.0], 3, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((x[1] - 2.0).abs() < 1e-9);
        assert!(res < 1e-9);
    }
}
