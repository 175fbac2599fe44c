//! Dense least squares for thin systems (many rows, a handful of columns).
//!
//! The solve path is Householder QR applied to the stacked system — not the
//! normal equations — and rank diagnostics come from singular values computed
//! by one-sided Jacobi on a copy of the matrix, which keeps tiny singular
//! values accurate instead of squaring them away.

/// Singular values of a row-major `rows x cols` matrix, descending.
pub fn singular_values(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    let mut m = a.to_vec();
    let col_dot = |m: &[f64], p: usize, q: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..rows {
            acc += m[i * cols + p] * m[i * cols + q];
        }
        acc
    };

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let alpha = col_dot(&m, p, p);
                let beta = col_dot(&m, q, q);
                let gamma = col_dot(&m, p, q);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let vp = m[i * cols + p];
                    let vq = m[i * cols + q];
                    m[i * cols + p] = c * vp - s * vq;
                    m[i * cols + q] = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..cols)
        .map(|j| col_dot(&m, j, j).sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma
}

/// Least-squares solution of `A x = b` via Householder QR. Returns `None`
/// when a diagonal of `R` vanishes (the caller is expected to have screened
/// the system with [`singular_values`] first).
#[allow(clippy::needless_range_loop)]
pub fn solve_least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    assert!(rows >= cols && cols > 0);

    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let mut v = vec![0.0f64; rows];

    for j in 0..cols {
        let mut norm_sq = 0.0;
        for i in j..rows {
            let x = m[i * cols + j];
            v[i] = x;
            norm_sq += x * x;
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if v[j] >= 0.0 { -norm } else { norm };
        v[j] -= alpha;
        let mut vtv = 0.0;
        for i in j..rows {
            vtv += v[i] * v[i];
        }
        if vtv == 0.0 {
            return None;
        }

        // Apply the reflector to the remaining columns and the rhs.
        for col in j..cols {
            let mut dot = 0.0;
            for i in j..rows {
                dot += v[i] * m[i * cols + col];
            }
            let f = 2.0 * dot / vtv;
            for i in j..rows {
                m[i * cols + col] -= f * v[i];
            }
        }
        let mut dot = 0.0;
        for i in j..rows {
            dot += v[i] * rhs[i];
        }
        let f = 2.0 * dot / vtv;
        for i in j..rows {
            rhs[i] -= f * v[i];
        }
    }

    // Back-substitute R x = rhs[0..cols].
    let mut x = vec![0.0f64; cols];
    for j in (0..cols).rev() {
        let mut acc = rhs[j];
        for col in (j + 1)..cols {
            acc -= m[j * cols + col] * x[col];
        }
        let diag = m[j * cols + j];
        if diag == 0.0 || !diag.is_finite() {
            return None;
        }
        x[j] = acc / diag;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    #[test]
    fn singular_values_of_axis_aligned_matrix() {
        let a = [1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let s = singular_values(&a, 3, 2);
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn singular_values_of_rotated_diagonal() {
        // A = R(t) * diag(5, 3) has singular values {5, 3}.
        let t: f64 = 0.7;
        let (c, s) = (t.cos(), t.sin());
        let a = [5.0 * c, -3.0 * s, 5.0 * s, 3.0 * c, 0.0, 0.0];
        let sv = singular_values(&a, 3, 2);
        assert!((sv[0] - 5.0).abs() < 1e-12 && (sv[1] - 3.0).abs() < 1e-12, "{sv:?}");
    }

    #[test]
    fn rank_deficient_matrix_has_zero_singular_value() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let s = singular_values(&a, 2, 2);
        assert!((s[0] - 2.0).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn hand_solved_overdetermined_system() {
        // A = [[1,0],[0,1],[1,1]], b = [1,2,2]; normal equations give
        // x = [2/3, 5/3].
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 2.0];
        let x = solve_least_squares(&a, 3, 2, &b).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-14, "{x:?}");
        assert!((x[1] - 5.0 / 3.0).abs() < 1e-14, "{x:?}");
    }

    #[test]
    fn residual_is_orthogonal_to_column_space() {
        let mut rng = StreamRng::new(2024);
        for _ in 0..200 {
            let rows = 4 + rng.uniform_index(20);
            let cols = 2 + rng.uniform_index(3);
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let b: Vec<f64> = (0..rows).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let s = singular_values(&a, rows, cols);
            if s[cols - 1] < 1e-6 * s[0] {
                continue;
            }
            let x = solve_least_squares(&a, rows, cols, &b).unwrap();
            // r = Ax - b must satisfy A^T r = 0 at the minimum.
            for j in 0..cols {
                let mut atr = 0.0;
                for i in 0..rows {
                    let mut axi = 0.0;
                    for k in 0..cols {
                        axi += a[i * cols + k] * x[k];
                    }
                    atr += a[i * cols + j] * (axi - b[i]);
                }
                assert!(atr.abs() < 1e-9 * (rows as f64), "A^T r component {atr}");
            }
        }
    }

    #[test]
    fn consistent_system_recovers_exact_solution() {
        let mut rng = StreamRng::new(77);
        for _ in 0..100 {
            let rows = 6 + rng.uniform_index(10);
            let cols = 3;
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let x_true: Vec<f64> = (0..cols).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let b: Vec<f64> = (0..rows)
                .map(|i| (0..cols).map(|j| a[i * cols + j] * x_true[j]).sum())
                .collect();
            let s = singular_values(&a, rows, cols);
            if s[cols - 1] < 1e-6 * s[0] {
                continue;
            }
            let x = solve_least_squares(&a, rows, cols, &b).unwrap();
            for j in 0..cols {
                assert!((x[j] - x_true[j]).abs() < 1e-9 * x_true[j].abs().max(1.0));
            }
        }
    }
}
