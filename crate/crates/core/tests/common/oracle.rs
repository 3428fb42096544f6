//! Independent reference implementations used only by tests.

#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;

/// Singular values of a complex `rows × cols` matrix (row-major), descending.
///
/// One-sided Jacobi on the real embedding `[[Re, -Im], [Im, Re]]`, whose
/// singular values are those of the complex matrix, each repeated twice.
pub fn singular_values(h: &[Complex64], rows: usize, cols: usize) -> Vec<f64> {
    let (m, n) = (2 * rows, 2 * cols);
    // column-major real embedding
    let mut a = vec![vec![0.0f64; m]; n];
    for r in 0..rows {
        for c in 0..cols {
            let z = h[r * cols + c];
            a[c][r] = z.re;
            a[c][r + rows] = z.im;
            a[c + cols][r] = -z.im;
            a[c + cols][r + rows] = z.re;
        }
    }
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = c * x - s * y;
                    a[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv.into_iter().step_by(2).collect()
}

pub fn rank(sv: &[f64], k: f64) -> usize {
    sv.iter().filter(|&&s| s > sv[0] / k).count()
}

/// Natural cubic spline through `(x, y)` evaluated at `x0`, assembled as the
/// full `n × n` second-derivative system and solved by dense elimination.
pub fn natural_spline(x: &[f64], y: &[f64], x0: f64) -> f64 {
    let n = x.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    a[0][0] = 1.0;
    a[n - 1][n - 1] = 1.0;
    for i in 1..n - 1 {
        let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        a[i][i - 1] = h0;
        a[i][i] = 2.0 * (h0 + h1);
        a[i][i + 1] = h1;
        a[i][n] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..=n {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    let m: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
    let i = (0..n - 1).rev().find(|&i| x[i] <= x0).unwrap_or(0);
    let h = x[i + 1] - x[i];
    let (u, v) = ((x[i + 1] - x0) / h, (x0 - x[i]) / h);
    u * y[i] + v * y[i + 1] + ((u.powi(3) - u) * m[i] + (v.powi(3) - v) * m[i + 1]) * h * h / 6.0
}
