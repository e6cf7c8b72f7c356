//! Test-only reference solvers, independent of the library's linear algebra.

#![allow(dead_code)]

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        assert!(a[pivot][col].abs() > 1e-300, "singular system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Minimizes `(c/2) |y − A θ|² + ½ Σ_{i ∈ penalized} θ_i²` through its
/// normal equations `(c AᵀA + D) θ = c Aᵀ y`.
pub fn ridge_normal_equations(
    rows: &[Vec<f64>],
    y: &[f64],
    c: f64,
    penalized: &[bool],
) -> Vec<f64> {
    let p = penalized.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (r, &yj) in rows.iter().zip(y) {
        for i in 0..p {
            b[i] += c * r[i] * yj;
            for k in 0..p {
                a[i][k] += c * r[i] * r[k];
            }
        }
    }
    for i in 0..p {
        if penalized[i] {
            a[i][i] += 1.0;
        }
    }
    gauss_solve(a, b)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn gauss_solve_small_system() {
    // 2x + y = 5, x − y = 1
    let x = gauss_solve(vec![vec![2.0, 1.0], vec![1.0, -1.0]], vec![5.0, 1.0]);
    assert!(max_abs_diff(&x, &[2.0, 1.0]) < 1e-15);
    // needs a row swap
    let x = gauss_solve(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![3.0, 4.0]);
    assert_eq!(x, vec![4.0, 3.0]);
}

#[test]
fn ridge_one_parameter() {
    // min (c/2) Σ (y − θ)² + θ²/2 → θ = c Σy / (c n + 1)
    let rows = vec![vec![1.0]; 3];
    let th = ridge_normal_equations(&rows, &[1.0, 2.0, 3.0], 2.0, &[true]);
    assert!((th[0] - 12.0 / 7.0).abs() < 1e-15);
}
