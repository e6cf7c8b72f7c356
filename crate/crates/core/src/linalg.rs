//! Dense solver for the bordered systems produced by every subproblem:
//!
//! ```text
//! [ 0   A^T ] [ b ]   [ 0 ]
//! [ A   H   ] [ a ] = [ y ]
//! ```
//!
//! where `A = blockdiag(1_{n_1}, …, 1_{n_g})` groups consecutive rows and
//! `H` is symmetric positive definite. Solved by LU with partial pivoting
//! plus a few rounds of iterative refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const REFINEMENT_STEPS: usize = 3;

/// Relative residual bound accepted for every saddle-point solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    /// One bias per group.
    pub biases: DVector<f64>,
    /// One dual coefficient per row of `H`.
    pub duals: DVector<f64>,
    /// `|rhs − K x|_2` of the full bordered system.
    pub residual: f64,
    /// `|rhs|_2 = |y|_2`.
    pub rhs_norm: f64,
}

impl SaddleSolution {
    pub fn residual_ok(&self) -> bool {
        self.residual <= RESIDUAL_TOL * (1.0 + self.rhs_norm)
    }
}

/// Per-group sums of `v`, i.e. `A^T v`.
pub fn group_sums(groups: &[usize], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(groups.len());
    let mut at = 0;
    for (g, &n) in groups.iter().enumerate() {
        out[g] = v.rows(at, n).sum();
        at += n;
    }
    out
}

pub fn solve_saddle(
    groups: &[usize],
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    context: &str,
) -> Result<SaddleSolution> {
    let g = groups.len();
    let m: usize = groups.iter().sum();
    if h.nrows() != m || h.ncols() != m || y.len() != m {
        return Err(Error::Shape(format!(
            "{context}: H is {}x{}, y has {} entries, groups cover {m} rows",
            h.nrows(),
            h.ncols(),
            y.len()
        )));
    }
    let n = g + m;
    let mut k = DMatrix::zeros(n, n);
    let mut at = 0;
    for (grp, &size) in groups.iter().enumerate() {
        for i in at..at + size {
            k[(grp, g + i)] = 1.0;
            k[(g + i, grp)] = 1.0;
        }
        at += size;
    }
    k.view_mut((g, g), (m, m)).copy_from(h);
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(g, m).copy_from(y);
    let rhs_norm = y.norm();

    let lu = k.clone().lu();
    let singular = |residual: f64| Error::Singular {
        context: context.to_string(),
        residual,
    };
    let mut x = lu.solve(&rhs).ok_or_else(|| singular(f64::INFINITY))?;
    let mut r = &rhs - &k * &x;
    let mut residual = r.norm();
    for _ in 0..REFINEMENT_STEPS {
        if !residual.is_finite() || residual <= 0.1 * RESIDUAL_TOL * (1.0 + rhs_norm) {
            break;
        }
        let Some(dx) = lu.solve(&r) else { break };
        let candidate = &x + dx;
        let r_new = &rhs - &k * &candidate;
        let res_new = r_new.norm();
        if !(res_new < residual) {
            break;
        }
        x = candidate;
        r = r_new;
        residual = res_new;
    }
    if !residual.is_finite() || residual > RESIDUAL_TOL * (1.0 + rhs_norm) {
        return Err(singular(residual));
    }
    Ok(SaddleSolution {
        biases: x.rows(0, g).into_owned(),
        duals: x.rows(g, m).into_owned(),
        residual,
        rhs_norm,
    })
}
