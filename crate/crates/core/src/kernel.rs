//! Kernel functions, the explicit feature map where one exists, and Gram
//! matrix assembly.
//!
//! Sample matrices throughout the crate store one sample per *column*
//! (`d × m`), so every sample is a contiguous slice.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Kernel family and parameters.
///
/// Serialized as `{"family": "linear"}` or `{"family": "rbf", "gamma": 0.1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    /// `k(x, x') = <x, x'>`, feature map is the identity.
    #[default]
    Linear,
    /// `k(x, x') = exp(-gamma * |x - x'|^2)`.
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::Config(format!(
                "rbf gamma must be positive and finite, got {gamma}"
            ))),
        }
    }

    /// Whether a finite-dimensional feature map is available.
    pub fn has_feature_map(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// Dimension `d_h` of the feature space for inputs of dimension `d`,
    /// `None` when the feature space is not finite.
    pub fn feature_dim(&self, d: usize) -> Option<usize> {
        match self {
            KernelSpec::Linear => Some(d),
            KernelSpec::Rbf { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!(
                "kernel arguments have lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let dist: f64 = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let diff = a - b;
                        diff * diff
                    })
                    .sum();
                (-gamma * dist).exp()
            }
        }
    }

    /// Gram matrix between the columns of `a` (`d × m`) and `b` (`d × m'`).
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != b.nrows() {
            return Err(Error::Shape(format!(
                "gram inputs have feature dimensions {} and {}",
                a.nrows(),
                b.nrows()
            )));
        }
        let (m, n) = (a.ncols(), b.ncols());
        let columns = par::map_range(n, |j| {
            let bj = b.column(j);
            let bj = bj.as_slice();
            (0..m)
                .map(|i| self.eval_unchecked(a.column(i).as_slice(), bj))
                .collect::<Vec<_>>()
        });
        Ok(DMatrix::from_iterator(m, n, columns.into_iter().flatten()))
    }

    /// Explicit feature map; only the linear kernel has one.
    pub fn feature_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            KernelSpec::Linear => Ok(x.to_vec()),
            KernelSpec::Rbf { .. } => Err(no_feature_map()),
        }
    }

    /// Feature map applied to every column of `x`, giving a `d_h × n` matrix.
    pub fn feature_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            KernelSpec::Linear => Ok(x.clone()),
            KernelSpec::Rbf { .. } => Err(no_feature_map()),
        }
    }
}

fn no_feature_map() -> Error {
    Error::Unsupported("the rbf kernel has no finite feature map; use the dual path".into())
}
