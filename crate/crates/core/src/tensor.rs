//! Multi-index task bookkeeping and CP factor algebra.
//!
//! Tasks live on a grid `T_1 × … × T_N`. The public API addresses tasks and
//! mode rows with 1-based indices; everything else in the crate works with
//! 0-based positions obtained through the `pub(crate)` helpers below, so the
//! conversion happens only here.
//!
//! Linear task ids use first-index-fastest ordering:
//! `t = idx[1] + Σ_{n≥2} (idx[n] − 1) · Π_{l<n} T_l`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGrid {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    tasks: usize,
}

impl TaskGrid {
    pub fn new(mode_sizes: Vec<usize>) -> Result<Self> {
        if mode_sizes.is_empty() {
            return Err(Error::Grid("a task grid needs at least one mode".into()));
        }
        if let Some(n) = mode_sizes.iter().position(|&s| s == 0) {
            return Err(Error::Grid(format!("mode {} has size 0", n + 1)));
        }
        let mut strides = Vec::with_capacity(mode_sizes.len());
        let mut acc = 1usize;
        for &s in &mode_sizes {
            strides.push(acc);
            acc = acc
                .checked_mul(s)
                .ok_or_else(|| Error::Grid("task count overflows usize".into()))?;
        }
        Ok(TaskGrid {
            sizes: mode_sizes,
            strides,
            tasks: acc,
        })
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_modes(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks
    }

    /// Linear task id (1-based) of a 1-based multi-index.
    pub fn linearize(&self, idx: &[usize]) -> Result<usize> {
        let idx0 = self.checked_index(idx)?;
        Ok(self.task0(&idx0) + 1)
    }

    /// 1-based multi-index of a 1-based linear task id.
    pub fn delinearize(&self, t: usize) -> Result<Vec<usize>> {
        let t0 = self.checked_task(t)?;
        Ok(self.index0(t0).into_iter().map(|i| i + 1).collect())
    }

    /// Linear ids (1-based, ascending) of every task whose mode-`mode`
    /// index equals `row`.
    pub fn coslice_index_set(&self, mode: usize, row: usize) -> Result<Vec<usize>> {
        let (m0, r0) = self.checked_mode_row(mode, row)?;
        Ok(self.coslice0(m0, r0).into_iter().map(|t| t + 1).collect())
    }

    pub(crate) fn checked_index(&self, idx: &[usize]) -> Result<Vec<usize>> {
        if idx.len() != self.sizes.len() {
            return Err(Error::Shape(format!(
                "multi-index has {} entries, grid has {} modes",
                idx.len(),
                self.sizes.len()
            )));
        }
        idx.iter()
            .zip(&self.sizes)
            .enumerate()
            .map(|(n, (&v, &size))| {
                if v == 0 || v > size {
                    Err(Error::ModeIndex {
                        mode: n + 1,
                        value: v,
                        size,
                    })
                } else {
                    Ok(v - 1)
                }
            })
            .collect()
    }

    pub(crate) fn checked_task(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.tasks {
            return Err(Error::Task {
                task: t,
                tasks: self.tasks,
            });
        }
        Ok(t - 1)
    }

    pub(crate) fn checked_mode(&self, mode: usize) -> Result<usize> {
        if mode == 0 || mode > self.sizes.len() {
            return Err(Error::Mode {
                mode,
                modes: self.sizes.len(),
            });
        }
        Ok(mode - 1)
    }

    pub(crate) fn checked_mode_row(&self, mode: usize, row: usize) -> Result<(usize, usize)> {
        let m0 = self.checked_mode(mode)?;
        let size = self.sizes[m0];
        if row == 0 || row > size {
            return Err(Error::ModeIndex {
                mode,
                value: row,
                size,
            });
        }
        Ok((m0, row - 1))
    }

    pub(crate) fn task0(&self, idx0: &[usize]) -> usize {
        idx0.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub(crate) fn index0(&self, t0: usize) -> Vec<usize> {
        self.sizes
            .iter()
            .zip(&self.strides)
            .map(|(&size, &stride)| (t0 / stride) % size)
            .collect()
    }

    pub(crate) fn coslice0(&self, mode0: usize, row0: usize) -> Vec<usize> {
        (0..self.tasks)
            .filter(|&t| (t / self.strides[mode0]) % self.sizes[mode0] == row0)
            .collect()
    }
}

/// Mode factors `U^1 … U^N`, the n-th of shape `T_n × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFactors {
    factors: Vec<DMatrix<f64>>,
    rank: usize,
}

impl ModeFactors {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::Grid("at least one mode factor is required".into()))?;
        let rank = first.ncols();
        if rank == 0 {
            return Err(Error::Config("CP rank must be at least 1".into()));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return Err(Error::Shape(format!(
                    "mode {} factor has {} columns, expected rank {rank}",
                    n + 1,
                    f.ncols()
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::Grid(format!("mode {} factor has no rows", n + 1)));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "mode {} factor has non-finite entries",
                    n + 1
                )));
            }
        }
        Ok(ModeFactors { factors, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_modes(&self) -> usize {
        self.factors.len()
    }

    /// Factor matrices in mode order (position 0 holds `U^1`).
    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn grid(&self) -> TaskGrid {
        TaskGrid::new(self.factors.iter().map(|f| f.nrows()).collect())
            .expect("factor row counts are positive")
    }

    /// `u_t[k] = Π_n U^n[idx[n], k]`.
    pub fn task_vector(&self, idx: &[usize]) -> Result<DVector<f64>> {
        let idx0 = self.grid().checked_index(idx)?;
        Ok(self.task_vector0(&idx0))
    }

    /// Hadamard product of the selected rows over every mode except
    /// `skip_mode`.
    pub fn task_vector_excluding(&self, idx: &[usize], skip_mode: usize) -> Result<DVector<f64>> {
        let grid = self.grid();
        let idx0 = grid.checked_index(idx)?;
        let skip0 = grid.checked_mode(skip_mode)?;
        Ok(self.excluding0(&idx0, skip0))
    }

    /// Copy of these factors with row `row` of mode `mode` replaced.
    pub fn with_row(&self, mode: usize, row: usize, values: &[f64]) -> Result<Self> {
        let (m0, r0) = self.grid().checked_mode_row(mode, row)?;
        if values.len() != self.rank {
            return Err(Error::Shape(format!(
                "row has {} entries, rank is {}",
                values.len(),
                self.rank
            )));
        }
        let mut out = self.clone();
        out.set_row0(m0, r0, values);
        ModeFactors::new(out.factors)
    }

    pub(crate) fn task_vector0(&self, idx0: &[usize]) -> DVector<f64> {
        let mut u = DVector::from_element(self.rank, 1.0);
        for (f, &i) in self.factors.iter().zip(idx0) {
            for k in 0..self.rank {
                u[k] *= f[(i, k)];
            }
        }
        u
    }

    pub(crate) fn excluding0(&self, idx0: &[usize], skip0: usize) -> DVector<f64> {
        let mut u = DVector::from_element(self.rank, 1.0);
        for (n, (f, &i)) in self.factors.iter().zip(idx0).enumerate() {
            if n == skip0 {
                continue;
            }
            for k in 0..self.rank {
                u[k] *= f[(i, k)];
            }
        }
        u
    }

    /// `T × K` matrix whose row `t` is `u_t` for 0-based linear task `t`.
    pub(crate) fn task_matrix(&self, grid: &TaskGrid) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(grid.num_tasks(), self.rank);
        for t in 0..grid.num_tasks() {
            out.row_mut(t)
                .tr_copy_from(&self.task_vector0(&grid.index0(t)));
        }
        out
    }

    pub(crate) fn set_row0(&mut self, mode0: usize, row0: usize, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            self.factors[mode0][(row0, k)] = *v;
        }
    }

    /// `Σ_n ||U^n||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_squared()).sum()
    }
}

/// Training inputs kept alongside a dual-form shared factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInputs {
    x: DMatrix<f64>,
    tasks: Vec<usize>,
}

impl TrainingInputs {
    /// `x` holds one sample per column; `tasks[j]` is the 0-based linear
    /// task of sample `j`.
    pub fn new(x: DMatrix<f64>, tasks: Vec<usize>) -> Result<Self> {
        if x.ncols() != tasks.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} task labels",
                x.ncols(),
                tasks.len()
            )));
        }
        Ok(TrainingInputs { x, tasks })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn tasks(&self) -> &[usize] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// The shared factor `L = Σ_j α_j φ(x_j) u_{t(j)}^T`.
///
/// The dual form (coefficients, the task vectors in force when `L` was
/// solved, and the training inputs) is always present; an explicit
/// `d_h × K` matrix is kept alongside it when the kernel has a finite
/// feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedFactor {
    alpha: DVector<f64>,
    u_snapshot: DMatrix<f64>,
    inputs: Arc<TrainingInputs>,
    explicit: Option<DMatrix<f64>>,
}

impl SharedFactor {
    /// Builds the dual form and, when `kernel` allows it, the explicit matrix.
    pub fn from_duals(
        alpha: DVector<f64>,
        u_snapshot: DMatrix<f64>,
        inputs: Arc<TrainingInputs>,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        let mut shared = SharedFactor::dual_only(alpha, u_snapshot, inputs)?;
        if kernel.has_feature_map() {
            let phi = kernel.feature_matrix(shared.inputs.x())?;
            shared.explicit = Some(phi * shared.dual_weights());
        }
        Ok(shared)
    }

    pub fn dual_only(
        alpha: DVector<f64>,
        u_snapshot: DMatrix<f64>,
        inputs: Arc<TrainingInputs>,
    ) -> Result<Self> {
        if alpha.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} dual coefficients for {} training samples",
                alpha.len(),
                inputs.len()
            )));
        }
        if let Some(&t) = inputs.tasks().iter().max() {
            if t >= u_snapshot.nrows() {
                return Err(Error::Shape(format!(
                    "training sample refers to task {} but the snapshot has {} task vectors",
                    t + 1,
                    u_snapshot.nrows()
                )));
            }
        }
        if alpha
            .iter()
            .chain(u_snapshot.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Data("shared factor has non-finite entries".into()));
        }
        Ok(SharedFactor {
            alpha,
            u_snapshot,
            inputs,
            explicit: None,
        })
    }

    /// Attaches an explicit matrix, e.g. when loading a saved model.
    pub fn with_explicit(mut self, l: DMatrix<f64>) -> Result<Self> {
        if l.ncols() != self.rank() || l.nrows() != self.inputs.x().nrows() {
            return Err(Error::Shape(format!(
                "explicit shared factor is {}x{}, expected {}x{}",
                l.nrows(),
                l.ncols(),
                self.inputs.x().nrows(),
                self.rank()
            )));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "explicit shared factor has non-finite entries".into(),
            ));
        }
        self.explicit = Some(l);
        Ok(self)
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn u_snapshot(&self) -> &DMatrix<f64> {
        &self.u_snapshot
    }

    pub fn inputs(&self) -> &Arc<TrainingInputs> {
        &self.inputs
    }

    pub fn explicit(&self) -> Option<&DMatrix<f64>> {
        self.explicit.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.u_snapshot.ncols()
    }

    /// `m × K` matrix with row `j` equal to `α_j · u_{t(j)}` (snapshot).
    pub fn dual_weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.alpha.len(), self.rank());
        for (j, &t) in self.inputs.tasks().iter().enumerate() {
            for k in 0..self.rank() {
                w[(j, k)] = self.alpha[j] * self.u_snapshot[(t, k)];
            }
        }
        w
    }

    /// `L^T φ(x)` for every column of `x`, as rows of an `n × K` matrix,
    /// through kernel evaluations against the stored training inputs.
    pub fn project_dual(&self, kernel: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cross = kernel.gram(self.inputs.x(), x)?;
        Ok(cross.transpose() * self.dual_weights())
    }

    /// `L^T φ(x)` through the explicit matrix.
    pub fn project_explicit(&self, kernel: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = self.explicit.as_ref().ok_or_else(|| {
            Error::Unsupported("no explicit shared factor; use the dual path".into())
        })?;
        let phi = kernel.feature_matrix(x)?;
        if phi.nrows() != l.nrows() {
            return Err(Error::Shape(format!(
                "inputs have feature dimension {}, shared factor has {}",
                phi.nrows(),
                l.nrows()
            )));
        }
        Ok(phi.transpose() * l)
    }

    /// `tr(L L^T)` from the dual form, given the training Gram matrix.
    pub(crate) fn trace_with_gram(&self, gram: &DMatrix<f64>) -> f64 {
        let w = self.dual_weights();
        (w.transpose() * gram * &w).trace()
    }

    /// `tr(L L^T)` from the dual form.
    pub fn trace_dual(&self, kernel: &KernelSpec) -> Result<f64> {
        let g = kernel.gram(self.inputs.x(), self.inputs.x())?;
        Ok(self.trace_with_gram(&g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(sizes: &[usize]) -> TaskGrid {
        TaskGrid::new(sizes.to_vec()).unwrap()
    }

    fn factors(rows: &[&[f64]]) -> ModeFactors {
        ModeFactors::new(
            rows.iter()
                .map(|r| DMatrix::from_row_slice(1, r.len(), r))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TaskGrid::new(vec![]).is_err());
        assert!(TaskGrid::new(vec![3, 0]).is_err());
        let g = grid(&[3, 4, 5]);
        assert_eq!(g.num_tasks(), 60);
        assert_eq!(g.num_modes(), 3);
    }

    #[test]
    fn linearize_examples() {
        let g = grid(&[3, 4, 5]);
        assert_eq!(g.linearize(&[1, 1, 1]).unwrap(), 1);
        assert_eq!(g.linearize(&[2, 1, 1]).unwrap(), 2);
        assert_eq!(g.linearize(&[1, 2, 1]).unwrap(), 4);
        match g.linearize(&[1, 5, 1]) {
            Err(Error::ModeIndex {
                mode: 2,
                value: 5,
                size: 4,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(g.linearize(&[0, 1, 1]).is_err());
        assert!(g.linearize(&[1, 1]).is_err());
    }

    #[test]
    fn delinearize_examples() {
        let g = grid(&[3, 4, 5]);
        assert_eq!(g.delinearize(1).unwrap(), vec![1, 1, 1]);
        assert_eq!(g.delinearize(60).unwrap(), vec![3, 4, 5]);
        assert!(g.delinearize(0).is_err());
        assert!(g.delinearize(61).is_err());

        // (2,3) grid enumerated first-index-fastest:
        // 1:(1,1) 2:(2,1) 3:(1,2) 4:(2,2) 5:(1,3) 6:(2,3)
        assert_eq!(grid(&[2, 3]).delinearize(4).unwrap(), vec![2, 2]);
    }

    #[test]
    fn linearize_roundtrip_exhaustive() {
        for sizes in [
            vec![1],
            vec![7],
            vec![3, 4, 5],
            vec![2, 1, 3, 2],
            vec![100, 100],
        ] {
            let g = grid(&sizes);
            let mut seen = vec![false; g.num_tasks()];
            for t in 1..=g.num_tasks() {
                let idx = g.delinearize(t).unwrap();
                assert_eq!(g.linearize(&idx).unwrap(), t);
                assert!(!std::mem::replace(&mut seen[t - 1], true));
            }
        }
    }

    #[test]
    fn coslice_examples() {
        let g = grid(&[3, 4, 5]);
        let s = g.coslice_index_set(1, 1).unwrap();
        assert_eq!(s.len(), 20);
        for t in &s {
            assert_eq!(g.delinearize(*t).unwrap()[0], 1);
        }
        assert_eq!(grid(&[2]).coslice_index_set(1, 2).unwrap(), vec![2]);
        assert_eq!(grid(&[2, 3]).coslice_index_set(2, 1).unwrap(), vec![1, 2]);
        assert!(g.coslice_index_set(4, 1).is_err());
        assert!(g.coslice_index_set(2, 5).is_err());
    }

    #[test]
    fn coslices_partition_tasks() {
        let g = grid(&[3, 4, 2]);
        for mode in 1..=3 {
            let mut all: Vec<usize> = (1..=g.mode_sizes()[mode - 1])
                .flat_map(|r| g.coslice_index_set(mode, r).unwrap())
                .collect();
            all.sort_unstable();
            assert_eq!(all, (1..=g.num_tasks()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn task_vector_examples() {
        let f = factors(&[&[2.0], &[3.0]]);
        assert_eq!(f.task_vector(&[1, 1]).unwrap().as_slice(), &[6.0]);

        let f = factors(&[&[1.5, -2.0]]);
        assert_eq!(f.task_vector(&[1]).unwrap().as_slice(), &[1.5, -2.0]);

        let f = factors(&[&[1.0, 0.0], &[2.0, 5.0], &[3.0, 1.0]]);
        assert_eq!(f.task_vector(&[1, 1, 1]).unwrap().as_slice(), &[6.0, 0.0]);
        assert!(f.task_vector(&[1, 2, 1]).is_err());
    }

    #[test]
    fn task_vector_excluding_examples() {
        let f = factors(&[&[0.3, 7.0, -1.0]]);
        assert_eq!(
            f.task_vector_excluding(&[1], 1).unwrap().as_slice(),
            &[1.0, 1.0, 1.0]
        );
        let f = factors(&[&[4.0, -1.0], &[9.0, 9.0]]);
        assert_eq!(
            f.task_vector_excluding(&[1, 1], 2).unwrap().as_slice(),
            &[4.0, -1.0]
        );
        let f = factors(&[&[2.0], &[3.0], &[5.0]]);
        assert_eq!(
            f.task_vector_excluding(&[1, 1, 1], 2).unwrap().as_slice(),
            &[10.0]
        );
        assert!(f.task_vector_excluding(&[1, 1, 1], 4).is_err());
        assert!(f.task_vector_excluding(&[1, 1, 1], 0).is_err());
    }

    #[test]
    fn mixed_rank_rejected() {
        let res = ModeFactors::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)]);
        assert!(matches!(res, Err(Error::Shape(_))));
        let res = ModeFactors::new(vec![DMatrix::from_element(2, 1, f64::NAN)]);
        assert!(res.is_err());
    }

    #[test]
    fn shared_factor_validation() {
        let inputs = Arc::new(TrainingInputs::new(DMatrix::zeros(2, 3), vec![0, 1, 1]).unwrap());
        let snap = DMatrix::from_element(2, 1, 1.0);
        assert!(SharedFactor::dual_only(DVector::zeros(2), snap.clone(), inputs.clone()).is_err());
        let short = DMatrix::from_element(1, 1, 1.0);
        assert!(SharedFactor::dual_only(DVector::zeros(3), short, inputs.clone()).is_err());
        let ok =
            SharedFactor::from_duals(DVector::zeros(3), snap, inputs, &KernelSpec::Linear).unwrap();
        assert_eq!(ok.explicit().unwrap().shape(), (2, 1));
        assert!(ok.clone().with_explicit(DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn dual_and_explicit_projection_agree() {
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.5, -0.2, 2.0, 0.7, -1.1]);
        let inputs = Arc::new(TrainingInputs::new(x, vec![0, 1, 0]).unwrap());
        let snap = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let alpha = DVector::from_vec(vec![0.4, -0.1, 0.25]);
        let shared = SharedFactor::from_duals(alpha, snap, inputs, &KernelSpec::Linear).unwrap();
        let probe = DMatrix::from_column_slice(2, 2, &[0.9, -0.4, 1.5, 3.0]);
        let a = shared.project_dual(&KernelSpec::Linear, &probe).unwrap();
        let b = shared
            .project_explicit(&KernelSpec::Linear, &probe)
            .unwrap();
        assert!((a - b).amax() < 1e-14);
        let l = shared.explicit().unwrap();
        let tr = shared.trace_dual(&KernelSpec::Linear).unwrap();
        assert!((tr - l.norm_squared()).abs() < 1e-13);
    }

    fn grid_and_factors() -> impl Strategy<Value = (Vec<usize>, usize, Vec<f64>)> {
        (prop::collection::vec(1usize..4, 1..4), 1usize..4).prop_flat_map(|(sizes, k)| {
            let total: usize = sizes.iter().sum::<usize>() * k;
            (
                Just(sizes),
                Just(k),
                prop::collection::vec(-2.0f64..2.0, total),
            )
        })
    }

    fn build(sizes: &[usize], k: usize, vals: &[f64]) -> ModeFactors {
        let mut off = 0;
        ModeFactors::new(
            sizes
                .iter()
                .map(|&s| {
                    let m = DMatrix::from_row_slice(s, k, &vals[off..off + s * k]);
                    off += s * k;
                    m
                })
                .collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn exclusion_times_row_is_task_vector((sizes, k, vals) in grid_and_factors()) {
            let f = build(&sizes, k, &vals);
            let g = f.grid();
            for t in 1..=g.num_tasks() {
                let idx = g.delinearize(t).unwrap();
                let u = f.task_vector(&idx).unwrap();
                for n in 1..=g.num_modes() {
                    let rest = f.task_vector_excluding(&idx, n).unwrap();
                    let row = f.factors()[n - 1].row(idx[n - 1] - 1).transpose();
                    let diff = (rest.component_mul(&row) - &u).amax();
                    prop_assert!(diff <= 1e-12 * (1.0 + u.amax()));
                }
            }
        }

        #[test]
        fn scaling_a_row_scales_only_its_coslice(
            (sizes, k, vals) in grid_and_factors(),
            mode_pick in 0usize..8,
            row_pick in 0usize..8,
            c in -3.0f64..3.0,
        ) {
            let f = build(&sizes, k, &vals);
            let g = f.grid();
            let mode = mode_pick % g.num_modes() + 1;
            let row = row_pick % g.mode_sizes()[mode - 1] + 1;
            let scaled: Vec<f64> = f.factors()[mode - 1].row(row - 1).iter().map(|v| v * c).collect();
            let f2 = f.with_row(mode, row, &scaled).unwrap();
            let members = g.coslice_index_set(mode, row).unwrap();
            for t in 1..=g.num_tasks() {
                let idx = g.delinearize(t).unwrap();
                let u = f.task_vector(&idx).unwrap();
                let u2 = f2.task_vector(&idx).unwrap();
                if members.contains(&t) {
                    // equal up to the reassociation of one product
                    let diff = (u2 - &u * c).amax();
                    prop_assert!(diff <= 1e-12 * (1.0 + u.amax() * c.abs()));
                } else {
                    prop_assert_eq!(u2, u);
                }
            }
        }
    }
}
