//! Independent per-task LSSVM regression: one dual system
//! `[[0, 1^T], [1, G + I/C]] [b; α] = [0; y]` per task, no coupling.

use nalgebra::{DMatrix, DVector};

use crate::dataset::MtlDataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::solve_saddle;
use crate::par;
use crate::tensor::TaskGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskLssvm {
    alpha: DVector<f64>,
    bias: f64,
    inputs: DMatrix<f64>,
    kernel: KernelSpec,
    residual: f64,
}

impl TaskLssvm {
    pub fn from_parts(
        alpha: DVector<f64>,
        bias: f64,
        inputs: DMatrix<f64>,
        kernel: KernelSpec,
    ) -> Result<Self> {
        if alpha.len() != inputs.ncols() {
            return Err(Error::Shape(format!(
                "{} dual coefficients for {} samples",
                alpha.len(),
                inputs.ncols()
            )));
        }
        Ok(TaskLssvm {
            alpha,
            bias,
            inputs,
            kernel,
            residual: 0.0,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Training inputs, one per column.
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    /// Residual norm of the dual system at fit time.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `Σ_i α_i k(x, x_i) + b`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.inputs.nrows() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.inputs.nrows()
            )));
        }
        let sum: f64 = self
            .inputs
            .column_iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| a * self.kernel.eval_unchecked(xi.as_slice(), x))
            .sum();
        Ok(sum + self.bias)
    }

    /// `w = Σ_i α_i φ(x_i)` when the kernel has a feature map.
    pub fn explicit_weights(&self) -> Result<DVector<f64>> {
        Ok(self.kernel.feature_matrix(&self.inputs)? * &self.alpha)
    }
}

/// Fits one task. `x` holds one sample per column.
pub fn fit_single(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: f64,
    kernel: &KernelSpec,
    jitter: f64,
) -> Result<TaskLssvm> {
    if y.is_empty() {
        return Err(Error::Data("cannot fit an LSSVM without samples".into()));
    }
    if x.ncols() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} responses",
            x.ncols(),
            y.len()
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    kernel.validate()?;
    let mut h = kernel.gram(x, x)?;
    for i in 0..h.nrows() {
        h[(i, i)] += 1.0 / c + jitter;
    }
    let sol = solve_saddle(&[y.len()], &h, y, "LSSVM")?;
    Ok(TaskLssvm {
        alpha: sol.duals,
        bias: sol.biases[0],
        inputs: x.clone(),
        kernel: *kernel,
        residual: sol.residual,
    })
}

/// One independent LSSVM per task of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentLssvm {
    grid: TaskGrid,
    c: f64,
    kernel: KernelSpec,
    tasks: Vec<TaskLssvm>,
}

impl IndependentLssvm {
    pub fn from_parts(
        grid: TaskGrid,
        c: f64,
        kernel: KernelSpec,
        tasks: Vec<TaskLssvm>,
    ) -> Result<Self> {
        if tasks.len() != grid.num_tasks() {
            return Err(Error::Shape(format!(
                "{} task models for {} tasks",
                tasks.len(),
                grid.num_tasks()
            )));
        }
        Ok(IndependentLssvm {
            grid,
            c,
            kernel,
            tasks,
        })
    }

    pub fn grid(&self) -> &TaskGrid {
        &self.grid
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    /// Per-task models in linear task order.
    pub fn tasks(&self) -> &[TaskLssvm] {
        &self.tasks
    }

    /// Prediction for a 1-based multi-index.
    pub fn predict(&self, idx: &[usize], x: &[f64]) -> Result<f64> {
        let t = self.grid.linearize(idx)? - 1;
        self.tasks[t].predict(x)
    }

    pub fn predict_dataset(&self, data: &MtlDataset) -> Result<Vec<f64>> {
        if data.grid() != &self.grid {
            return Err(Error::Shape(format!(
                "model grid {:?} does not match data grid {:?}",
                self.grid.mode_sizes(),
                data.grid().mode_sizes()
            )));
        }
        let tasks = data.sample_tasks();
        par::map_range(data.len(), |j| self.tasks[tasks[j]].predict(data.sample(j)))
            .into_iter()
            .collect()
    }
}

pub fn fit_independent(
    data: &MtlDataset,
    c: f64,
    kernel: &KernelSpec,
    jitter: f64,
) -> Result<IndependentLssvm> {
    data.require_nonempty_tasks()?;
    let tasks = par::map_range(data.num_tasks(), |t| {
        let r = data.task_range0(t);
        fit_single(
            &data.x().columns(r.start, r.len()).into_owned(),
            &data.y().rows(r.start, r.len()).into_owned(),
            c,
            kernel,
            jitter,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    IndependentLssvm::from_parts(data.grid().clone(), c, *kernel, tasks)
}
