//! Trained models, their two prediction routes, and the JSON model file.
//!
//! With `L` in dual form the two routes are
//!
//! ```text
//! primal: f_t(x) = (L u_t)^T φ(x) + b_t
//! dual:   f_t(x) = Σ_q Σ_p α_p^q k(x, x_p^q) <u_t, ū_q> + b_t
//! ```
//!
//! where `α` are the last L-step duals and `ū_q` the task vectors frozen
//! at that L-step, while `u_t` uses the final factors. The two agree
//! exactly in exact arithmetic whenever an explicit `L` exists.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_independent, IndependentLssvm, TaskLssvm};
use crate::dataset::{rows_of, MtlDataset};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::par;
use crate::solver::{fit, FitConfig, FitState};
use crate::tensor::{ModeFactors, SharedFactor, TaskGrid, TrainingInputs};

pub const FORMAT_VERSION: u32 = 1;
pub const METHOD_TLSSVM: &str = "tlssvm";
pub const METHOD_INDEPENDENT: &str = "lssvm-independent";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    grid: TaskGrid,
    factors: ModeFactors,
    shared: SharedFactor,
    biases: DVector<f64>,
    kernel: KernelSpec,
}

impl TrainedModel {
    pub fn new(
        factors: ModeFactors,
        shared: SharedFactor,
        biases: DVector<f64>,
        kernel: KernelSpec,
    ) -> Result<Self> {
        kernel.validate()?;
        let grid = factors.grid();
        if biases.len() != grid.num_tasks() {
            return Err(Error::Shape(format!(
                "{} biases for {} tasks",
                biases.len(),
                grid.num_tasks()
            )));
        }
        if shared.rank() != factors.rank() {
            return Err(Error::Shape(format!(
                "shared factor has rank {}, mode factors have rank {}",
                shared.rank(),
                factors.rank()
            )));
        }
        if shared.u_snapshot().nrows() != grid.num_tasks() {
            return Err(Error::Shape(format!(
                "snapshot holds {} task vectors for {} tasks",
                shared.u_snapshot().nrows(),
                grid.num_tasks()
            )));
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Data("non-finite bias".into()));
        }
        Ok(TrainedModel {
            grid,
            factors,
            shared,
            biases,
            kernel,
        })
    }

    pub fn from_fit(state: &FitState) -> Result<Self> {
        TrainedModel::new(
            state.factors.clone(),
            state.shared.clone(),
            state.biases.clone(),
            state.config.kernel,
        )
    }

    pub fn grid(&self) -> &TaskGrid {
        &self.grid
    }

    pub fn factors(&self) -> &ModeFactors {
        &self.factors
    }

    pub fn shared(&self) -> &SharedFactor {
        &self.shared
    }

    pub fn biases(&self) -> &DVector<f64> {
        &self.biases
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    fn input_dim(&self) -> usize {
        self.shared.inputs().x().nrows()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `(L u_t)^T φ(x) + b_t` for a 1-based multi-index.
    pub fn predict_primal(&self, idx: &[usize], x: &[f64]) -> Result<f64> {
        let idx0 = self.grid.checked_index(idx)?;
        self.check_input(x)?;
        let l = self.shared.explicit().ok_or_else(|| {
            Error::Unsupported("this model has no explicit shared factor; use predict_dual".into())
        })?;
        let phi = DVector::from_vec(self.kernel.feature_map(x)?);
        let w = l * self.factors.task_vector0(&idx0);
        Ok(w.dot(&phi) + self.biases[self.grid.task0(&idx0)])
    }

    /// `Σ_q Σ_p α_p^q k(x, x_p^q) <u_t, ū_q> + b_t` for a 1-based
    /// multi-index.
    pub fn predict_dual(&self, idx: &[usize], x: &[f64]) -> Result<f64> {
        let idx0 = self.grid.checked_index(idx)?;
        self.check_input(x)?;
        let u = self.factors.task_vector0(&idx0);
        let coherence = self.shared.u_snapshot() * &u;
        let inputs = self.shared.inputs();
        let sum: f64 = inputs
            .x()
            .column_iter()
            .zip(inputs.tasks())
            .zip(self.shared.alpha().iter())
            .map(|((xp, &q), a)| a * self.kernel.eval_unchecked(xp.as_slice(), x) * coherence[q])
            .sum();
        Ok(sum + self.biases[self.grid.task0(&idx0)])
    }

    /// Primal route when an explicit `L` exists, dual route otherwise.
    pub fn predict(&self, idx: &[usize], x: &[f64]) -> Result<f64> {
        if self.shared.explicit().is_some() {
            self.predict_primal(idx, x)
        } else {
            self.predict_dual(idx, x)
        }
    }

    /// Predictions for every sample of `data`, in its sample order.
    pub fn predict_dataset(&self, data: &MtlDataset) -> Result<Vec<f64>> {
        if data.grid() != &self.grid {
            return Err(Error::Shape(format!(
                "model grid {:?} does not match data grid {:?}",
                self.grid.mode_sizes(),
                data.grid().mode_sizes()
            )));
        }
        if data.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "data has {} features, model expects {}",
                data.dim(),
                self.input_dim()
            )));
        }
        let proj = if self.shared.explicit().is_some() {
            self.shared.project_explicit(&self.kernel, data.x())?
        } else {
            self.shared.project_dual(&self.kernel, data.x())?
        };
        let task_u = self.factors.task_matrix(&self.grid);
        let tasks = data.sample_tasks();
        Ok(par::map_range(data.len(), |j| {
            let t = tasks[j];
            proj.row(j).dot(&task_u.row(t)) + self.biases[t]
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        let inputs = self.shared.inputs();
        let file = TlssvmFile {
            format_version: FORMAT_VERSION,
            method: METHOD_TLSSVM.into(),
            mode_sizes: self.grid.mode_sizes().to_vec(),
            kernel: self.kernel,
            rank: self.factors.rank(),
            mode_factors: self.factors.factors().iter().map(rows_of).collect(),
            biases: self.biases.iter().copied().collect(),
            alpha: self.shared.alpha().iter().copied().collect(),
            u_snapshot: rows_of(self.shared.u_snapshot()),
            train_tasks: inputs.tasks().iter().map(|t| t + 1).collect(),
            train_x: inputs
                .x()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            shared_explicit: self.shared.explicit().map(rows_of),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match AnyModel::from_json(text)? {
            AnyModel::Tensorized(m) => Ok(m),
            AnyModel::Independent(_) => Err(Error::Model(format!(
                "expected a {METHOD_TLSSVM} model, found {METHOD_INDEPENDENT}"
            ))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainedModel::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tlssvm,
    LssvmIndependent,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tlssvm => METHOD_TLSSVM,
            Method::LssvmIndependent => METHOD_INDEPENDENT,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            METHOD_TLSSVM => Ok(Method::Tlssvm),
            METHOD_INDEPENDENT => Ok(Method::LssvmIndependent),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected {METHOD_TLSSVM} or {METHOD_INDEPENDENT})"
            ))),
        }
    }
}

/// Either model kind, as stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Tensorized(TrainedModel),
    Independent(IndependentLssvm),
}

impl AnyModel {
    /// Fits `method` on `data`. The baseline only reads `C`, the kernel and
    /// the jitter from `config`.
    pub fn fit(method: Method, data: &MtlDataset, config: &FitConfig) -> Result<Self> {
        match method {
            Method::Tlssvm => {
                let state = fit(data, config)?;
                TrainedModel::from_fit(&state).map(AnyModel::Tensorized)
            }
            Method::LssvmIndependent => {
                config.validate()?;
                fit_independent(data, config.c, &config.kernel, config.jitter)
                    .map(AnyModel::Independent)
            }
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            AnyModel::Tensorized(_) => METHOD_TLSSVM,
            AnyModel::Independent(_) => METHOD_INDEPENDENT,
        }
    }

    pub fn grid(&self) -> &TaskGrid {
        match self {
            AnyModel::Tensorized(m) => m.grid(),
            AnyModel::Independent(m) => m.grid(),
        }
    }

    pub fn predict(&self, idx: &[usize], x: &[f64]) -> Result<f64> {
        match self {
            AnyModel::Tensorized(m) => m.predict(idx, x),
            AnyModel::Independent(m) => m.predict(idx, x),
        }
    }

    pub fn predict_dataset(&self, data: &MtlDataset) -> Result<Vec<f64>> {
        match self {
            AnyModel::Tensorized(m) => m.predict_dataset(data),
            AnyModel::Independent(m) => m.predict_dataset(data),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            AnyModel::Tensorized(m) => m.to_json(),
            AnyModel::Independent(m) => independent_to_json(m),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::Model("missing format_version".into()))?
            .as_u64()
            .ok_or_else(|| Error::Model("format_version is not an integer".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Model(format!(
                "unsupported format_version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let method = value
            .get("method")
            .and_then(|m| m.as_str())
            .ok_or_else(|| Error::Model("missing method".into()))?;
        match method {
            METHOD_TLSSVM => {
                let file: TlssvmFile =
                    serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
                file.into_model().map(AnyModel::Tensorized)
            }
            METHOD_INDEPENDENT => {
                let file: IndependentFile =
                    serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
                file.into_model().map(AnyModel::Independent)
            }
            other => Err(Error::Model(format!("unknown method {other:?}"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        AnyModel::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TlssvmFile {
    format_version: u32,
    method: String,
    mode_sizes: Vec<usize>,
    kernel: KernelSpec,
    rank: usize,
    mode_factors: Vec<Vec<Vec<f64>>>,
    biases: Vec<f64>,
    alpha: Vec<f64>,
    u_snapshot: Vec<Vec<f64>>,
    /// 1-based linear task id of every training sample.
    train_tasks: Vec<usize>,
    train_x: Vec<Vec<f64>>,
    shared_explicit: Option<Vec<Vec<f64>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Model(format!(
            "{what}: row {} has {} entries, expected {cols}",
            r + 1,
            rows[r].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

/// Samples given one per row become one per column.
fn samples_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    Ok(matrix_from_rows(rows, dim, what)?.transpose())
}

impl TlssvmFile {
    fn into_model(self) -> Result<TrainedModel> {
        let grid =
            TaskGrid::new(self.mode_sizes.clone()).map_err(|e| Error::Model(e.to_string()))?;
        if self.mode_factors.len() != grid.num_modes() {
            return Err(Error::Model(format!(
                "{} mode factors for {} modes",
                self.mode_factors.len(),
                grid.num_modes()
            )));
        }
        let mut factors = Vec::with_capacity(grid.num_modes());
        for (n, rows) in self.mode_factors.iter().enumerate() {
            if rows.len() != grid.mode_sizes()[n] {
                return Err(Error::Model(format!(
                    "mode {} factor has {} rows, grid size is {}",
                    n + 1,
                    rows.len(),
                    grid.mode_sizes()[n]
                )));
            }
            factors.push(matrix_from_rows(
                rows,
                self.rank,
                &format!("mode {} factor", n + 1),
            )?);
        }
        let factors = ModeFactors::new(factors).map_err(|e| Error::Model(e.to_string()))?;

        let snapshot = matrix_from_rows(&self.u_snapshot, self.rank, "u_snapshot")?;
        let x = samples_from_rows(&self.train_x, "train_x")?;
        let tasks = self
            .train_tasks
            .iter()
            .map(|&t| grid.checked_task(t))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Model(e.to_string()))?;
        let inputs = TrainingInputs::new(x, tasks).map_err(|e| Error::Model(e.to_string()))?;
        let dim = inputs.x().nrows();
        let mut shared =
            SharedFactor::dual_only(DVector::from_vec(self.alpha), snapshot, Arc::new(inputs))
                .map_err(|e| Error::Model(e.to_string()))?;
        if let Some(rows) = &self.shared_explicit {
            let l = matrix_from_rows(rows, self.rank, "shared_explicit")?;
            if l.nrows() != dim {
                return Err(Error::Model(format!(
                    "shared_explicit has {} rows, inputs have dimension {dim}",
                    l.nrows()
                )));
            }
            shared = shared
                .with_explicit(l)
                .map_err(|e| Error::Model(e.to_string()))?;
        }
        TrainedModel::new(factors, shared, DVector::from_vec(self.biases), self.kernel)
            .map_err(|e| Error::Model(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndependentFile {
    format_version: u32,
    method: String,
    mode_sizes: Vec<usize>,
    kernel: KernelSpec,
    #[serde(rename = "C")]
    c: f64,
    tasks: Vec<IndependentTaskFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndependentTaskFile {
    bias: f64,
    alpha: Vec<f64>,
    x: Vec<Vec<f64>>,
}

fn independent_to_json(model: &IndependentLssvm) -> Result<String> {
    let file = IndependentFile {
        format_version: FORMAT_VERSION,
        method: METHOD_INDEPENDENT.into(),
        mode_sizes: model.grid().mode_sizes().to_vec(),
        kernel: model.kernel(),
        c: model.c(),
        tasks: model
            .tasks()
            .iter()
            .map(|t| IndependentTaskFile {
                bias: t.bias(),
                alpha: t.alpha().iter().copied().collect(),
                x: t.inputs()
                    .column_iter()
                    .map(|c| c.iter().copied().collect())
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

impl IndependentFile {
    fn into_model(self) -> Result<IndependentLssvm> {
        let grid = TaskGrid::new(self.mode_sizes).map_err(|e| Error::Model(e.to_string()))?;
        self.kernel
            .validate()
            .map_err(|e| Error::Model(e.to_string()))?;
        let tasks = self
            .tasks
            .into_iter()
            .enumerate()
            .map(|(t, f)| {
                let x = samples_from_rows(&f.x, &format!("task {} inputs", t + 1))?;
                TaskLssvm::from_parts(DVector::from_vec(f.alpha), f.bias, x, self.kernel)
                    .map_err(|e| Error::Model(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        IndependentLssvm::from_parts(grid, self.c, self.kernel, tasks)
            .map_err(|e| Error::Model(e.to_string()))
    }
}
