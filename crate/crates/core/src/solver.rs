//! Alternating minimization of the tensorized LSSVM objective
//!
//! ```text
//! J = C/2 Σ_t Σ_i (e_i^t)^2 + ½ tr(L L^T) + ½ Σ_n tr(U^n U^nT)
//! s.t. (L u_t)^T φ(x_i^t) + b^t = y_i^t − e_i^t
//! ```
//!
//! Each outer iteration solves one L-step (all of `L` and every bias, with
//! the mode factors fixed) followed by one U-row step per row of every mode
//! factor, modes in order `1…N` and rows in order `1…T_n`. Every
//! subproblem is an equality-constrained convex quadratic whose dual is a
//! bordered linear system (see [`crate::linalg`]).
//!
//! `L` is kept in dual form: `L = Σ_j α_j φ(x_j) u_{t(j)}^T` with the task
//! vectors frozen at the L-step, so kernels without a finite feature map
//! never need an explicit `L`.
//!
//! Rows of one mode touch disjoint task sets and share the same z-vectors,
//! so they are solved in parallel and then applied in row order; the trace
//! records the objective after each application.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::MtlDataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{group_sums, solve_saddle};
use crate::par;
use crate::tensor::{ModeFactors, SharedFactor, TaskGrid, TrainingInputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// CP rank `K`.
    #[serde(rename = "K")]
    pub rank: usize,
    /// Regularization weight `C` on the squared errors.
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
    pub max_iters: usize,
    /// Threshold on `Σ_n |U^n_new − U^n_old|_F^2 / |U^n_old|_F^2`.
    pub tol: f64,
    /// Added to the diagonal of every `Q + I/C` block.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            rank: 3,
            c: 10.0,
            kernel: KernelSpec::Linear,
            max_iters: 100,
            tol: 1e-3,
            jitter: 0.0,
            seed: 42,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "C must be positive and finite, got {}",
                self.c
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        self.kernel.validate()
    }
}

/// Which subproblem produced a trace entry. Modes and rows are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    LStep,
    URow { mode: usize, row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub step: Step,
    pub objective: f64,
    pub train_rmse: f64,
    /// Residual norm of the subproblem's linear system.
    pub residual: f64,
    /// Norm of the subproblem's right-hand side.
    pub rhs_norm: f64,
    /// `max_t |Σ_i α_i^t|` (L-steps only).
    pub dual_sum_max: Option<f64>,
    /// Relative factor change, on the last step of each iteration.
    pub factor_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitState {
    pub factors: ModeFactors,
    pub shared: SharedFactor,
    pub biases: DVector<f64>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
    pub config: FitConfig,
}

impl FitState {
    /// Dual coefficients of the last L-step.
    pub fn alpha(&self) -> &DVector<f64> {
        self.shared.alpha()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |e| e.objective)
    }
}

/// Standard normal entries, then every column of every factor scaled to
/// unit Euclidean norm.
pub fn init_factors(grid: &TaskGrid, rank: usize, seed: u64) -> Result<ModeFactors> {
    if rank == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = grid
        .mode_sizes()
        .iter()
        .map(|&size| {
            let mut f = DMatrix::from_fn(size, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
            for mut col in f.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col /= norm;
                }
            }
            f
        })
        .collect();
    ModeFactors::new(factors)
}

fn check_factors(data: &MtlDataset, factors: &ModeFactors) -> Result<()> {
    if factors.grid() != *data.grid() {
        return Err(Error::Shape(format!(
            "factors are shaped for grid {:?}, data uses {:?}",
            factors.grid().mode_sizes(),
            data.grid().mode_sizes()
        )));
    }
    Ok(())
}

/// `Q(j, j') = <u_t, u_q> k(x_j, x_j')` over all training samples.
pub fn assemble_q(
    data: &MtlDataset,
    factors: &ModeFactors,
    kernel: &KernelSpec,
) -> Result<DMatrix<f64>> {
    check_factors(data, factors)?;
    let gram = kernel.gram(data.x(), data.x())?;
    Ok(q_from_gram(data, &factors.task_matrix(data.grid()), &gram))
}

fn q_from_gram(data: &MtlDataset, task_u: &DMatrix<f64>, gram: &DMatrix<f64>) -> DMatrix<f64> {
    let coherence = task_u * task_u.transpose();
    let tasks = data.sample_tasks();
    let m = tasks.len();
    let columns = par::map_range(m, |j2| {
        let q = tasks[j2];
        (0..m)
            .map(|j| coherence[(tasks[j], q)] * gram[(j, j2)])
            .collect::<Vec<_>>()
    });
    DMatrix::from_iterator(m, m, columns.into_iter().flatten())
}

#[derive(Debug, Clone)]
pub struct LStepSolution {
    /// Dual coefficients, one per training sample.
    pub alpha: DVector<f64>,
    /// One bias per task.
    pub biases: DVector<f64>,
    pub residual: f64,
    pub rhs_norm: f64,
}

impl LStepSolution {
    /// `A^T α`: per-task sums of the dual coefficients.
    pub fn dual_sums(&self, data: &MtlDataset) -> DVector<f64> {
        group_sums(&data.task_sizes(), &self.alpha)
    }

    /// Shared factor implied by these duals and the factors they were
    /// solved with.
    pub fn shared_factor(
        &self,
        data: &MtlDataset,
        factors: &ModeFactors,
        kernel: &KernelSpec,
    ) -> Result<SharedFactor> {
        let inputs = TrainingInputs::new(data.x().clone(), data.sample_tasks())?;
        SharedFactor::from_duals(
            self.alpha.clone(),
            factors.task_matrix(data.grid()),
            Arc::new(inputs),
            kernel,
        )
    }
}

fn add_to_diagonal(h: &mut DMatrix<f64>, v: f64) {
    for i in 0..h.nrows() {
        h[(i, i)] += v;
    }
}

/// Solves `[[0, A^T], [A, Q + I/C]] [b; α] = [0; y]` for the current
/// mode factors.
pub fn solve_l_step(
    data: &MtlDataset,
    factors: &ModeFactors,
    kernel: &KernelSpec,
    c: f64,
    jitter: f64,
) -> Result<LStepSolution> {
    check_factors(data, factors)?;
    data.require_nonempty_tasks()?;
    let gram = kernel.gram(data.x(), data.x())?;
    l_step_with_gram(data, &factors.task_matrix(data.grid()), &gram, c, jitter)
}

fn l_step_with_gram(
    data: &MtlDataset,
    task_u: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    c: f64,
    jitter: f64,
) -> Result<LStepSolution> {
    let mut h = q_from_gram(data, task_u, gram);
    add_to_diagonal(&mut h, 1.0 / c + jitter);
    let sol = solve_saddle(&data.task_sizes(), &h, data.y(), "L-step")?;
    Ok(LStepSolution {
        alpha: sol.duals,
        biases: sol.biases,
        residual: sol.residual,
        rhs_norm: sol.rhs_norm,
    })
}

/// `z_j = (L^T φ(x_j)) ⊙ Π_{l≠n} U^l[t_l(j), :]` for every training
/// sample, as rows of an `m × K` matrix, with `L^T φ(x_j)` evaluated
/// through the dual form. `mode` is 1-based.
pub fn compute_z_vectors(
    data: &MtlDataset,
    shared: &SharedFactor,
    factors: &ModeFactors,
    kernel: &KernelSpec,
    mode: usize,
) -> Result<DMatrix<f64>> {
    check_factors(data, factors)?;
    let mode0 = data.grid().checked_mode(mode)?;
    let proj = shared.project_dual(kernel, data.x())?;
    Ok(z_from_projection(data, &proj, factors, mode0))
}

/// Same as [`compute_z_vectors`] through the explicit shared factor.
pub fn compute_z_vectors_explicit(
    data: &MtlDataset,
    shared: &SharedFactor,
    factors: &ModeFactors,
    kernel: &KernelSpec,
    mode: usize,
) -> Result<DMatrix<f64>> {
    check_factors(data, factors)?;
    let mode0 = data.grid().checked_mode(mode)?;
    let proj = shared.project_explicit(kernel, data.x())?;
    Ok(z_from_projection(data, &proj, factors, mode0))
}

fn z_from_projection(
    data: &MtlDataset,
    proj: &DMatrix<f64>,
    factors: &ModeFactors,
    mode0: usize,
) -> DMatrix<f64> {
    let grid = data.grid();
    let mut z = proj.clone();
    for t in 0..grid.num_tasks() {
        let rest = factors.excluding0(&grid.index0(t), mode0);
        for j in data.task_range0(t) {
            for k in 0..rest.len() {
                z[(j, k)] *= rest[k];
            }
        }
    }
    z
}

#[derive(Debug, Clone)]
pub struct URowSolution {
    /// New value of row `u^n_{t_n,:}`.
    pub row: DVector<f64>,
    /// Linear ids (1-based) of the tasks in the coslice, ascending.
    pub tasks: Vec<usize>,
    /// New biases for `tasks`, in the same order.
    pub biases: DVector<f64>,
    /// Duals over the samples of `tasks`, task by task.
    pub lambda: DVector<f64>,
    pub residual: f64,
    pub rhs_norm: f64,
}

/// Solves the row subproblem for row `row` of mode `mode` (both 1-based):
/// `[[0, A^T], [A, Z Z^T + I/C]] [b; λ] = [0; y]` over the coslice tasks,
/// then `u = Z^T λ`.
pub fn solve_u_row_step(
    data: &MtlDataset,
    z: &DMatrix<f64>,
    mode: usize,
    row: usize,
    c: f64,
    jitter: f64,
) -> Result<URowSolution> {
    let (mode0, row0) = data.grid().checked_mode_row(mode, row)?;
    if z.nrows() != data.len() {
        return Err(Error::Shape(format!(
            "{} z vectors for {} samples",
            z.nrows(),
            data.len()
        )));
    }
    data.require_nonempty_tasks()?;
    u_row0(data, z, mode0, row0, c, jitter)
}

fn u_row0(
    data: &MtlDataset,
    z: &DMatrix<f64>,
    mode0: usize,
    row0: usize,
    c: f64,
    jitter: f64,
) -> Result<URowSolution> {
    let tasks = data.grid().coslice0(mode0, row0);
    let samples: Vec<usize> = tasks.iter().flat_map(|&t| data.task_range0(t)).collect();
    let groups: Vec<usize> = tasks.iter().map(|&t| data.task_range0(t).len()).collect();

    let zs = z.select_rows(&samples);
    if zs.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate {
            mode: mode0 + 1,
            row: row0 + 1,
        });
    }
    let ys = DVector::from_iterator(samples.len(), samples.iter().map(|&j| data.y()[j]));
    let mut h = &zs * zs.transpose();
    add_to_diagonal(&mut h, 1.0 / c + jitter);
    let context = format!("U-step (mode {}, row {})", mode0 + 1, row0 + 1);
    let sol = solve_saddle(&groups, &h, &ys, &context)?;
    Ok(URowSolution {
        row: zs.tr_mul(&sol.duals),
        tasks: tasks.into_iter().map(|t| t + 1).collect(),
        biases: sol.biases,
        lambda: sol.duals,
        residual: sol.residual,
        rhs_norm: sol.rhs_norm,
    })
}

/// Objective `J` with `L` taken from the dual form of `shared`.
pub fn evaluate_objective(
    data: &MtlDataset,
    shared: &SharedFactor,
    factors: &ModeFactors,
    biases: &DVector<f64>,
    c: f64,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_factors(data, factors)?;
    check_biases(data, biases)?;
    let proj = shared.project_dual(kernel, data.x())?;
    let trace = shared.trace_dual(kernel)?;
    Ok(objective_parts(data, &proj, factors, biases, c, trace).0)
}

/// Objective `J` with `L` taken from the explicit matrix of `shared`.
pub fn evaluate_objective_explicit(
    data: &MtlDataset,
    shared: &SharedFactor,
    factors: &ModeFactors,
    biases: &DVector<f64>,
    c: f64,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_factors(data, factors)?;
    check_biases(data, biases)?;
    let proj = shared.project_explicit(kernel, data.x())?;
    let l = shared
        .explicit()
        .ok_or_else(|| Error::Unsupported("no explicit shared factor".into()))?;
    Ok(objective_parts(data, &proj, factors, biases, c, l.norm_squared()).0)
}

fn check_biases(data: &MtlDataset, biases: &DVector<f64>) -> Result<()> {
    if biases.len() != data.num_tasks() {
        return Err(Error::Shape(format!(
            "{} biases for {} tasks",
            biases.len(),
            data.num_tasks()
        )));
    }
    Ok(())
}

/// Returns `(J, train RMSE)` given `proj[j] = L^T φ(x_j)` and `tr(L L^T)`.
fn objective_parts(
    data: &MtlDataset,
    proj: &DMatrix<f64>,
    factors: &ModeFactors,
    biases: &DVector<f64>,
    c: f64,
    trace_ll: f64,
) -> (f64, f64) {
    let grid = data.grid();
    let mut sse = 0.0;
    for t in 0..grid.num_tasks() {
        let u = factors.task_vector0(&grid.index0(t));
        for j in data.task_range0(t) {
            let fit: f64 = proj.row(j).iter().zip(u.iter()).map(|(p, q)| p * q).sum();
            let e = data.y()[j] - fit - biases[t];
            sse += e * e;
        }
    }
    let j = 0.5 * c * sse + 0.5 * trace_ll + 0.5 * factors.frobenius_sq();
    let rmse = if data.is_empty() {
        0.0
    } else {
        (sse / data.len() as f64).sqrt()
    };
    (j, rmse)
}

/// Runs the alternating optimization.
///
/// Stops after the first iteration whose relative factor change falls
/// below `config.tol`, or after `config.max_iters` iterations; the latter
/// is reported through `converged = false`, not as an error.
pub fn fit(data: &MtlDataset, config: &FitConfig) -> Result<FitState> {
    config.validate()?;
    data.require_nonempty_tasks()?;
    let grid = data.grid();
    let kernel = config.kernel;
    let mut factors = init_factors(grid, config.rank, config.seed)?;
    let inputs = Arc::new(TrainingInputs::new(data.x().clone(), data.sample_tasks())?);
    let gram = kernel.gram(data.x(), data.x())?;

    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut shared = None;
    let mut biases = DVector::zeros(grid.num_tasks());

    for iteration in 1..=config.max_iters {
        iterations = iteration;
        let previous = factors.clone();

        let task_u = factors.task_matrix(grid);
        let ls = l_step_with_gram(data, &task_u, &gram, config.c, config.jitter)?;
        let dual_sum_max = ls.dual_sums(data).amax();
        let current = SharedFactor::from_duals(ls.alpha, task_u, inputs.clone(), &kernel)?;
        biases = ls.biases;
        let weights = current.dual_weights();
        // gram is symmetric, so row j of G W is L^T φ(x_j)
        let proj = &gram * &weights;
        let trace_ll = weights.dot(&proj);
        let (objective, train_rmse) =
            objective_parts(data, &proj, &factors, &biases, config.c, trace_ll);
        trace.push(TraceEntry {
            iteration,
            step: Step::LStep,
            objective,
            train_rmse,
            residual: ls.residual,
            rhs_norm: ls.rhs_norm,
            dual_sum_max: Some(dual_sum_max),
            factor_change: None,
        });
        shared = Some(current);

        for mode0 in 0..grid.num_modes() {
            let z = z_from_projection(data, &proj, &factors, mode0);
            let rows = par::map_range(grid.mode_sizes()[mode0], |row0| {
                u_row0(data, &z, mode0, row0, config.c, config.jitter)
            });
            for (row0, outcome) in rows.into_iter().enumerate() {
                let (residual, rhs_norm) = match outcome {
                    Ok(sol) => {
                        factors.set_row0(mode0, row0, sol.row.as_slice());
                        for (t, b) in sol.tasks.iter().zip(sol.biases.iter()) {
                            biases[t - 1] = *b;
                        }
                        (sol.residual, sol.rhs_norm)
                    }
                    Err(Error::Degenerate { mode, row }) => {
                        // u = 0 and per-task means solve this subproblem exactly
                        factors.set_row0(mode0, row0, &vec![0.0; config.rank]);
                        for t in grid.coslice0(mode0, row0) {
                            let r = data.task_range0(t);
                            biases[t] = data.y().rows(r.start, r.len()).mean();
                        }
                        warnings.push(format!(
                            "iteration {iteration}: all z vectors vanish for mode {mode}, row {row}; row set to zero"
                        ));
                        (0.0, 0.0)
                    }
                    Err(e) => return Err(e),
                };
                let (objective, train_rmse) =
                    objective_parts(data, &proj, &factors, &biases, config.c, trace_ll);
                trace.push(TraceEntry {
                    iteration,
                    step: Step::URow {
                        mode: mode0 + 1,
                        row: row0 + 1,
                    },
                    objective,
                    train_rmse,
                    residual,
                    rhs_norm,
                    dual_sum_max: None,
                    factor_change: None,
                });
            }
        }

        let change = factor_change(&previous, &factors);
        if let Some(last) = trace.last_mut() {
            last.factor_change = Some(change);
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }

    for (n, f) in factors.factors().iter().enumerate() {
        for k in 0..f.ncols() {
            if f.column(k).iter().all(|&v| v == 0.0) {
                warnings.push(format!(
                    "component {} of mode {} collapsed to zero",
                    k + 1,
                    n + 1
                ));
            }
        }
    }

    Ok(FitState {
        factors,
        shared: shared.expect("at least one iteration runs"),
        biases,
        trace,
        converged,
        iterations,
        warnings,
        config: config.clone(),
    })
}

/// `Σ_n |new^n − old^n|_F^2 / |old^n|_F^2`.
pub fn factor_change(old: &ModeFactors, new: &ModeFactors) -> f64 {
    old.factors()
        .iter()
        .zip(new.factors())
        .map(|(a, b)| {
            let diff = (b - a).norm_squared();
            let base = a.norm_squared();
            if base > 0.0 {
                diff / base
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum()
}
