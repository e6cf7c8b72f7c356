//! Multitask datasets: in-memory layout, CSV I/O, synthetic generation and
//! cross-validation splits.
//!
//! Samples are ordered by ascending linear task id, then by file or
//! generation order within a task. Global sample `j = Σ_{r<t} m_r + i`
//! is column `j` of [`MtlDataset::x`].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ModeFactors, TaskGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct MtlDataset {
    grid: TaskGrid,
    x: DMatrix<f64>,
    y: DVector<f64>,
    offsets: Vec<usize>,
}

impl MtlDataset {
    /// Builds a dataset from per-task blocks given in linear task order.
    /// Each block holds `(x, y)` with one sample per column of `x`.
    pub fn from_blocks(
        grid: TaskGrid,
        dim: usize,
        blocks: Vec<(DMatrix<f64>, DVector<f64>)>,
    ) -> Result<Self> {
        if blocks.len() != grid.num_tasks() {
            return Err(Error::Shape(format!(
                "{} task blocks for a grid of {} tasks",
                blocks.len(),
                grid.num_tasks()
            )));
        }
        let m: usize = blocks.iter().map(|(_, y)| y.len()).sum();
        let mut x = DMatrix::zeros(dim, m);
        let mut y = DVector::zeros(m);
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut at = 0;
        offsets.push(0);
        for (t, (bx, by)) in blocks.iter().enumerate() {
            if bx.ncols() != by.len() || (bx.nrows() != dim && !by.is_empty()) {
                return Err(Error::Shape(format!(
                    "task {} block is {}x{} with {} responses, expected dimension {dim}",
                    t + 1,
                    bx.nrows(),
                    bx.ncols(),
                    by.len()
                )));
            }
            if by.is_empty() {
                offsets.push(at);
                continue;
            }
            x.columns_mut(at, by.len()).copy_from(bx);
            y.rows_mut(at, by.len()).copy_from(by);
            at += by.len();
            offsets.push(at);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(MtlDataset {
            grid,
            x,
            y,
            offsets,
        })
    }

    /// Builds a dataset from `(multi-index, features, response)` samples in
    /// any order; samples are grouped by task keeping their relative order.
    pub fn from_samples(
        grid: TaskGrid,
        dim: usize,
        samples: impl IntoIterator<Item = (Vec<usize>, Vec<f64>, f64)>,
    ) -> Result<Self> {
        let mut per_task: Vec<(Vec<f64>, Vec<f64>)> =
            vec![(Vec::new(), Vec::new()); grid.num_tasks()];
        for (idx, x, y) in samples {
            let t = grid.linearize(&idx)? - 1;
            if x.len() != dim {
                return Err(Error::Shape(format!(
                    "sample has {} features, expected {dim}",
                    x.len()
                )));
            }
            per_task[t].0.extend(x);
            per_task[t].1.push(y);
        }
        let blocks = per_task
            .into_iter()
            .map(|(xs, ys)| {
                let n = ys.len();
                (DMatrix::from_vec(dim, n, xs), DVector::from_vec(ys))
            })
            .collect();
        MtlDataset::from_blocks(grid, dim, blocks)
    }

    pub fn grid(&self) -> &TaskGrid {
        &self.grid
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Total sample count `m`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.grid.num_tasks()
    }

    /// Inputs, one sample per column (`d × m`).
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Sample counts `m_t` in linear task order.
    pub fn task_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// 0-based linear task of every sample.
    pub fn sample_tasks(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for (t, w) in self.offsets.windows(2).enumerate() {
            out.extend(std::iter::repeat_n(t, w[1] - w[0]));
        }
        out
    }

    pub(crate) fn task_range0(&self, t0: usize) -> std::ops::Range<usize> {
        self.offsets[t0]..self.offsets[t0 + 1]
    }

    pub(crate) fn sample(&self, j: usize) -> &[f64] {
        let d = self.x.nrows();
        &self.x.as_slice()[j * d..(j + 1) * d]
    }

    /// Fails with a message naming the first task without samples.
    pub fn require_nonempty_tasks(&self) -> Result<()> {
        match self.task_sizes().iter().position(|&n| n == 0) {
            None => Ok(()),
            Some(t) => Err(Error::Data(format!(
                "task {:?} has no samples",
                self.grid.delinearize(t + 1)?
            ))),
        }
    }

    /// Sub-dataset keeping, for each task, the listed within-task positions.
    pub fn select(&self, keep: &[Vec<usize>]) -> Result<MtlDataset> {
        if keep.len() != self.num_tasks() {
            return Err(Error::Shape("selection must list every task".into()));
        }
        let blocks = keep
            .iter()
            .enumerate()
            .map(|(t, positions)| {
                let range = self.task_range0(t);
                let cols: Vec<usize> = positions.iter().map(|&p| range.start + p).collect();
                if cols.iter().any(|&c| c >= range.end) {
                    return Err(Error::Shape(format!(
                        "selection out of range for task {}",
                        t + 1
                    )));
                }
                Ok((
                    self.x.select_columns(&cols),
                    DVector::from_iterator(cols.len(), cols.iter().map(|&c| self.y[c])),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        MtlDataset::from_blocks(self.grid.clone(), self.dim(), blocks)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header = csv_header(self.grid.num_modes(), self.dim(), true);
        w.write_record(&header).map_err(csv_io)?;
        for (j, t) in self.sample_tasks().into_iter().enumerate() {
            let idx = self.grid.delinearize(t + 1)?;
            let record = idx
                .iter()
                .map(|i| i.to_string())
                .chain(self.sample(j).iter().map(|v| v.to_string()))
                .chain(std::iter::once(self.y[j].to_string()));
            w.write_record(record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Reads a dataset in the `t_1,…,t_N,x_1,…,x_d,y` schema.
pub fn load_csv(path: impl AsRef<Path>, grid: &TaskGrid) -> Result<MtlDataset> {
    let path = path.as_ref();
    read_csv(File::open(path)?, grid, &path.display().to_string())
}

pub fn read_csv<R: Read>(reader: R, grid: &TaskGrid, source: &str) -> Result<MtlDataset> {
    let table = read_table(reader, source, true)?;
    if table.modes != grid.num_modes() {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            msg: format!(
                "header has {} task-index columns, grid has {} modes",
                table.modes,
                grid.num_modes()
            ),
        });
    }
    let dim = table.dim;
    let mut samples = Vec::with_capacity(table.rows.len());
    for row in table.rows {
        grid.checked_index(&row.index).map_err(|e| Error::Parse {
            path: source.into(),
            line: row.line,
            msg: e.to_string(),
        })?;
        samples.push((row.index, row.x, row.y.expect("response required")));
    }
    MtlDataset::from_samples(grid.clone(), dim, samples)
}

/// Reads a dataset and sizes the grid from the largest index seen per mode.
pub fn load_csv_infer_grid(path: impl AsRef<Path>) -> Result<MtlDataset> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let table = read_table(File::open(path)?, &source, true)?;
    let mut sizes = vec![0usize; table.modes];
    for row in &table.rows {
        for (s, &i) in sizes.iter_mut().zip(&row.index) {
            *s = (*s).max(i);
        }
    }
    let grid = TaskGrid::new(sizes)?;
    let dim = table.dim;
    MtlDataset::from_samples(
        grid,
        dim,
        table
            .rows
            .into_iter()
            .map(|r| (r.index, r.x, r.y.expect("response required"))),
    )
}

/// One parsed CSV row.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub line: u64,
    /// 1-based multi-index.
    pub index: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub modes: usize,
    pub dim: usize,
    pub has_response: bool,
    pub rows: Vec<TableRow>,
}

/// Parses a task-indexed CSV. With `require_response` the trailing `y`
/// column is mandatory; otherwise it is optional (prediction input).
pub fn read_table<R: Read>(reader: R, source: &str, require_response: bool) -> Result<Table> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let modes = names.iter().take_while(|n| n.starts_with("t_")).count();
    let has_response = names.last() == Some(&"y");
    let dim = names.len() - modes - usize::from(has_response);
    if modes == 0 {
        return Err(parse_err(1, "header has no t_1 column".into()));
    }
    if require_response && !has_response {
        return Err(parse_err(
            1,
            "header is missing the trailing y column".into(),
        ));
    }
    if dim == 0 {
        return Err(parse_err(1, "header has no feature columns".into()));
    }
    let expected = csv_header(modes, dim, has_response);
    if let Some((pos, (got, want))) = names
        .iter()
        .zip(&expected)
        .enumerate()
        .find(|(_, (g, w))| *g != w)
    {
        return Err(parse_err(
            1,
            format!("column {} is named {got:?}, expected {want:?}", pos + 1),
        ));
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", names.len(), record.len()),
            ));
        }
        let mut index = Vec::with_capacity(modes);
        for (n, cell) in record.iter().take(modes).enumerate() {
            let v: usize = cell.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("t_{} value {cell:?} is not a positive integer", n + 1),
                )
            })?;
            index.push(v);
        }
        let mut values = Vec::with_capacity(dim + 1);
        for (c, cell) in record.iter().enumerate().skip(modes) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("column {} value {cell:?} is not numeric", names[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {} is not finite", names[c]),
                ));
            }
            values.push(v);
        }
        let y = if has_response { values.pop() } else { None };
        rows.push(TableRow {
            line,
            index,
            x: values,
            y,
        });
    }
    Ok(Table {
        modes,
        dim,
        has_response,
        rows,
    })
}

pub fn csv_header(modes: usize, dim: usize, response: bool) -> Vec<String> {
    (1..=modes)
        .map(|n| format!("t_{n}"))
        .chain((1..=dim).map(|i| format!("x_{i}")))
        .chain(response.then(|| "y".to_string()))
        .collect()
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Parameters of the CP-structured synthetic regression problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d: usize,
    pub mode_sizes: Vec<usize>,
    #[serde(rename = "K_true")]
    pub k_true: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    /// Per-task signal-to-noise energy ratio; `null` in JSON (infinity in
    /// code) generates noiseless responses.
    #[serde(with = "snr_serde")]
    pub snr: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d: 100,
            mode_sizes: vec![3, 4, 5],
            k_true: 3,
            train_per_task: 60,
            test_per_task: 20,
            snr: 10.0,
            seed: 0,
        }
    }
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k_true == 0 || self.train_per_task == 0 {
            return Err(Error::Config(
                "d, K_true and train_per_task must be positive".into(),
            ));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        TaskGrid::new(self.mode_sizes.clone()).map(|_| ())
    }
}

/// Ground-truth parameters behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// `d × K_true`.
    pub shared: DMatrix<f64>,
    pub factors: ModeFactors,
    pub biases: DVector<f64>,
}

impl SyntheticTruth {
    /// Task weight vector `w_t = L u_t` for a 0-based linear task.
    pub fn task_weights0(&self, grid: &TaskGrid, t0: usize) -> DVector<f64> {
        &self.shared * self.factors.task_vector0(&grid.index0(t0))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "L": rows_of(&self.shared),
            "mode_factors": self.factors.factors().iter().map(rows_of).collect::<Vec<_>>(),
            "biases": self.biases.as_slice(),
        })
    }
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub struct SyntheticData {
    pub train: MtlDataset,
    pub test: MtlDataset,
    pub truth: SyntheticTruth,
}

/// Draws `L`, `U^n`, inputs, biases and noise i.i.d. standard normal and
/// forms `y^t = X^t w_t + b^t 1 + σ_t e^t`, with `σ_t` chosen so that each
/// task's realized signal-to-noise energy ratio equals `spec.snr` exactly.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let grid = TaskGrid::new(spec.mode_sizes.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, k) = (spec.d, spec.k_true);

    let shared = normal_matrix(&mut rng, d, k);
    let factors = ModeFactors::new(
        spec.mode_sizes
            .iter()
            .map(|&s| normal_matrix(&mut rng, s, k))
            .collect(),
    )?;

    let mut biases = DVector::zeros(grid.num_tasks());
    let mut train = Vec::with_capacity(grid.num_tasks());
    let mut test = Vec::with_capacity(grid.num_tasks());
    for t in 0..grid.num_tasks() {
        let w = &shared * factors.task_vector0(&grid.index0(t));
        let b: f64 = rng.sample(StandardNormal);
        biases[t] = b;
        let x_train = normal_matrix(&mut rng, d, spec.train_per_task);
        let x_test = normal_matrix(&mut rng, d, spec.test_per_task);
        let e_train = normal_vector(&mut rng, spec.train_per_task);
        let e_test = normal_vector(&mut rng, spec.test_per_task);
        train.push(noisy_block(x_train, &w, b, e_train, spec.snr));
        test.push(noisy_block(x_test, &w, b, e_test, spec.snr));
    }

    Ok(SyntheticData {
        train: MtlDataset::from_blocks(grid.clone(), d, train)?,
        test: MtlDataset::from_blocks(grid, d, test)?,
        truth: SyntheticTruth {
            shared,
            factors,
            biases,
        },
    })
}

fn noisy_block(
    x: DMatrix<f64>,
    w: &DVector<f64>,
    b: f64,
    noise: DVector<f64>,
    snr: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let clean = x.tr_mul(w).add_scalar(b);
    let scale = noise_scale(&clean, &noise, snr);
    let y = if scale == 0.0 {
        clean
    } else {
        clean + noise * scale
    };
    (x, y)
}

/// `σ` with `|clean|^2 / |σ e|^2 = snr`; zero for infinite snr or a zero
/// noise draw.
pub fn noise_scale(clean: &DVector<f64>, noise: &DVector<f64>, snr: f64) -> f64 {
    let noise_energy = noise.norm_squared();
    if snr.is_infinite() || noise_energy == 0.0 {
        return 0.0;
    }
    (clean.norm_squared() / (snr * noise_energy)).sqrt()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Validation positions per fold and task: `folds[f][t]` lists the
/// within-task positions held out in fold `f`.
pub fn kfold_indices(data: &MtlDataset, folds: usize, seed: u64) -> Result<Vec<Vec<Vec<usize>>>> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "k-fold splitting needs at least 2 folds, got {folds}"
        )));
    }
    let sizes = data.task_sizes();
    if let Some(t) = sizes.iter().position(|&n| n < folds) {
        return Err(Error::Data(format!(
            "task {:?} has {} samples, fewer than {folds} folds",
            data.grid().delinearize(t + 1)?,
            sizes[t]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![Vec::new(); sizes.len()]; folds];
    for (t, &n) in sizes.iter().enumerate() {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (pos, p) in perm.into_iter().enumerate() {
            out[pos % folds][t].push(p);
        }
        for fold in out.iter_mut() {
            fold[t].sort_unstable();
        }
    }
    Ok(out)
}

/// Stratified k-fold split into `(train, validation)` pairs.
pub fn kfold_split(
    data: &MtlDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<(MtlDataset, MtlDataset)>> {
    let held_out = kfold_indices(data, folds, seed)?;
    let sizes = data.task_sizes();
    held_out
        .iter()
        .map(|fold| {
            let train: Vec<Vec<usize>> = fold
                .iter()
                .zip(&sizes)
                .map(|(val, &n)| (0..n).filter(|p| val.binary_search(p).is_err()).collect())
                .collect();
            Ok((data.select(&train)?, data.select(fold)?))
        })
        .collect()
}

/// Per-task random split holding out `round(test_fraction · m_t)` samples
/// (at least one, whenever a task has two or more).
pub fn train_test_split(
    data: &MtlDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(MtlDataset, MtlDataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(data.num_tasks());
    let mut test = Vec::with_capacity(data.num_tasks());
    for n in data.task_sizes() {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut n_test = (test_fraction * n as f64).round() as usize;
        if n >= 2 && test_fraction > 0.0 {
            n_test = n_test.clamp(1, n - 1);
        }
        let mut te = perm[..n_test].to_vec();
        let mut tr = perm[n_test..].to_vec();
        te.sort_unstable();
        tr.sort_unstable();
        test.push(te);
        train.push(tr);
    }
    Ok((data.select(&train)?, data.select(&test)?))
}
