//! Experiment configuration shared by the command-line tool, plus the
//! multi-SNR synthetic benchmark.

use serde::{Deserialize, Serialize};

use crate::cv::{grid_search, CvReport, HyperGrid, HyperParams};
use crate::dataset::{generate_synthetic, MtlDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::metrics::MetricSet;
use crate::model::{AnyModel, Method};
use crate::par;
use crate::solver::FitConfig;

/// Contents of a `--config` file. Every field is optional.
///
/// ```json
/// {
///   "fit": {"K": 3, "C": 10, "kernel": {"family": "rbf", "gamma": 0.1}},
///   "method": "tlssvm",
///   "tune": true,
///   "grid": {"family": "rbf", "K": [1, 2, 3], "C": [0.1, 1, 10], "gamma": [0.01, 0.1]},
///   "folds": 5,
///   "synthetic": {"d": 30, "mode_sizes": [3, 4], "K_true": 3, "snr": 10},
///   "snr_grid": [5, 10],
///   "repetitions": 10
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub fit: FitConfig,
    pub method: Method,
    /// Choose `(K, C, gamma)` by grid search before the final fit.
    pub tune: bool,
    pub grid: HyperGrid,
    pub folds: usize,
    /// Task grid of CSV inputs; inferred from the file when absent.
    pub modes: Option<Vec<usize>>,
    pub synthetic: SyntheticSpec,
    pub snr_grid: Vec<f64>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            fit: FitConfig::default(),
            method: Method::Tlssvm,
            tune: false,
            grid: HyperGrid::default(),
            folds: 5,
            modes: None,
            synthetic: SyntheticSpec::default(),
            snr_grid: vec![1.0, 5.0, 10.0, 20.0],
            repetitions: 10,
            methods: vec![Method::Tlssvm, Method::LssvmIndependent],
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.tune {
            if self.folds < 2 {
                return Err(Error::Config(format!(
                    "cross-validation needs at least 2 folds, got {}",
                    self.folds
                )));
            }
            self.grid.validate(self.method)?;
            for &m in &self.methods {
                self.grid.validate(m)?;
            }
        }
        self.synthetic.validate()?;
        if self.snr_grid.is_empty() {
            return Err(Error::Config("snr_grid must not be empty".into()));
        }
        if let Some(s) = self.snr_grid.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Config(format!(
                "snr values must be positive, got {s}"
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        Ok(())
    }

    /// The hyperparameters used when no tuning happens.
    pub fn fixed_params(&self, method: Method) -> HyperParams {
        HyperParams {
            rank: (method == Method::Tlssvm).then_some(self.fit.rank),
            c: self.fit.c,
            gamma: match self.fit.kernel {
                KernelSpec::Linear => None,
                KernelSpec::Rbf { gamma } => Some(gamma),
            },
        }
    }
}

/// A model trained on the full training set, possibly after grid search.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub model: AnyModel,
    pub params: HyperParams,
    pub cv: Option<CvReport>,
}

/// Fits `method` with the fixed configuration, or with the grid-search
/// winner when `spec.tune` is set. Folds are drawn from `cv_seed`.
pub fn train_tuned(
    data: &MtlDataset,
    method: Method,
    spec: &ExperimentSpec,
    cv_seed: u64,
) -> Result<Tuned> {
    let (params, cv) = if spec.tune {
        let report = grid_search(data, method, &spec.grid, &spec.fit, spec.folds, cv_seed)?;
        (report.best_params, Some(report))
    } else {
        (spec.fixed_params(method), None)
    };
    let model = AnyModel::fit(method, data, &params.apply(&spec.fit))?;
    Ok(Tuned { model, params, cv })
}

/// splitmix64 finalizer over `base + stream`; spreads nearby seeds apart.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub snr: f64,
    pub repetition: usize,
    pub data_seed: u64,
    pub method: Method,
    pub params: HyperParams,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub snr: f64,
    pub method: Method,
    pub repetitions: usize,
    pub rmse: f64,
    pub q2: Option<f64>,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// `None` as soon as one repetition lacks the metric.
fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values
        .collect::<Option<Vec<f64>>>()
        .map(|v| mean(v.into_iter()))
}

/// Repetition `r` draws its data from `derive_seed(seed, r)` at every SNR
/// level, so levels differ only in the noise scale. All methods see the
/// same data.
pub fn run_benchmark(spec: &ExperimentSpec) -> Result<BenchmarkReport> {
    spec.validate()?;
    let pairs: Vec<(f64, usize)> = spec
        .snr_grid
        .iter()
        .flat_map(|&snr| (0..spec.repetitions).map(move |r| (snr, r)))
        .collect();
    let results = par::map_range(pairs.len(), |i| {
        let (snr, repetition) = pairs[i];
        let data_seed = derive_seed(spec.synthetic.seed, repetition as u64);
        let data = generate_synthetic(&SyntheticSpec {
            snr,
            seed: data_seed,
            ..spec.synthetic.clone()
        })?;
        spec.methods
            .iter()
            .map(|&method| {
                let tuned = train_tuned(&data.train, method, spec, derive_seed(data_seed, 1))?;
                let pred = tuned.model.predict_dataset(&data.test)?;
                Ok(RunRecord {
                    snr,
                    repetition,
                    data_seed,
                    method,
                    params: tuned.params,
                    metrics: MetricSet::compute(data.test.y().as_slice(), &pred)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let runs: Vec<RunRecord> = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut summary = Vec::new();
    for &snr in &spec.snr_grid {
        for &method in &spec.methods {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.snr == snr && r.method == method)
                .collect();
            summary.push(SummaryRow {
                snr,
                method,
                repetitions: group.len(),
                rmse: mean(group.iter().map(|r| r.metrics.rmse)),
                q2: mean_opt(group.iter().map(|r| r.metrics.q2)),
                correlation: mean_opt(group.iter().map(|r| r.metrics.correlation)),
            });
        }
    }
    Ok(BenchmarkReport { runs, summary })
}
