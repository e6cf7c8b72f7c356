//! Exhaustive k-fold grid search over `(K, C, gamma)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_split, MtlDataset};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::metrics::rmse;
use crate::model::{AnyModel, Method};
use crate::par;
use crate::solver::FitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Rbf,
}

/// Powers of ten `10^lo, …, 10^hi`.
pub fn log_space(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub family: KernelFamily,
    #[serde(rename = "K")]
    pub ranks: Vec<usize>,
    #[serde(rename = "C")]
    pub cs: Vec<f64>,
    /// Only read for the RBF family.
    pub gamma: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            family: KernelFamily::Linear,
            ranks: vec![1, 2, 3, 5],
            cs: log_space(-2, 3),
            gamma: log_space(-3, 1),
        }
    }
}

/// One point of the grid. `rank` is absent for the baseline, `gamma` for the
/// linear family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    #[serde(rename = "K")]
    pub rank: Option<usize>,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: Option<f64>,
}

impl HyperParams {
    pub fn kernel(&self) -> KernelSpec {
        match self.gamma {
            Some(gamma) => KernelSpec::Rbf { gamma },
            None => KernelSpec::Linear,
        }
    }

    /// `base` with these hyperparameters substituted.
    pub fn apply(&self, base: &FitConfig) -> FitConfig {
        FitConfig {
            rank: self.rank.unwrap_or(base.rank),
            c: self.c,
            kernel: self.kernel(),
            ..base.clone()
        }
    }
}

impl HyperGrid {
    pub fn validate(&self, method: Method) -> Result<()> {
        if method == Method::Tlssvm && self.ranks.is_empty() {
            return Err(Error::Config("grid needs at least one K".into()));
        }
        if self.ranks.contains(&0) {
            return Err(Error::Config("grid K values must be at least 1".into()));
        }
        if self.cs.is_empty() {
            return Err(Error::Config("grid needs at least one C".into()));
        }
        if self.cs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config("grid C values must be positive".into()));
        }
        if self.family == KernelFamily::Rbf {
            if self.gamma.is_empty() {
                return Err(Error::Config("rbf grid needs at least one gamma".into()));
            }
            if self.gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                return Err(Error::Config("grid gamma values must be positive".into()));
            }
        }
        Ok(())
    }

    /// Cells in K-major, then C, then gamma order.
    pub fn cells(&self, method: Method) -> Vec<HyperParams> {
        let ranks: Vec<Option<usize>> = match method {
            Method::Tlssvm => self.ranks.iter().copied().map(Some).collect(),
            Method::LssvmIndependent => vec![None],
        };
        let gammas: Vec<Option<f64>> = match self.family {
            KernelFamily::Linear => vec![None],
            KernelFamily::Rbf => self.gamma.iter().copied().map(Some).collect(),
        };
        let mut out = Vec::new();
        for &rank in &ranks {
            for &c in &self.cs {
                for &gamma in &gammas {
                    out.push(HyperParams { rank, c, gamma });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub index: usize,
    #[serde(flatten)]
    pub params: HyperParams,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub folds: usize,
    pub seed: u64,
    pub cells: Vec<CvCell>,
    pub best: usize,
    pub best_params: HyperParams,
    pub best_mean_rmse: f64,
}

fn evaluate_cell(
    splits: &[(MtlDataset, MtlDataset)],
    method: Method,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    splits
        .iter()
        .map(|(train, val)| {
            let model = AnyModel::fit(method, train, config)?;
            let pred = model.predict_dataset(val)?;
            rmse(val.y().as_slice(), &pred)
        })
        .collect()
}

fn tie_key(p: &HyperParams) -> (usize, f64, f64) {
    (p.rank.unwrap_or(0), p.c, p.gamma.unwrap_or(0.0))
}

/// Runs every cell on the same folds. A failing cell is recorded with its
/// error; the search fails only when no cell succeeds.
pub fn grid_search(
    data: &MtlDataset,
    method: Method,
    grid: &HyperGrid,
    base: &FitConfig,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    grid.validate(method)?;
    let splits = kfold_split(data, folds, seed)?;
    let params = grid.cells(method);
    let results = par::map_range(params.len(), |i| {
        evaluate_cell(&splits, method, &params[i].apply(base))
    });

    let cells: Vec<CvCell> = params
        .iter()
        .zip(results)
        .enumerate()
        .map(|(index, (&params, res))| match res {
            Ok(fold_rmse) => CvCell {
                index,
                params,
                mean_rmse: Some(fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64),
                fold_rmse,
                error: None,
            },
            Err(e) => CvCell {
                index,
                params,
                fold_rmse: Vec::new(),
                mean_rmse: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let best = cells
        .iter()
        .filter_map(|c| c.mean_rmse.map(|m| (m, c)))
        .min_by(|(ma, a), (mb, b)| {
            let (ka, ca, ga) = tie_key(&a.params);
            let (kb, cb, gb) = tie_key(&b.params);
            ma.total_cmp(mb)
                .then(ka.cmp(&kb))
                .then(ca.total_cmp(&cb))
                .then(ga.total_cmp(&gb))
        })
        .map(|(m, c)| (c.index, c.params, m));
    let Some((best, best_params, best_mean_rmse)) = best else {
        let first = cells
            .first()
            .and_then(|c| c.error.clone())
            .unwrap_or_default();
        return Err(Error::Data(format!(
            "every grid cell failed; first error: {first}"
        )));
    };
    Ok(CvReport {
        method,
        folds,
        seed,
        cells,
        best,
        best_params,
        best_mean_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn data() -> MtlDataset {
        generate_synthetic(&SyntheticSpec {
            d: 3,
            mode_sizes: vec![2, 2],
            k_true: 1,
            train_per_task: 10,
            test_per_task: 1,
            snr: 10.0,
            seed: 5,
        })
        .unwrap()
        .train
    }

    fn small_config() -> FitConfig {
        FitConfig {
            max_iters: 5,
            ..FitConfig::default()
        }
    }

    #[test]
    fn cell_order_is_k_major() {
        let grid = HyperGrid {
            family: KernelFamily::Rbf,
            ranks: vec![1, 2],
            cs: vec![0.1, 1.0],
            gamma: vec![0.5, 2.0],
        };
        let cells = grid.cells(Method::Tlssvm);
        assert_eq!(cells.len(), 8);
        assert_eq!(
            cells[0],
            HyperParams {
                rank: Some(1),
                c: 0.1,
                gamma: Some(0.5)
            }
        );
        assert_eq!(
            cells[1],
            HyperParams {
                rank: Some(1),
                c: 0.1,
                gamma: Some(2.0)
            }
        );
        assert_eq!(
            cells[2],
            HyperParams {
                rank: Some(1),
                c: 1.0,
                gamma: Some(0.5)
            }
        );
        assert_eq!(cells[4].rank, Some(2));
        // the baseline has no rank axis
        assert_eq!(grid.cells(Method::LssvmIndependent).len(), 4);
    }

    #[test]
    fn default_grid() {
        let g = HyperGrid::default();
        assert_eq!(g.ranks, vec![1, 2, 3, 5]);
        assert_eq!(g.cs, vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]);
        assert_eq!(g.gamma, vec![0.001, 0.01, 0.1, 1.0, 10.0]);
        assert_eq!(g.cells(Method::Tlssvm).len(), 24);
    }

    #[test]
    fn invalid_grids() {
        let mut g = HyperGrid::default();
        g.cs.clear();
        assert!(g.validate(Method::Tlssvm).is_err());
        let g = HyperGrid {
            ranks: vec![0],
            ..HyperGrid::default()
        };
        assert!(g.validate(Method::Tlssvm).is_err());
        let g = HyperGrid {
            family: KernelFamily::Rbf,
            gamma: vec![-1.0],
            ..HyperGrid::default()
        };
        assert!(g.validate(Method::Tlssvm).is_err());
        assert!(grid_search(
            &data(),
            Method::Tlssvm,
            &HyperGrid::default(),
            &small_config(),
            1,
            0
        )
        .is_err());
    }

    #[test]
    fn single_cell_is_selected() {
        let grid = HyperGrid {
            ranks: vec![2],
            cs: vec![10.0],
            ..HyperGrid::default()
        };
        let r = grid_search(&data(), Method::Tlssvm, &grid, &small_config(), 3, 1).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.best, 0);
        assert_eq!(r.cells[0].fold_rmse.len(), 3);
    }

    #[test]
    fn best_is_minimal_and_deterministic() {
        let grid = HyperGrid {
            ranks: vec![1, 2],
            cs: vec![0.1, 10.0],
            ..HyperGrid::default()
        };
        let a = grid_search(&data(), Method::Tlssvm, &grid, &small_config(), 3, 7).unwrap();
        let b = grid_search(&data(), Method::Tlssvm, &grid, &small_config(), 3, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for c in &a.cells {
            assert!(a.best_mean_rmse <= c.mean_rmse.unwrap());
        }
        assert_eq!(a.cells[a.best].mean_rmse, Some(a.best_mean_rmse));
    }

    #[test]
    fn ties_prefer_smaller_k_then_c() {
        // a constant response is fit exactly by every cell's bias
        let mut d = data();
        let y = vec![1.5; d.len()];
        let x = d.x().clone();
        let grid_ = d.grid().clone();
        let tasks = d.sample_tasks();
        d = MtlDataset::from_samples(
            grid_.clone(),
            x.nrows(),
            (0..y.len()).map(|j| {
                (
                    grid_.delinearize(tasks[j] + 1).unwrap(),
                    x.column(j).iter().copied().collect::<Vec<_>>(),
                    y[j],
                )
            }),
        )
        .unwrap();
        let grid = HyperGrid {
            ranks: vec![2, 1],
            cs: vec![1.0, 0.01],
            ..HyperGrid::default()
        };
        let cfg = FitConfig {
            c: 1.0,
            ..small_config()
        };
        let r = grid_search(&d, Method::LssvmIndependent, &grid, &cfg, 2, 0).unwrap();
        assert!(r.cells.iter().all(|c| c.mean_rmse.unwrap() < 1e-12));
        let r = grid_search(&d, Method::Tlssvm, &grid, &cfg, 2, 0).unwrap();
        let min = r
            .cells
            .iter()
            .map(|c| c.mean_rmse.unwrap())
            .fold(f64::INFINITY, f64::min);
        let winners: Vec<_> = r
            .cells
            .iter()
            .filter(|c| c.mean_rmse == Some(min))
            .collect();
        let smallest = winners
            .iter()
            .map(|c| tie_key(&c.params))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .unwrap();
        assert_eq!(tie_key(&r.best_params), smallest);
    }

    #[test]
    fn failing_cells_are_recorded() {
        // max_iters = 0 is rejected inside every fit
        let grid = HyperGrid {
            ranks: vec![1],
            cs: vec![1.0],
            ..HyperGrid::default()
        };
        let base = FitConfig {
            max_iters: 0,
            ..small_config()
        };
        let err = grid_search(&data(), Method::Tlssvm, &grid, &base, 2, 0).unwrap_err();
        assert!(err.to_string().contains("every grid cell failed"));
    }
}
