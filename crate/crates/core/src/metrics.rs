//! RMSE, Q² and Pearson correlation, pooled over all test pairs and per task.
//!
//! `Q² = 1 − |y − ŷ|² / |y|²` uses the raw (uncentered) energy of `y`.

use serde::{Deserialize, Serialize};

use crate::dataset::MtlDataset;
use crate::error::{Error, Result};

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Metric("empty input".into()));
    }
    if y.len() != y_hat.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} targets, {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

fn sq_error(y: &[f64], y_hat: &[f64]) -> f64 {
    y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok((sq_error(y, y_hat) / y.len() as f64).sqrt())
}

pub fn q_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let energy: f64 = y.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::Metric(
            "Q² is undefined for an all-zero target".into(),
        ));
    }
    Ok(1.0 - sq_error(y, y_hat) / energy)
}

pub fn correlation(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = y_hat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mp);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    /// `None` when undefined (all-zero targets).
    pub q2: Option<f64>,
    /// `None` when undefined (constant targets or predictions).
    pub correlation: Option<f64>,
    pub n: usize,
}

impl MetricSet {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(MetricSet {
            rmse: rmse(y, y_hat)?,
            q2: q_squared(y, y_hat).ok(),
            correlation: correlation(y, y_hat).ok(),
            n: y.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    /// 1-based multi-index of the task.
    pub task: Vec<usize>,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pooled: MetricSet,
    pub per_task: Vec<TaskMetrics>,
}

impl EvalReport {
    /// Scores predictions given in the dataset's sample order. Tasks without
    /// samples are left out of the per-task list.
    pub fn evaluate(data: &MtlDataset, predictions: &[f64]) -> Result<Self> {
        let y = data.y().as_slice();
        let pooled = MetricSet::compute(y, predictions)?;
        let mut per_task = Vec::new();
        let mut at = 0;
        for (t, n) in data.task_sizes().into_iter().enumerate() {
            if n > 0 {
                per_task.push(TaskMetrics {
                    task: data.grid().delinearize(t + 1)?,
                    metrics: MetricSet::compute(&y[at..at + n], &predictions[at..at + n])?,
                });
            }
            at += n;
        }
        Ok(EvalReport { pooled, per_task })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table of pooled metrics, one row per labelled report.
pub fn comparison_table(rows: &[(String, &MetricSet)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>11}  {:>7}\n",
        "model", "rmse", "q2", "correlation", "n"
    );
    for (label, m) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>10.4}  {:>10}  {:>11}  {:>7}\n",
            label,
            m.rmse,
            fmt_opt(m.q2),
            fmt_opt(m.correlation),
            m.n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn q2_examples() {
        assert_eq!(q_squared(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(q_squared(&[1.0, -2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((q_squared(&[1.0, 2.0], &[1.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(q_squared(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_examples() {
        let y = [0.3, -1.2, 2.5, 0.9];
        let affine: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((correlation(&y, &affine).unwrap() - 1.0).abs() < 1e-15);
        assert!((correlation(&y, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(correlation(&y, &[1.0; 4]).is_err());
    }

    #[test]
    fn correlation_matches_textbook_formula() {
        // n Σxy − Σx Σy over sqrt((n Σx² − (Σx)²)(n Σy² − (Σy)²))
        let x = [0.5, 1.7, -0.3, 2.2, 0.0, -1.1];
        let y = [1.0, 2.1, 0.4, 1.9, 0.2, -0.7];
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        assert!((correlation(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn table_lists_every_row() {
        let a = MetricSet::compute(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.5]).unwrap();
        let b = MetricSet::compute(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        let table = comparison_table(&[("tlssvm".into(), &a), ("lssvm-independent".into(), &b)]);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("lssvm-independent"));
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..20).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metric_identities((y, p) in pairs(), a in 0.1f64..4.0, b in -3.0f64..3.0) {
            let r = rmse(&y, &p).unwrap();
            prop_assert!(r >= 0.0);
            let sse: f64 = y.iter().zip(&p).map(|(u, v)| (u - v) * (u - v)).sum();
            prop_assert!((r * r * y.len() as f64 - sse).abs() <= 1e-12 * (1.0 + sse));

            if let Ok(q) = q_squared(&y, &p) {
                prop_assert!(q <= 1.0);
            }
            prop_assert_eq!(q_squared(&y, &vec![0.0; y.len()]).unwrap(), 0.0);

            if let Ok(c) = correlation(&y, &p) {
                prop_assert!((-1.0..=1.0).contains(&c));
                let mapped: Vec<f64> = p.iter().map(|v| a * v + b).collect();
                prop_assert!((correlation(&y, &mapped).unwrap() - c).abs() < 1e-12);
            }

            // joint permutation leaves RMSE unchanged
            let mut yr = y.clone();
            let mut pr = p.clone();
            yr.reverse();
            pr.reverse();
            prop_assert!((rmse(&yr, &pr).unwrap() - r).abs() < 1e-12);
        }
    }
}
