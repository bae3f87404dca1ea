//! Error metrics, held-out evaluation, hyperparameter grid search and
//! repeated random-split trials.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_per_category, Dataset, SplitSpec};
use crate::error::{CataError, Result};
use crate::model::CataModel;
use crate::training::{train, TrainConfig};

/// Mean absolute error and root mean squared error.
pub fn mae_rmse(predictions: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if predictions.len() != truths.len() {
        return Err(CataError::invalid(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(CataError::invalid("no predictions to score"));
    }
    let n = predictions.len() as f64;
    let (abs, sq) = predictions
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(a, s), (p, y)| {
            let e = p - y;
            (a + e.abs(), s + e * e)
        });
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    pub per_category: BTreeMap<usize, CategoryMetrics>,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>10} {:>8} {:>12} {:>12}", "category", "n", "mae", "rmse");
        for (c, m) in &self.per_category {
            let _ = writeln!(s, "{:>10} {:>8} {:>12.6} {:>12.6}", c, m.n, m.mae, m.rmse);
        }
        let _ = writeln!(s, "{:>10} {:>8} {:>12.6} {:>12.6}", "all", self.n, self.mae, self.rmse);
        s
    }
}

pub fn evaluate(model: &CataModel, test: &Dataset) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(CataError::invalid("test set is empty"));
    }
    if test.dims() != &model.dims().features {
        return Err(CataError::invalid("test set dims do not match the model"));
    }
    let predictions = model.predict_batch(test.records())?;
    let truths = test.ratings();
    let (mae, rmse) = mae_rmse(&predictions, &truths)?;
    let mut per_category = BTreeMap::new();
    for (c, idx) in test.category_index().iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let p: Vec<f64> = idx.iter().map(|&i| predictions[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
        let (mae, rmse) = mae_rmse(&p, &y)?;
        per_category.insert(c, CategoryMetrics { mae, rmse, n: idx.len() });
    }
    Ok(MetricsReport {
        mae,
        rmse,
        n: test.len(),
        per_category,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    /// Infinite when training diverged.
    pub valid_mae: f64,
    pub valid_rmse: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    pub best_index: usize,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,beta,valid_mae,valid_rmse,diverged\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.alpha, c.beta, c.valid_mae, c.valid_rmse, c.diverged
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>12} {:>12} {:>12} {:>12}", "alpha", "beta", "valid_mae", "valid_rmse");
        for (i, c) in self.cells.iter().enumerate() {
            let mark = if i == self.best_index { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:>12.3e} {:>12.3e} {:>12.6} {:>12.6}{}",
                c.alpha, c.beta, c.valid_mae, c.valid_rmse, mark
            );
        }
        s
    }
}

/// Trains one model per `(alpha, beta)` cell on `train` and picks the cell
/// with the lowest validation RMSE. Ties go to lower MAE, then smaller
/// alpha, then smaller beta. Diverging cells score infinite error.
pub fn grid_search(
    train_set: &Dataset,
    valid: &Dataset,
    base: &TrainConfig,
    alpha_grid: &[f64],
    beta_grid: &[f64],
) -> Result<GridResult> {
    if alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(CataError::invalid("grids must be nonempty"));
    }
    if valid.is_empty() {
        return Err(CataError::invalid("validation set is empty"));
    }
    base.validate()?;
    let pairs: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| beta_grid.iter().map(move |&b| (a, b)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(alpha, beta)| {
            let cfg = TrainConfig {
                alpha,
                beta,
                ..base.clone()
            };
            match train(train_set, &cfg) {
                Ok((model, _)) => {
                    let m = evaluate(&model, valid)?;
                    Ok(GridCell {
                        alpha,
                        beta,
                        valid_mae: m.mae,
                        valid_rmse: m.rmse,
                        diverged: false,
                    })
                }
                Err(CataError::Diverged { .. }) => Ok(GridCell {
                    alpha,
                    beta,
                    valid_mae: f64::INFINITY,
                    valid_rmse: f64::INFINITY,
                    diverged: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let best_index = (0..cells.len())
        .min_by(|&i, &j| {
            let (a, b) = (&cells[i], &cells[j]);
            a.valid_rmse
                .total_cmp(&b.valid_rmse)
                .then(a.valid_mae.total_cmp(&b.valid_mae))
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.beta.total_cmp(&b.beta))
        })
        .expect("grid is nonempty");
    let best = TrainConfig {
        alpha: cells[best_index].alpha,
        beta: cells[best_index].beta,
        ..base.clone()
    };
    Ok(GridResult {
        best,
        best_index,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n_trials: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub trials: Vec<MetricsReport>,
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains on the train part of `n_trials` independent splits (split seed
/// `split.seed + trial`) and scores the test part.
pub fn repeated_trials(
    dataset: &Dataset,
    config: &TrainConfig,
    split: &SplitSpec,
    n_trials: usize,
) -> Result<TrialSummary> {
    if n_trials == 0 {
        return Err(CataError::invalid("n_trials must be at least 1"));
    }
    repeated_trials_with(dataset, config, split, n_trials, |t| split.seed.wrapping_add(t as u64))
}

/// Like [`repeated_trials`] with an explicit split seed per trial.
pub fn repeated_trials_with(
    dataset: &Dataset,
    config: &TrainConfig,
    split: &SplitSpec,
    n_trials: usize,
    split_seed: impl Fn(usize) -> u64 + Sync,
) -> Result<TrialSummary> {
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let spec = SplitSpec {
                seed: split_seed(t),
                ..*split
            };
            let parts = split_per_category(dataset, &spec)?;
            let (model, _) = train(&parts.train, config)?;
            evaluate(&model, &parts.test)
        })
        .collect::<Result<Vec<_>>>()?;
    let maes: Vec<f64> = trials.iter().map(|m| m.mae).collect();
    let rmses: Vec<f64> = trials.iter().map(|m| m.rmse).collect();
    let (mae_mean, mae_std) = mean_std(&maes);
    let (rmse_mean, rmse_std) = mean_std(&rmses);
    Ok(TrialSummary {
        n_trials,
        mae_mean,
        mae_std,
        rmse_mean,
        rmse_std,
        trials,
    })
}
