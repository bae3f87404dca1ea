mod common;

use cata::data::{generate_synthetic, split_per_category};
use cata::eval::*;
use cata::{CataError, CataModel, Dataset, FeatureDims, ModelDims, PlantedSpec, SplitSpec, TrainConfig};
use common::*;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn overall_metrics_are_count_weighted_category_metrics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 2, 5, 2);
        let model = random_model(&mut r, &dims);
        let n = r.random_range(1..40);
        let records = (0..n).map(|_| random_record(&mut r, &dims.features, 0.5)).collect();
        let ds = Dataset::new(dims.features.clone(), records).unwrap();
        let m = evaluate(&model, &ds).unwrap();
        prop_assert_eq!(m.n, n);
        prop_assert_eq!(m.per_category.values().map(|c| c.n).sum::<usize>(), n);
        let mae: f64 = m.per_category.values().map(|c| c.mae * c.n as f64).sum::<f64>() / n as f64;
        let mse: f64 = m.per_category.values().map(|c| c.rmse.powi(2) * c.n as f64).sum::<f64>() / n as f64;
        prop_assert!((mae - m.mae).abs() <= 1e-12 * (1.0 + m.mae));
        prop_assert!((mse.sqrt() - m.rmse).abs() <= 1e-12 * (1.0 + m.rmse));
        prop_assert!(m.mae <= m.rmse + 1e-15);
    }
}

fn planted(noise: f64) -> (Dataset, CataModel) {
    let dims = ModelDims::new(FeatureDims::new(3, vec![6, 5]).unwrap(), vec![2, 2, 2]).unwrap();
    let mut spec = PlantedSpec::new(3, 60, noise, 17);
    spec.density = 0.5;
    generate_synthetic(&dims, &spec).unwrap()
}

fn base_config() -> TrainConfig {
    let mut cfg = TrainConfig::new(2);
    cfg.ranks = vec![2, 2, 2];
    cfg.eta = 1.0;
    cfg.init_sigma = 0.3;
    cfg.max_iters = 300;
    cfg.tol = 0.0;
    cfg
}

#[test]
fn planted_model_scores_zero_on_noise_free_data() {
    let (ds, model) = planted(0.0);
    let m = evaluate(&model, &ds).unwrap();
    assert_eq!((m.mae, m.rmse), (0.0, 0.0));
    assert_eq!(m.per_category.len(), 3);
}

#[test]
fn evaluate_rejects_empty_and_mismatched_sets() {
    let (ds, model) = planted(0.1);
    let empty = Dataset::empty(ds.dims().clone()).unwrap();
    assert!(matches!(evaluate(&model, &empty), Err(CataError::InvalidArgument(_))));
    let other = Dataset::empty(FeatureDims::new(3, vec![6, 4]).unwrap()).unwrap();
    assert!(evaluate(&model, &other).is_err());
}

#[test]
fn single_cell_grid_returns_that_cell() {
    let (ds, _) = planted(0.1);
    let parts = split_per_category(&ds, &SplitSpec::default()).unwrap();
    let g = grid_search(&parts.train, &parts.valid, &base_config(), &[0.01], &[0.02]).unwrap();
    assert_eq!(g.best_index, 0);
    assert_eq!((g.best.alpha, g.best.beta), (0.01, 0.02));
    assert_eq!(g.cells.len(), 1);
}

#[test]
fn grid_winner_is_minimal_and_cells_are_in_grid_order() {
    let (ds, _) = planted(0.2);
    let parts = split_per_category(&ds, &SplitSpec::default()).unwrap();
    let alphas = [1e-4, 1e-2, 1.0];
    let betas = [1e-3, 1e-1];
    let g = grid_search(&parts.train, &parts.valid, &base_config(), &alphas, &betas).unwrap();
    let order: Vec<(f64, f64)> = g.cells.iter().map(|c| (c.alpha, c.beta)).collect();
    let expected: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    assert_eq!(order, expected);
    let best = &g.cells[g.best_index];
    assert!(g.cells.iter().all(|c| best.valid_rmse <= c.valid_rmse));
    assert_eq!(g.to_csv().lines().count(), g.cells.len() + 1);
    let again = grid_search(&parts.train, &parts.valid, &base_config(), &alphas, &betas).unwrap();
    assert_eq!(again, g);
}

#[test]
fn unregularized_cell_wins_on_noise_free_data() {
    let (ds, _) = planted(0.0);
    let parts = split_per_category(&ds, &SplitSpec::default()).unwrap();
    let mut cfg = base_config();
    cfg.max_iters = 1500;
    let g = grid_search(&parts.train, &parts.valid, &cfg, &[0.0, 0.3], &[0.0, 0.3]).unwrap();
    assert_eq!((g.best.alpha, g.best.beta), (0.0, 0.0), "{}", g.to_table());
}

#[test]
fn diverging_cells_are_reported_not_fatal() {
    let (ds, _) = planted(0.1);
    let parts = split_per_category(&ds, &SplitSpec::default()).unwrap();
    let mut cfg = base_config();
    cfg.line_search = false;
    cfg.eta = 1e4;
    cfg.max_iters = 50;
    let g = grid_search(&parts.train, &parts.valid, &cfg, &[1e-4], &[1e-4]).unwrap();
    assert!(g.cells[0].diverged);
    assert!(g.cells[0].valid_rmse.is_infinite());
}

#[test]
fn repeated_trials_are_deterministic() {
    let (ds, _) = planted(0.1);
    let mut cfg = base_config();
    cfg.max_iters = 30;
    let a = repeated_trials(&ds, &cfg, &SplitSpec::default(), 3).unwrap();
    let b = repeated_trials(&ds, &cfg, &SplitSpec::default(), 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trials.len(), 3);
    let rmses: Vec<f64> = a.trials.iter().map(|t| t.rmse).collect();
    assert_eq!(mean_std(&rmses), (a.rmse_mean, a.rmse_std));
    assert!(repeated_trials(&ds, &cfg, &SplitSpec::default(), 0).is_err());
}
