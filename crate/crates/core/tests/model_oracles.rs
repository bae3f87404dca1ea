mod common;

use cata::tensor::{kron_vec, matricize};
use cata::{CataError, CataModel, SparseVec};
use common::*;
use proptest::prelude::*;
use rand::Rng;

/// Dense `[1; x_v]` per view.
fn augmented_dense(views: &[SparseVec]) -> Vec<Vec<f64>> {
    views
        .iter()
        .map(|x| {
            let mut z = vec![1.0];
            z.extend(x.to_dense());
            z
        })
        .collect()
}

/// Sum over every core entry of `G[r] phi[c, r0] prod_v (sum_j z_v[j] Theta_v[j, r_v])`
/// plus the linear term, with nothing shared with the library's contraction.
fn predict_by_sum(model: &CataModel, views: &[SparseVec], c: usize) -> f64 {
    let zs = augmented_dense(views);
    let ranks = &model.dims().ranks;
    let core = model.core();
    let mut total = 0.0;
    let mut idx = vec![0; ranks.len()];
    for _ in 0..core.len() {
        let mut term = core.get(&idx) * model.phi().get(c, idx[0]);
        for (v, z) in zs.iter().enumerate() {
            let theta = &model.theta()[v];
            let p: f64 = z.iter().enumerate().map(|(j, zj)| zj * theta.get(j, idx[v + 1])).sum();
            term *= p;
        }
        total += term;
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < ranks[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    let x: Vec<f64> = views.iter().flat_map(SparseVec::to_dense).collect();
    total + x.iter().enumerate().map(|(i, xi)| xi * model.d().get(i, c)).sum::<f64>()
}

/// `phi_c^T G_(0) (p_V kron ... kron p_1) + x^T d_c`.
fn predict_by_unfolding(model: &CataModel, views: &[SparseVec], c: usize) -> f64 {
    let zs = augmented_dense(views);
    let mut pi = vec![1.0];
    for (v, z) in zs.iter().enumerate() {
        let t = &model.theta()[v];
        let p: Vec<f64> = (0..t.cols())
            .map(|r| z.iter().enumerate().map(|(j, zj)| zj * t.get(j, r)).sum())
            .collect();
        pi = kron_vec(&p, &pi);
    }
    let g0 = matricize(model.core(), 0).unwrap();
    let row = g0.vec_mul(model.phi().row(c));
    let inter: f64 = row.iter().zip(&pi).map(|(a, b)| a * b).sum();
    let x: Vec<f64> = views.iter().flat_map(SparseVec::to_dense).collect();
    inter + x.iter().enumerate().map(|(i, xi)| xi * model.d().get(i, c)).sum::<f64>()
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

proptest! {
    #[test]
    fn predict_agrees_with_three_references(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 5, 3);
        let model = random_model(&mut r, &dims);
        let c = r.random_range(0..dims.categories());
        let views = random_views(&mut r, &dims.features, 0.5);
        let fast = model.predict(&views, c).unwrap();
        let oracle = model.predict_oracle(&views, c).unwrap();
        prop_assert!(near(fast, oracle, 1e-10), "{fast} vs {oracle}");
        prop_assert!(near(fast, predict_by_sum(&model, &views, c), 1e-10));
        prop_assert!(near(fast, predict_by_unfolding(&model, &views, c), 1e-10));
    }

    #[test]
    fn explicit_zeros_do_not_change_predictions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 5, 3);
        let model = random_model(&mut r, &dims);
        let c = r.random_range(0..dims.categories());
        let views = random_views(&mut r, &dims.features, 0.5);
        let padded: Vec<SparseVec> = views
            .iter()
            .map(|x| {
                let dense = x.to_dense();
                let pairs = dense.iter().copied().enumerate().collect();
                SparseVec::from_pairs(x.dim(), pairs).unwrap()
            })
            .collect();
        let a = model.predict(&views, c).unwrap();
        let b = model.predict(&padded, c).unwrap();
        prop_assert!(near(a, b, 1e-12));
        let rebuilt: Vec<SparseVec> = views.iter().map(|x| SparseVec::from_dense(&x.to_dense())).collect();
        prop_assert_eq!(model.predict(&rebuilt, c).unwrap(), a);
    }

    #[test]
    fn prediction_is_affine_in_d(seed in any::<u64>(), t in -3.0f64..3.0) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 5, 3);
        let model = random_model(&mut r, &dims);
        let c = r.random_range(0..dims.categories());
        let views = random_views(&mut r, &dims.features, 0.5);
        let base = model.predict(&views, c).unwrap();
        let lin = model.linear_term(&views, c).unwrap();
        let inter = model.interaction(&views, c).unwrap();
        prop_assert!(near(base, inter + lin, 1e-12));
        let mut scaled = model.clone();
        scaled.d_data_mut().iter_mut().for_each(|x| *x *= t);
        let moved = scaled.predict(&views, c).unwrap();
        prop_assert!(near(moved, inter + t * lin, 1e-10));
        let mut zeroed = model.clone();
        zeroed.d_data_mut().iter_mut().for_each(|x| *x = 0.0);
        prop_assert_eq!(zeroed.predict(&views, c).unwrap(), inter);
    }

    #[test]
    fn batch_matches_single_predictions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 5, 3);
        let model = random_model(&mut r, &dims);
        let records: Vec<_> = (0..r.random_range(0..20))
            .map(|_| random_record(&mut r, &dims.features, 0.4))
            .collect();
        let batch = model.predict_batch(&records).unwrap();
        for (p, rec) in batch.iter().zip(&records) {
            prop_assert_eq!(*p, model.predict_record(rec).unwrap());
        }
    }

    #[test]
    fn model_file_round_trip_is_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 5, 3);
        let model = random_model(&mut r, &dims);
        let mut buf = Vec::new();
        model.save_json(&mut buf).unwrap();
        let back = CataModel::from_document(serde_json::from_slice(&buf).unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let mut again = Vec::new();
        back.save_json(&mut again).unwrap();
        prop_assert_eq!(buf, again);
        let rec = random_record(&mut r, &dims.features, 0.5);
        prop_assert_eq!(
            back.predict_record(&rec).unwrap().to_bits(),
            model.predict_record(&rec).unwrap().to_bits()
        );
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let mut r = rng(5);
    let dims = random_dims(&mut r, 2, 4, 2);
    let model = random_model(&mut r, &dims);
    let views = random_views(&mut r, &dims.features, 0.5);
    let c = dims.categories();
    assert!(matches!(model.predict(&views, c), Err(CataError::InvalidArgument(_))));
    assert!(model.predict(&views[..views.len() - 1], 0).is_err());
    let mut wide = views.clone();
    wide[0] = SparseVec::empty(dims.features.view_dims[0] + 1);
    assert!(model.predict(&wide, 0).is_err());

    let mut records = vec![random_record(&mut r, &dims.features, 0.5); 3];
    records[2].category = c;
    match model.predict_batch(&records) {
        Err(CataError::InvalidRecord { index, .. }) => assert_eq!(index, 2),
        other => panic!("expected InvalidRecord, got {other:?}"),
    }
}

#[test]
fn oracle_refuses_large_tensors() {
    let features = cata::FeatureDims::new(10, vec![1000, 1000]).unwrap();
    let dims = cata::ModelDims::new(features, vec![1, 1, 1]).unwrap();
    let model = CataModel::zeros(dims);
    let views = vec![SparseVec::empty(1000), SparseVec::empty(1000)];
    assert!(matches!(
        model.predict_oracle(&views, 0),
        Err(CataError::OracleTooLarge { .. })
    ));
    assert_eq!(model.predict(&views, 0).unwrap(), 0.0);
}
