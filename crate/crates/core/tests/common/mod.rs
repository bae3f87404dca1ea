#![allow(dead_code)]

use std::path::PathBuf;

use cata::tensor::{kronecker, DenseTensor, Matrix};
use cata::{CataModel, FeatureDims, ModelDims, RatingRecord, SparseVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, uniform_vec(rng, rows * cols)).unwrap()
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor::new(shape.to_vec(), uniform_vec(rng, n)).unwrap()
}

pub fn random_shape<R: Rng>(rng: &mut R, order: usize, max: usize) -> Vec<usize> {
    (0..order).map(|_| rng.random_range(1..=max)).collect()
}

/// `max |a - b| <= tol * max(1, max |a|, max |b|)`.
pub fn close_rel(a: &[f64], b: &[f64], tol: f64) -> bool {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b)
        .fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

pub fn random_sparse<R: Rng>(rng: &mut R, dim: usize, density: f64) -> SparseVec {
    let mut pairs = Vec::new();
    for i in 0..dim {
        if rng.random_bool(density) {
            pairs.push((i, rng.random_range(-1.0..1.0)));
        }
    }
    SparseVec::from_pairs(dim, pairs).unwrap()
}

pub fn random_views<R: Rng>(rng: &mut R, dims: &FeatureDims, density: f64) -> Vec<SparseVec> {
    dims.view_dims
        .iter()
        .map(|&d| random_sparse(rng, d, density))
        .collect()
}

pub fn random_record<R: Rng>(rng: &mut R, dims: &FeatureDims, density: f64) -> RatingRecord {
    RatingRecord {
        category: rng.random_range(0..dims.categories),
        views: random_views(rng, dims, density),
        rating: rng.random_range(-2.0..2.0),
    }
}

/// Small random dims with 1..=max_views views.
pub fn random_dims<R: Rng>(rng: &mut R, max_views: usize, max_dim: usize, max_rank: usize) -> ModelDims {
    let v = rng.random_range(1..=max_views);
    let features = FeatureDims::new(rng.random_range(1..=4), random_shape(rng, v, max_dim)).unwrap();
    ModelDims::new(features, random_shape(rng, v + 1, max_rank)).unwrap()
}

pub fn random_model<R: Rng>(rng: &mut R, dims: &ModelDims) -> CataModel {
    CataModel::random(dims.clone(), 0.7, rng).unwrap()
}

pub fn is_non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

/// Random matrix with `1..=max_rows` rows.
pub fn random_matrix_upto<R: Rng>(rng: &mut R, max_rows: usize, cols: usize) -> Matrix {
    let rows = rng.random_range(1..=max_rows);
    random_matrix(rng, rows, cols)
}

/// Elementwise `(X x_n U)[.., j, ..] = sum_i X[.., i, ..] U[j, i]`.
pub fn mode_product_by_sum(x: &DenseTensor, u: &Matrix, n: usize) -> DenseTensor {
    let mut shape = x.shape().to_vec();
    shape[n] = u.rows();
    let mut out = DenseTensor::zeros(shape.clone()).unwrap();
    let total: usize = shape.iter().product();
    let mut idx = vec![0; shape.len()];
    for _ in 0..total {
        let mut src = idx.clone();
        let mut acc = 0.0;
        for i in 0..x.shape()[n] {
            src[n] = i;
            acc += x.get(&src) * u.get(idx[n], i);
        }
        out.set(&idx, acc);
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Kronecker product of `factors` over every mode except `n`, highest mode first.
pub fn kron_except(factors: &[Matrix], n: usize) -> Matrix {
    let mut acc = Matrix::identity(1);
    for (k, f) in factors.iter().enumerate().rev() {
        if k != n {
            acc = kronecker(&acc, f);
        }
    }
    acc
}
