//! The CATA parameter container and rating prediction.
//!
//! A prediction for category `c` is
//!
//! ```text
//! f_c(x) = G x_0 phi_c x_1 (z1^T Theta1) ... x_V (zV^T ThetaV) + x^T d_c
//! ```
//!
//! where `z_v = [1; x_v]` augments each view with a constant so that row 0
//! of every `Theta_v` acts as a bias row, and `x` concatenates the raw views.
//! [`CataModel::predict`] never builds the full weight tensor; the explicit
//! route lives in [`CataModel::predict_oracle`] for testing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CataError, Result};
use crate::tensor::{inner_product, outer_product, tucker_reconstruct, DenseTensor, Matrix};

/// Largest explicit weight tensor `predict_oracle` will build.
pub const ORACLE_MAX_ENTRIES: u128 = 10_000_000;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Sparse feature vector over a declared dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(CataError::invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(CataError::invalid(format!(
                    "indices must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(CataError::invalid(format!(
                    "index {last} out of range for dimensionality {dim}"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CataError::invalid(format!("non-finite feature value {v}")));
        }
        Ok(SparseVec {
            dim,
            indices,
            values,
        })
    }

    /// Builds from `(index, value)` pairs in any order; pairs are sorted.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let (indices, values) = pairs.into_iter().unzip();
        SparseVec::new(dim, indices, values)
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseVec {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn empty(dim: usize) -> Self {
        SparseVec {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Dense `[1; x]`.
    pub fn augmented(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim + 1];
        out[0] = 1.0;
        for (i, v) in self.iter() {
            out[i + 1] = v;
        }
        out
    }
}

/// Category count and per-view dimensionalities shared by data and model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    #[serde(rename = "C")]
    pub categories: usize,
    #[serde(rename = "I")]
    pub view_dims: Vec<usize>,
}

impl FeatureDims {
    pub fn new(categories: usize, view_dims: Vec<usize>) -> Result<Self> {
        let d = FeatureDims {
            categories,
            view_dims,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories == 0 {
            return Err(CataError::invalid("category count must be at least 1"));
        }
        if self.view_dims.is_empty() {
            return Err(CataError::invalid("at least one view is required"));
        }
        if let Some(v) = self.view_dims.iter().position(|&n| n == 0) {
            return Err(CataError::invalid(format!(
                "view {v} has zero dimensionality"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn num_views(&self) -> usize {
        self.view_dims.len()
    }

    /// Total feature count `I = sum_v I_v`.
    pub fn total_features(&self) -> usize {
        self.view_dims.iter().sum()
    }

    /// Row offset of each view block inside the concatenated feature vector.
    pub fn view_offsets(&self) -> Vec<usize> {
        self.view_dims
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect()
    }

    /// Checks a category and its views against these dimensions.
    pub fn check_input(&self, category: usize, views: &[SparseVec]) -> Result<()> {
        if category >= self.categories {
            return Err(CataError::invalid(format!(
                "category {category} out of range (C = {})",
                self.categories
            )));
        }
        if views.len() != self.num_views() {
            return Err(CataError::invalid(format!(
                "expected {} views, got {}",
                self.num_views(),
                views.len()
            )));
        }
        for (v, (sv, &dim)) in views.iter().zip(&self.view_dims).enumerate() {
            if sv.dim() != dim {
                return Err(CataError::invalid(format!(
                    "view {v} declared with dimensionality {}, expected {dim}",
                    sv.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Full model shape: features plus Tucker ranks `(R_0, R_1, ..., R_V)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDims {
    pub features: FeatureDims,
    pub ranks: Vec<usize>,
}

impl ModelDims {
    pub fn new(features: FeatureDims, ranks: Vec<usize>) -> Result<Self> {
        features.validate()?;
        if ranks.len() != features.num_views() + 1 {
            return Err(CataError::invalid(format!(
                "{} views need {} ranks, got {}",
                features.num_views(),
                features.num_views() + 1,
                ranks.len()
            )));
        }
        if ranks.contains(&0) {
            return Err(CataError::invalid("ranks must be positive"));
        }
        Ok(ModelDims { features, ranks })
    }

    #[inline]
    pub fn num_views(&self) -> usize {
        self.features.num_views()
    }

    #[inline]
    pub fn categories(&self) -> usize {
        self.features.categories
    }

    #[inline]
    pub fn view_dims(&self) -> &[usize] {
        &self.features.view_dims
    }

    /// Entry count of the explicit weight tensor, `C * prod_v (1 + I_v)`.
    pub fn explicit_size(&self) -> u128 {
        self.view_dims()
            .iter()
            .fold(self.categories() as u128, |acc, &n| acc * (n as u128 + 1))
    }
}

/// One rating record: category, per-view sparse features, observed rating.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub category: usize,
    pub views: Vec<SparseVec>,
    pub rating: f64,
}

impl RatingRecord {
    pub fn validate(&self, dims: &FeatureDims) -> Result<()> {
        dims.check_input(self.category, &self.views)?;
        if !self.rating.is_finite() {
            return Err(CataError::invalid(format!(
                "non-finite rating {}",
                self.rating
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CataModel {
    dims: ModelDims,
    core: DenseTensor,
    phi: Matrix,
    theta: Vec<Matrix>,
    d: Matrix,
}

impl CataModel {
    pub fn from_parts(
        dims: ModelDims,
        core: DenseTensor,
        phi: Matrix,
        theta: Vec<Matrix>,
        d: Matrix,
    ) -> Result<Self> {
        if core.shape() != dims.ranks.as_slice() {
            return Err(CataError::invalid(format!(
                "core shape {:?} does not match ranks {:?}",
                core.shape(),
                dims.ranks
            )));
        }
        if phi.rows() != dims.categories() || phi.cols() != dims.ranks[0] {
            return Err(CataError::invalid(format!(
                "Phi must be {}x{}, got {}x{}",
                dims.categories(),
                dims.ranks[0],
                phi.rows(),
                phi.cols()
            )));
        }
        if theta.len() != dims.num_views() {
            return Err(CataError::invalid(format!(
                "{} view factors supplied for {} views",
                theta.len(),
                dims.num_views()
            )));
        }
        for (v, t) in theta.iter().enumerate() {
            let (r, c) = (dims.view_dims()[v] + 1, dims.ranks[v + 1]);
            if t.rows() != r || t.cols() != c {
                return Err(CataError::invalid(format!(
                    "Theta[{v}] must be {r}x{c}, got {}x{}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        if d.rows() != dims.features.total_features() || d.cols() != dims.categories() {
            return Err(CataError::invalid(format!(
                "D must be {}x{}, got {}x{}",
                dims.features.total_features(),
                dims.categories(),
                d.rows(),
                d.cols()
            )));
        }
        let model = CataModel {
            dims,
            core,
            phi,
            theta,
            d,
        };
        if !model.is_finite() {
            return Err(CataError::invalid("model parameters must be finite"));
        }
        Ok(model)
    }

    pub fn zeros(dims: ModelDims) -> Self {
        let core = DenseTensor::zeros(dims.ranks.clone()).expect("ranks validated");
        let phi = Matrix::zeros(dims.categories(), dims.ranks[0]);
        let theta = dims
            .view_dims()
            .iter()
            .zip(&dims.ranks[1..])
            .map(|(&i, &r)| Matrix::zeros(i + 1, r))
            .collect();
        let d = Matrix::zeros(dims.features.total_features(), dims.categories());
        CataModel {
            dims,
            core,
            phi,
            theta,
            d,
        }
    }

    /// Every parameter drawn i.i.d. from `N(0, sigma)`, in the order
    /// core, Phi, Theta_1..Theta_V, D.
    pub fn random<R: Rng + ?Sized>(dims: ModelDims, sigma: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| CataError::invalid(format!("bad standard deviation {sigma}: {e}")))?;
        let mut m = CataModel::zeros(dims);
        m.for_each_block_mut(|block| {
            for x in block.iter_mut() {
                *x = normal.sample(rng);
            }
        });
        Ok(m)
    }

    fn for_each_block_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(self.core.data_mut());
        f(self.phi.data_mut());
        for t in &mut self.theta {
            f(t.data_mut());
        }
        f(self.d.data_mut());
    }

    #[inline]
    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    #[inline]
    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    #[inline]
    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    #[inline]
    pub fn theta(&self) -> &[Matrix] {
        &self.theta
    }

    #[inline]
    pub fn d(&self) -> &Matrix {
        &self.d
    }

    // Mutable access hands out buffers only, so shapes stay fixed.

    pub fn core_data_mut(&mut self) -> &mut [f64] {
        self.core.data_mut()
    }

    pub fn phi_data_mut(&mut self) -> &mut [f64] {
        self.phi.data_mut()
    }

    pub fn theta_data_mut(&mut self, view: usize) -> &mut [f64] {
        self.theta[view].data_mut()
    }

    pub fn d_data_mut(&mut self) -> &mut [f64] {
        self.d.data_mut()
    }

    pub fn is_finite(&self) -> bool {
        self.core.data().iter().all(|x| x.is_finite())
            && self.phi.data().iter().all(|x| x.is_finite())
            && self
                .theta
                .iter()
                .all(|t| t.data().iter().all(|x| x.is_finite()))
            && self.d.data().iter().all(|x| x.is_finite())
    }

    /// `z_v^T Theta_v` for one view, with the implicit leading 1.
    pub fn project_view(&self, view: usize, x: &SparseVec) -> Vec<f64> {
        let t = &self.theta[view];
        let mut p = t.row(0).to_vec();
        for (i, val) in x.iter() {
            for (acc, w) in p.iter_mut().zip(t.row(i + 1)) {
                *acc += val * w;
            }
        }
        p
    }

    pub fn project_all(&self, views: &[SparseVec]) -> Vec<Vec<f64>> {
        views
            .iter()
            .enumerate()
            .map(|(v, x)| self.project_view(v, x))
            .collect()
    }

    /// Tucker interaction term given precomputed view projections.
    pub fn interaction_from_projections(&self, category: usize, projections: &[Vec<f64>]) -> f64 {
        let mut vecs: Vec<&[f64]> = Vec::with_capacity(projections.len() + 1);
        vecs.push(self.phi.row(category));
        vecs.extend(projections.iter().map(Vec::as_slice));
        self.core.contract_all(&vecs)
    }

    /// `G x_0 phi_c x_1 (z1^T Theta1) ... x_V (zV^T ThetaV)`.
    pub fn interaction(&self, views: &[SparseVec], category: usize) -> Result<f64> {
        self.dims.features.check_input(category, views)?;
        Ok(self.interaction_from_projections(category, &self.project_all(views)))
    }

    /// `x^T d_c` over the unaugmented concatenated features.
    pub fn linear_term(&self, views: &[SparseVec], category: usize) -> Result<f64> {
        self.dims.features.check_input(category, views)?;
        Ok(self.linear_unchecked(views, category))
    }

    fn linear_unchecked(&self, views: &[SparseVec], category: usize) -> f64 {
        let offsets = self.dims.features.view_offsets();
        let mut s = 0.0;
        for (x, off) in views.iter().zip(offsets) {
            for (i, val) in x.iter() {
                s += val * self.d.get(off + i, category);
            }
        }
        s
    }

    pub fn predict(&self, views: &[SparseVec], category: usize) -> Result<f64> {
        self.dims.features.check_input(category, views)?;
        Ok(self.predict_unchecked(views, category))
    }

    pub(crate) fn predict_unchecked(&self, views: &[SparseVec], category: usize) -> f64 {
        let p = self.project_all(views);
        self.interaction_from_projections(category, &p) + self.linear_unchecked(views, category)
    }

    pub fn predict_record(&self, record: &RatingRecord) -> Result<f64> {
        self.predict(&record.views, record.category)
    }

    /// Predicts every record. Records are validated up front and the first
    /// bad one is reported with its index.
    pub fn predict_batch(&self, records: &[RatingRecord]) -> Result<Vec<f64>> {
        for (index, r) in records.iter().enumerate() {
            self.dims
                .features
                .check_input(r.category, &r.views)
                .map_err(|e| CataError::InvalidRecord {
                    index,
                    message: e.to_string(),
                })?;
        }
        Ok(records
            .par_iter()
            .map(|r| self.predict_unchecked(&r.views, r.category))
            .collect())
    }

    /// Weight tensor `W = [[G; Phi, Theta_1, ..., Theta_V]]`, category mode first.
    pub fn weight_tensor(&self) -> Result<DenseTensor> {
        let entries = self.dims.explicit_size();
        if entries > ORACLE_MAX_ENTRIES {
            return Err(CataError::OracleTooLarge {
                entries,
                limit: ORACLE_MAX_ENTRIES,
            });
        }
        let mut factors: Vec<&Matrix> = vec![&self.phi];
        factors.extend(self.theta.iter());
        tucker_reconstruct(&self.core, &factors)
    }

    /// Explicit-tensor prediction `<W, e_c o z_1 o ... o z_V> + x^T d_c`.
    pub fn predict_oracle(&self, views: &[SparseVec], category: usize) -> Result<f64> {
        self.dims.features.check_input(category, views)?;
        let w = self.weight_tensor()?;
        let mut e = vec![0.0; self.dims.categories()];
        e[category] = 1.0;
        let zs: Vec<Vec<f64>> = views.iter().map(SparseVec::augmented).collect();
        let mut parts: Vec<&[f64]> = vec![&e];
        parts.extend(zs.iter().map(Vec::as_slice));
        let z = outer_product(&parts)?;
        let x: Vec<f64> = views.iter().flat_map(SparseVec::to_dense).collect();
        let linear: f64 = x
            .iter()
            .enumerate()
            .map(|(i, xi)| xi * self.d.get(i, category))
            .sum();
        Ok(inner_product(&w, &z)? + linear)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            dims: DimsDocument {
                views: self.dims.num_views(),
                categories: self.dims.categories(),
                view_dims: self.dims.view_dims().to_vec(),
                ranks: self.dims.ranks.clone(),
            },
            core: self.core.data().to_vec(),
            phi: self.phi.data().to_vec(),
            theta: self.theta.iter().map(|t| t.data().to_vec()).collect(),
            d: self.d.data().to_vec(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(CataError::FormatVersion(doc.format_version));
        }
        let dd = doc.dims;
        if dd.views != dd.view_dims.len() {
            return Err(CataError::invalid(format!(
                "V = {} but {} view dimensionalities listed",
                dd.views,
                dd.view_dims.len()
            )));
        }
        let dims = ModelDims::new(FeatureDims::new(dd.categories, dd.view_dims)?, dd.ranks)?;
        let core = DenseTensor::new(dims.ranks.clone(), doc.core)?;
        let phi = Matrix::new(dims.categories(), dims.ranks[0], doc.phi)?;
        if doc.theta.len() != dims.num_views() {
            return Err(CataError::invalid(format!(
                "{} Theta blocks for {} views",
                doc.theta.len(),
                dims.num_views()
            )));
        }
        let theta = doc
            .theta
            .into_iter()
            .enumerate()
            .map(|(v, data)| Matrix::new(dims.view_dims()[v] + 1, dims.ranks[v + 1], data))
            .collect::<Result<Vec<_>>>()?;
        let d = Matrix::new(dims.features.total_features(), dims.categories(), doc.d)?;
        CataModel::from_parts(dims, core, phi, theta, d)
    }

    pub fn save_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.to_document())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let doc: ModelDocument = serde_json::from_reader(r)?;
        CataModel::from_document(doc)
    }
}

/// On-disk model layout; every array is a flat row-major number list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub dims: DimsDocument,
    #[serde(rename = "G")]
    pub core: Vec<f64>,
    #[serde(rename = "Phi")]
    pub phi: Vec<f64>,
    #[serde(rename = "Theta")]
    pub theta: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimsDocument {
    #[serde(rename = "V")]
    pub views: usize,
    #[serde(rename = "C")]
    pub categories: usize,
    #[serde(rename = "I")]
    pub view_dims: Vec<usize>,
    #[serde(rename = "R")]
    pub ranks: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(c: usize, i: &[usize], r: &[usize]) -> ModelDims {
        ModelDims::new(FeatureDims::new(c, i.to_vec()).unwrap(), r.to_vec()).unwrap()
    }

    fn random_views<R: Rng>(dims: &ModelDims, rng: &mut R) -> Vec<SparseVec> {
        dims.view_dims()
            .iter()
            .map(|&n| {
                let dense: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random_bool(0.5) {
                            rng.random_range(-1.0..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                SparseVec::from_dense(&dense)
            })
            .collect()
    }

    #[test]
    fn sparse_vec_validation() {
        assert!(SparseVec::new(3, vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(SparseVec::new(3, vec![2, 0], vec![1.0, 2.0]).is_err());
        assert!(SparseVec::new(3, vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVec::new(3, vec![3], vec![1.0]).is_err());
        assert!(SparseVec::new(3, vec![0], vec![f64::NAN]).is_err());
        assert!(SparseVec::new(3, vec![0], vec![]).is_err());
        let s = SparseVec::from_pairs(4, vec![(3, 1.0), (1, 2.0)]).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
        assert_eq!(s.augmented(), vec![1.0, 0.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn dims_validation() {
        assert!(FeatureDims::new(0, vec![2]).is_err());
        assert!(FeatureDims::new(2, vec![]).is_err());
        assert!(FeatureDims::new(2, vec![3, 0]).is_err());
        let f = FeatureDims::new(2, vec![3, 4]).unwrap();
        assert!(ModelDims::new(f.clone(), vec![1, 1]).is_err());
        assert!(ModelDims::new(f.clone(), vec![1, 0, 1]).is_err());
        assert_eq!(f.view_offsets(), vec![0, 3]);
        assert_eq!(ModelDims::new(f, vec![1, 1, 1]).unwrap().explicit_size(), 2 * 4 * 5);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = CataModel::zeros(dims(3, &[4, 5], &[2, 2, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let views = random_views(m.dims(), &mut rng);
        assert_eq!(m.predict(&views, 1).unwrap(), 0.0);
        assert_eq!(m.predict_oracle(&views, 1).unwrap(), 0.0);
    }

    #[test]
    fn global_bias_configuration() {
        let d = dims(2, &[3], &[1, 1]);
        let core = DenseTensor::new(vec![1, 1], vec![1.0]).unwrap();
        let phi = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let theta = vec![Matrix::new(4, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap()];
        let dd = Matrix::zeros(3, 2);
        let m = CataModel::from_parts(d, core, phi, theta, dd).unwrap();
        let x = vec![SparseVec::new(3, vec![0, 2], vec![0.3, -4.0]).unwrap()];
        assert_eq!(m.predict(&x, 0).unwrap(), 1.0);
        assert_eq!(m.predict(&x, 1).unwrap(), 1.0);
    }

    #[test]
    fn only_d_nonzero_gives_linear_term() {
        let dm = dims(2, &[2, 3], &[1, 1, 1]);
        let mut m = CataModel::zeros(dm);
        m.d_data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = i as f64 + 1.0);
        let x = vec![
            SparseVec::new(2, vec![1], vec![2.0]).unwrap(),
            SparseVec::new(3, vec![0, 2], vec![1.0, -1.0]).unwrap(),
        ];
        // D is 5x2; category 1 column = [2,4,6,8,10]
        let expected = 2.0 * 4.0 + 1.0 * 6.0 - 1.0 * 10.0;
        assert_eq!(m.predict_oracle(&x, 1).unwrap(), expected);
        assert_eq!(m.predict(&x, 1).unwrap(), expected);
    }

    #[test]
    fn factorized_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dm = dims(3, &[4, 5], &[2, 2, 2]);
        for _ in 0..50 {
            let m = CataModel::random(dm.clone(), 1.0, &mut rng).unwrap();
            let views = random_views(&dm, &mut rng);
            let c = rng.random_range(0..3);
            let f = m.predict(&views, c).unwrap();
            let o = m.predict_oracle(&views, c).unwrap();
            assert!((f - o).abs() <= 1e-10 * (1.0 + o.abs()), "{f} vs {o}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = CataModel::zeros(dims(2, &[3], &[1, 1]));
        let ok = vec![SparseVec::empty(3)];
        assert!(m.predict(&ok, 2).is_err());
        assert!(m.predict(&[SparseVec::empty(4)], 0).is_err());
        assert!(m.predict(&[], 0).is_err());
    }

    #[test]
    fn oracle_size_guard() {
        let m = CataModel::zeros(dims(10, &[1000, 1000], &[1, 1, 1]));
        let views = vec![SparseVec::empty(1000), SparseVec::empty(1000)];
        match m.predict_oracle(&views, 0) {
            Err(CataError::OracleTooLarge { entries, .. }) => assert_eq!(entries, 10 * 1001 * 1001),
            other => panic!("expected size refusal, got {other:?}"),
        }
        assert_eq!(m.predict(&views, 0).unwrap(), 0.0);
    }

    #[test]
    fn batch_reports_first_bad_index() {
        let m = CataModel::zeros(dims(2, &[3], &[1, 1]));
        let good = RatingRecord {
            category: 0,
            views: vec![SparseVec::empty(3)],
            rating: 1.0,
        };
        let bad = RatingRecord {
            category: 5,
            ..good.clone()
        };
        assert!(m.predict_batch(&[]).unwrap().is_empty());
        match m.predict_batch(&[good.clone(), bad.clone(), bad]) {
            Err(CataError::InvalidRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(m.predict_batch(&[good]).unwrap(), vec![0.0]);
    }

    #[test]
    fn from_parts_rejects_nan_and_bad_shapes() {
        let dm = dims(2, &[3], &[1, 2]);
        let good = CataModel::zeros(dm.clone());
        let mut phi = good.phi().clone();
        phi.data_mut()[0] = f64::NAN;
        assert!(CataModel::from_parts(
            dm.clone(),
            good.core().clone(),
            phi,
            good.theta().to_vec(),
            good.d().clone()
        )
        .is_err());
        assert!(CataModel::from_parts(
            dm,
            good.core().clone(),
            good.phi().clone(),
            vec![Matrix::zeros(3, 2)],
            good.d().clone()
        )
        .is_err());
    }

    #[test]
    fn document_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dm = dims(3, &[4, 2], &[2, 3, 1]);
        let m = CataModel::random(dm, 0.7, &mut rng).unwrap();
        let mut buf = Vec::new();
        m.save_json(&mut buf).unwrap();
        let doc: ModelDocument = serde_json::from_slice(&buf).unwrap();
        let back = CataModel::from_document(doc).unwrap();
        assert_eq!(back, m);

        let text = String::from_utf8(buf).unwrap();
        for key in ["\"format_version\":1", "\"V\":2", "\"G\":", "\"Phi\":", "\"Theta\":", "\"D\":"] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn rejects_unknown_format_version() {
        let m = CataModel::zeros(dims(1, &[1], &[1, 1]));
        let mut doc = m.to_document();
        doc.format_version = 99;
        assert!(matches!(
            CataModel::from_document(doc),
            Err(CataError::FormatVersion(99))
        ));
    }
}
