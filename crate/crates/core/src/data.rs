//! Rating datasets: JSON-lines storage, per-category splitting, planted-model
//! generation and summary statistics.
//!
//! File layout: the first line is a header `{"V":..,"C":..,"I":[..]}`; every
//! following line is one record
//! `{"c":<category>,"views":[[[idx,val],...], ...],"y":<rating>}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CataError, Result};
use crate::model::{CataModel, FeatureDims, ModelDims, RatingRecord, SparseVec};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: FeatureDims,
    records: Vec<RatingRecord>,
    category_index: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(dims: FeatureDims, records: Vec<RatingRecord>) -> Result<Self> {
        dims.validate()?;
        let mut category_index = vec![Vec::new(); dims.categories];
        for (index, r) in records.iter().enumerate() {
            r.validate(&dims).map_err(|e| CataError::InvalidRecord {
                index,
                message: e.to_string(),
            })?;
            category_index[r.category].push(index);
        }
        Ok(Dataset {
            dims,
            records,
            category_index,
        })
    }

    pub fn empty(dims: FeatureDims) -> Result<Self> {
        Dataset::new(dims, Vec::new())
    }

    #[inline]
    pub fn dims(&self) -> &FeatureDims {
        &self.dims
    }

    #[inline]
    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices for each category, in file order.
    #[inline]
    pub fn category_index(&self) -> &[Vec<usize>] {
        &self.category_index
    }

    pub fn category_records(&self, c: usize) -> impl Iterator<Item = &RatingRecord> + '_ {
        self.category_index[c].iter().map(move |&i| &self.records[i])
    }

    pub fn ratings(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rating).collect()
    }

    /// New dataset holding the given records, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(self.dims.clone(), records).expect("records already validated")
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            views: self.dims.num_views(),
            categories: self.dims.categories,
            view_dims: self.dims.view_dims.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            let line = RecordLine {
                c: r.category,
                views: r
                    .views
                    .iter()
                    .map(|sv| sv.iter().collect())
                    .collect(),
                y: r.rating,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "V")]
    views: usize,
    #[serde(rename = "C")]
    categories: usize,
    #[serde(rename = "I")]
    view_dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    c: usize,
    views: Vec<Vec<(usize, f64)>>,
    y: f64,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_jsonl(reader, path)
}

/// Parses a dataset; `origin` only labels error messages.
pub fn read_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| CataError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(parse_err(1, "missing header line".into())),
            Some((n, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| parse_err(n + 1, e.to_string()))?;
            }
        }
    };
    if header.views != header.view_dims.len() {
        return Err(parse_err(
            1,
            format!(
                "header declares V = {} but lists {} dimensionalities",
                header.views,
                header.view_dims.len()
            ),
        ));
    }
    let dims = FeatureDims::new(header.categories, header.view_dims)
        .map_err(|e| parse_err(1, e.to_string()))?;

    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine =
            serde_json::from_str(&line).map_err(|e| parse_err(n + 1, e.to_string()))?;
        let index = records.len();
        let bad = |message: String| CataError::InvalidRecord { index, message };
        if rec.views.len() != dims.num_views() {
            return Err(bad(format!(
                "expected {} views, got {}",
                dims.num_views(),
                rec.views.len()
            )));
        }
        let views = rec
            .views
            .into_iter()
            .zip(&dims.view_dims)
            .enumerate()
            .map(|(v, (pairs, &dim))| {
                SparseVec::from_pairs(dim, pairs).map_err(|e| bad(format!("view {v}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let record = RatingRecord {
            category: rec.c,
            views,
            rating: rec.y,
        };
        record.validate(&dims).map_err(|e| bad(e.to_string()))?;
        records.push(record);
    }
    Dataset::new(dims, records)
}

/// Train/validation/test fractions applied within each category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CataError::invalid(format!(
                    "{name} fraction must lie in (0, 1), got {f}"
                )));
            }
        }
        let total = self.train + self.valid + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(CataError::invalid(format!(
                "split fractions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

pub struct Split {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Shuffles each category independently and cuts it by the split fractions.
/// Validation and test sizes are floored; the remainder goes to train.
/// Categories with fewer than three records go wholly to train.
pub fn split_per_category(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, idx) in dataset.category_index().iter().enumerate() {
        let n = idx.len();
        if n == 0 {
            continue;
        }
        if n < 3 {
            log::warn!("category {c} has only {n} record(s); placing all of them in train");
            train.extend_from_slice(idx);
            continue;
        }
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let n_valid = (n as f64 * spec.valid + 1e-9).floor() as usize;
        let n_test = (n as f64 * spec.test + 1e-9).floor() as usize;
        valid.extend_from_slice(&shuffled[..n_valid]);
        test.extend_from_slice(&shuffled[n_valid..n_valid + n_test]);
        train.extend_from_slice(&shuffled[n_valid + n_test..]);
    }
    for part in [&mut train, &mut valid, &mut test] {
        part.sort_unstable();
    }
    Ok(Split {
        train: dataset.subset(&train),
        valid: dataset.subset(&valid),
        test: dataset.subset(&test),
    })
}

/// Parameters of a planted-model synthetic dataset.
///
/// Parameter blocks are drawn from standard normals and rescaled so that the
/// interaction term has standard deviation close to `interaction_scale` and
/// the linear term close to `linear_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub noise_sigma: f64,
    /// Records per category; length must equal the category count.
    pub n_per_category: Vec<usize>,
    /// Probability that a given feature is active in a record. Active
    /// features take standard normal values.
    pub density: f64,
    pub interaction_scale: f64,
    pub linear_scale: f64,
    /// Make view 0 a one-hot user identifier with this many users.
    pub one_hot_first_view: bool,
    /// Views whose features never enter the interaction term (their
    /// non-bias Theta rows are zero).
    pub interaction_free_views: Vec<usize>,
    /// `(category, view)` blocks of D forced to zero.
    pub zero_d_blocks: Vec<(usize, usize)>,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn new(categories: usize, n_per_category: usize, noise_sigma: f64, seed: u64) -> Self {
        PlantedSpec {
            noise_sigma,
            n_per_category: vec![n_per_category; categories],
            density: 0.1,
            interaction_scale: 1.0,
            linear_scale: 1.0,
            one_hot_first_view: false,
            interaction_free_views: Vec::new(),
            zero_d_blocks: Vec::new(),
            seed,
        }
    }

    fn validate(&self, dims: &ModelDims) -> Result<()> {
        if self.n_per_category.len() != dims.categories() {
            return Err(CataError::invalid(format!(
                "n_per_category has {} entries for {} categories",
                self.n_per_category.len(),
                dims.categories()
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(CataError::invalid(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        for (name, x) in [
            ("noise_sigma", self.noise_sigma),
            ("interaction_scale", self.interaction_scale),
            ("linear_scale", self.linear_scale),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(CataError::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if let Some(&v) = self
            .interaction_free_views
            .iter()
            .find(|&&v| v >= dims.num_views())
        {
            return Err(CataError::invalid(format!("view {v} out of range")));
        }
        if let Some(&(c, v)) = self
            .zero_d_blocks
            .iter()
            .find(|&&(c, v)| c >= dims.categories() || v >= dims.num_views())
        {
            return Err(CataError::invalid(format!("D block ({c}, {v}) out of range")));
        }
        Ok(())
    }
}

fn view_second_moment(spec: &PlantedSpec, view: usize, dim: usize) -> f64 {
    if view == 0 && spec.one_hot_first_view {
        1.0
    } else {
        spec.density * dim as f64
    }
}

/// Draws a planted model and a dataset of ratings `y = f(x) + N(0, noise)`.
pub fn generate_synthetic(dims: &ModelDims, spec: &PlantedSpec) -> Result<(Dataset, CataModel)> {
    spec.validate(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = CataModel::random(dims.clone(), 1.0, &mut rng)?;

    let core_len = model.core().len() as f64;
    let core_scale = spec.interaction_scale / core_len.sqrt();
    model.core_data_mut().iter_mut().for_each(|x| *x *= core_scale);

    let mut linear_moment = 0.0;
    for (v, &dim) in dims.view_dims().iter().enumerate() {
        let m2 = view_second_moment(spec, v, dim);
        linear_moment += m2;
        let scale = 1.0 / (1.0 + m2).sqrt();
        let free = spec.interaction_free_views.contains(&v);
        let rank = dims.ranks[v + 1];
        for (k, x) in model.theta_data_mut(v).iter_mut().enumerate() {
            *x = if free && k >= rank { 0.0 } else { *x * scale };
        }
    }
    let d_scale = spec.linear_scale / linear_moment.max(1e-12).sqrt();
    let offsets = dims.features.view_offsets();
    let categories = dims.categories();
    {
        let d = model.d_data_mut();
        d.iter_mut().for_each(|x| *x *= d_scale);
        for &(c, v) in &spec.zero_d_blocks {
            for row in offsets[v]..offsets[v] + dims.view_dims()[v] {
                d[row * categories + c] = 0.0;
            }
        }
    }

    let dataset = sample_records(&model, spec, &mut rng)?;
    Ok((dataset, model))
}

/// Draws `spec.n_per_category` fresh records per category from an existing
/// model, with ratings `f(x) + N(0, noise_sigma)`. Only the feature and noise
/// fields of `spec` are used.
pub fn sample_records<R: Rng>(model: &CataModel, spec: &PlantedSpec, rng: &mut R) -> Result<Dataset> {
    let dims = model.dims();
    spec.validate(dims)?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| CataError::invalid(format!("bad noise sigma: {e}")))?;
    let mut records = Vec::new();
    for (c, &n) in spec.n_per_category.iter().enumerate() {
        for _ in 0..n {
            let views: Vec<SparseVec> = dims
                .view_dims()
                .iter()
                .enumerate()
                .map(|(v, &dim)| draw_view(rng, spec, v, dim))
                .collect();
            let clean = model.predict(&views, c)?;
            let rating = if spec.noise_sigma > 0.0 {
                clean + noise.sample(rng)
            } else {
                clean
            };
            records.push(RatingRecord {
                category: c,
                views,
                rating,
            });
        }
    }
    Dataset::new(dims.features.clone(), records)
}

fn draw_view<R: Rng>(rng: &mut R, spec: &PlantedSpec, view: usize, dim: usize) -> SparseVec {
    if view == 0 && spec.one_hot_first_view {
        let user = rng.random_range(0..dim);
        return SparseVec::new(dim, vec![user], vec![1.0]).expect("valid one-hot");
    }
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..dim {
        if rng.random_bool(spec.density) {
            indices.push(i);
            values.push(rng.sample::<f64, _>(StandardNormal));
        }
    }
    SparseVec::new(dim, indices, values).expect("generated indices are sorted")
}

/// `1 - (#same-category pairs) / (n (n - 1) / 2)` over unordered pairs.
pub fn category_diversity(categories: &[usize]) -> Result<f64> {
    let n = categories.len();
    if n < 2 {
        return Err(CataError::invalid(format!(
            "diversity needs at least 2 records, got {n}"
        )));
    }
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &c in categories {
        *counts.entry(c).or_default() += 1;
    }
    let same: u64 = counts.values().map(|&k| k * (k - 1) / 2).sum();
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    Ok(1.0 - same as f64 / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: usize,
    pub records: usize,
    pub mean_rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub per_category: Vec<CategoryStats>,
    /// Mean fraction of active features per record, per view.
    pub view_density: Vec<f64>,
    pub rating_histogram: Vec<HistogramBin>,
    /// Mean category diversity over users with at least two records.
    pub mean_diversity: Option<f64>,
    pub users_with_diversity: usize,
}

pub const HISTOGRAM_BINS: usize = 10;

/// Aggregates a dataset. When `user_view` is given, that view is read as a
/// one-hot user id and the mean per-user category diversity is reported;
/// records whose user view does not have exactly one active entry are skipped.
pub fn dataset_stats(dataset: &Dataset, user_view: Option<usize>) -> Result<DatasetStats> {
    let dims = dataset.dims();
    if let Some(u) = user_view {
        if u >= dims.num_views() {
            return Err(CataError::invalid(format!("user view {u} out of range")));
        }
    }
    let n = dataset.len();
    let per_category = dataset
        .category_index()
        .iter()
        .enumerate()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(c, idx)| CategoryStats {
            category: c,
            records: idx.len(),
            mean_rating: idx.iter().map(|&i| dataset.records()[i].rating).sum::<f64>()
                / idx.len() as f64,
        })
        .collect();

    let mut view_density = vec![0.0; dims.num_views()];
    if n > 0 {
        for r in dataset.records() {
            for (acc, sv) in view_density.iter_mut().zip(&r.views) {
                *acc += sv.nnz() as f64 / sv.dim() as f64;
            }
        }
        view_density.iter_mut().for_each(|d| *d /= n as f64);
    }

    let rating_histogram = histogram(&dataset.ratings());

    let (mean_diversity, users_with_diversity) = match user_view {
        None => (None, 0),
        Some(u) => {
            let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for r in dataset.records() {
                if let [user] = r.views[u].indices() {
                    by_user.entry(*user).or_default().push(r.category);
                }
            }
            let divs: Vec<f64> = by_user
                .values()
                .filter(|cats| cats.len() >= 2)
                .map(|cats| category_diversity(cats))
                .collect::<Result<_>>()?;
            if divs.is_empty() {
                (None, 0)
            } else {
                (Some(divs.iter().sum::<f64>() / divs.len() as f64), divs.len())
            }
        }
    };

    Ok(DatasetStats {
        records: n,
        per_category,
        view_density,
        rating_histogram,
        mean_diversity,
        users_with_diversity,
    })
}

fn histogram(ratings: &[f64]) -> Vec<HistogramBin> {
    if ratings.is_empty() {
        return Vec::new();
    }
    let lo = ratings.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: ratings.len(),
        }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: lo + b as f64 * width,
            upper: if b + 1 == HISTOGRAM_BINS {
                hi
            } else {
                lo + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &r in ratings {
        let b = (((r - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[b].count += 1;
    }
    bins
}
