//! Regularized empirical risk, analytic block gradients and the alternating
//! block coordinate descent trainer.
//!
//! Objective:
//!
//! ```text
//! H = sum_c (1/N_c) sum_n (f_c(x_n) - y_n)^2
//!     + alpha (|G|^2 + |Phi|^2 + sum_v |Theta_v|^2)
//!     + beta Omega(D)
//! ```
//!
//! with `Omega(D) = |D|_F^2` for [`Variant::Cata`] and the group norm
//! `sum_c sum_v |d_c^(v)|_2` for [`Variant::CataG`].
//!
//! Block gradients are assembled from the per-record reverse-order Kronecker
//! rows `pi = p_V ⊗ ... ⊗ p_1` (with `p_v = z_v^T Theta_v`) and the mode
//! unfoldings of the core, so they depend on the unfolding convention in
//! [`crate::tensor`].

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CataError, Result};
use crate::model::{CataModel, ModelDims, RatingRecord, SparseVec};
use crate::tensor::{fold, kron_vec, matricize, DenseTensor, Matrix};

/// Guard against dividing by a vanishing block norm in the group-norm
/// subgradient.
pub const GROUP_NORM_EPS: f64 = 1e-8;

/// Maximum number of step halvings per block when line search is on.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Squared Frobenius penalty on D.
    Cata,
    /// Group l1 penalty on the (category, view) blocks of D.
    CataG,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cata => "cata",
            Variant::CataG => "cata_g",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `R_0` for the category mode, then one rank per view.
    pub ranks: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub init_sigma: f64,
    pub variant: Variant,
    pub line_search: bool,
}

impl TrainConfig {
    /// Defaults: rank 5 on every mode, eta 0.1, 400 iterations.
    pub fn new(num_views: usize) -> Self {
        TrainConfig {
            ranks: vec![5; num_views + 1],
            alpha: 1e-4,
            beta: 1e-4,
            eta: 0.1,
            max_iters: 400,
            tol: 1e-5,
            seed: 0,
            init_sigma: 0.01,
            variant: Variant::Cata,
            line_search: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(CataError::invalid("ranks must be a nonempty list of positive integers"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CataError::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(CataError::invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CataError::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters < 1 {
            return Err(CataError::invalid("invariant max_iters >= 1 violated"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(CataError::invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(CataError::invalid(format!(
                "init_sigma must be > 0, got {}",
                self.init_sigma
            )));
        }
        Ok(())
    }

    pub fn model_dims(&self, dataset: &Dataset) -> Result<ModelDims> {
        ModelDims::new(dataset.dims().clone(), self.ranks.clone())
    }
}

/// `sum_c sum_v |d_c^(v)|_2`, with `partition` giving the row count of each view block.
pub fn group_l1_norm(d: &Matrix, partition: &[usize]) -> Result<f64> {
    let total: usize = partition.iter().sum();
    if total != d.rows() {
        return Err(CataError::invalid(format!(
            "partition covers {total} rows, D has {}",
            d.rows()
        )));
    }
    Ok(block_norms(d, partition).iter().flatten().sum())
}

/// Euclidean norm of every `(category, view)` block, indexed `[c][v]`.
pub fn block_norms(d: &Matrix, partition: &[usize]) -> Vec<Vec<f64>> {
    (0..d.cols())
        .map(|c| {
            let mut start = 0;
            partition
                .iter()
                .map(|&len| {
                    let s: f64 = (start..start + len).map(|r| d.get(r, c).powi(2)).sum();
                    start += len;
                    s.sqrt()
                })
                .collect()
        })
        .collect()
}

fn check_dataset(model: &CataModel, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(CataError::invalid("dataset is empty"));
    }
    if dataset.dims() != &model.dims().features {
        return Err(CataError::invalid(format!(
            "dataset dims {:?} do not match model dims {:?}",
            dataset.dims(),
            model.dims().features
        )));
    }
    Ok(())
}

/// Sum over nonempty categories of the mean squared error.
pub fn data_loss(model: &CataModel, dataset: &Dataset) -> Result<f64> {
    check_dataset(model, dataset)?;
    Ok(data_loss_unchecked(model, dataset))
}

fn data_loss_unchecked(model: &CataModel, dataset: &Dataset) -> f64 {
    let mut total = 0.0;
    for idx in dataset.category_index() {
        if idx.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for &i in idx {
            let r = &dataset.records()[i];
            let e = model.predict_unchecked(&r.views, r.category) - r.rating;
            s += e * e;
        }
        total += s / idx.len() as f64;
    }
    total
}

pub fn regularizer(model: &CataModel, config: &TrainConfig) -> f64 {
    let frob = model.core().frobenius_sq()
        + model.phi().frobenius_sq()
        + model.theta().iter().map(Matrix::frobenius_sq).sum::<f64>();
    let omega_d = match config.variant {
        Variant::Cata => model.d().frobenius_sq(),
        Variant::CataG => block_norms(model.d(), model.dims().view_dims())
            .iter()
            .flatten()
            .sum(),
    };
    config.alpha * frob + config.beta * omega_d
}

pub fn objective(model: &CataModel, dataset: &Dataset, config: &TrainConfig) -> Result<f64> {
    check_dataset(model, dataset)?;
    Ok(data_loss_unchecked(model, dataset) + regularizer(model, config))
}

/// Per-record quantities shared by all block gradients: view projections and
/// the scaled residual `2 (f - y) / N_c`.
struct Evaluation {
    projections: Vec<Vec<Vec<f64>>>,
    coef: Vec<f64>,
}

impl Evaluation {
    fn new(model: &CataModel, dataset: &Dataset) -> Self {
        let n = dataset.len();
        let mut projections = vec![Vec::new(); n];
        let mut coef = vec![0.0; n];
        for idx in dataset.category_index() {
            let scale = 2.0 / idx.len().max(1) as f64;
            for &i in idx {
                let r = &dataset.records()[i];
                let p = model.project_all(&r.views);
                let f = model.interaction_from_projections(r.category, &p)
                    + model.linear_term(&r.views, r.category).expect("validated record");
                coef[i] = scale * (f - r.rating);
                projections[i] = p;
            }
        }
        Evaluation { projections, coef }
    }
}

/// `p_V ⊗ ... ⊗ p_1`, optionally leaving out one view.
fn reverse_kron(projections: &[Vec<f64>], skip: Option<usize>) -> Vec<f64> {
    let mut acc = vec![1.0];
    for (v, p) in projections.iter().enumerate().rev() {
        if Some(v) != skip {
            acc = kron_vec(&acc, p);
        }
    }
    acc
}

/// `M w` for a matrix stored row-major; equals `w^T M^T`.
fn times_transpose(m: &Matrix, w: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

fn add_scaled(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

fn records_in_order(dataset: &Dataset) -> impl Iterator<Item = (usize, &RatingRecord)> + '_ {
    dataset
        .category_index()
        .iter()
        .flatten()
        .map(move |&i| (i, &dataset.records()[i]))
}

fn phi_gradient(model: &CataModel, dataset: &Dataset, alpha: f64, ev: &Evaluation) -> Matrix {
    let g0 = matricize(model.core(), 0).expect("core has mode 0");
    let mut grad = model.phi().scale(2.0 * alpha);
    for (i, r) in records_in_order(dataset) {
        let pi = reverse_kron(&ev.projections[i], None);
        let row = times_transpose(&g0, &pi);
        add_scaled(grad.row_mut(r.category), &row, ev.coef[i]);
    }
    grad
}

fn theta_gradient(
    model: &CataModel,
    dataset: &Dataset,
    view: usize,
    alpha: f64,
    ev: &Evaluation,
) -> Matrix {
    let gv = matricize(model.core(), view + 1).expect("view mode exists");
    let mut grad = model.theta()[view].scale(2.0 * alpha);
    for (i, r) in records_in_order(dataset) {
        let pi_minus = reverse_kron(&ev.projections[i], Some(view));
        let w = kron_vec(&pi_minus, model.phi().row(r.category));
        let q = times_transpose(&gv, &w);
        let c = ev.coef[i];
        add_scaled(grad.row_mut(0), &q, c);
        for (j, x) in r.views[view].iter() {
            add_scaled(grad.row_mut(j + 1), &q, c * x);
        }
    }
    grad
}

fn core_gradient(model: &CataModel, dataset: &Dataset, alpha: f64, ev: &Evaluation) -> DenseTensor {
    let mut vec_grad = vec![0.0; model.core().len()];
    for (i, r) in records_in_order(dataset) {
        let pi = reverse_kron(&ev.projections[i], None);
        let w = kron_vec(&pi, model.phi().row(r.category));
        add_scaled(&mut vec_grad, &w, ev.coef[i]);
    }
    let mut grad = fold(model.dims().ranks.clone(), &vec_grad).expect("core shape");
    add_scaled(grad.data_mut(), model.core().data(), 2.0 * alpha);
    grad
}

fn d_gradient(model: &CataModel, dataset: &Dataset, config: &TrainConfig, ev: &Evaluation) -> Matrix {
    let dims = model.dims();
    let c_count = dims.categories();
    let offsets = dims.features.view_offsets();
    let mut grad = d_regularizer_gradient(model.d(), dims.view_dims(), config);
    for (i, r) in records_in_order(dataset) {
        let coef = ev.coef[i];
        for (sv, off) in r.views.iter().zip(&offsets) {
            for (j, x) in sv.iter() {
                grad.data_mut()[(off + j) * c_count + r.category] += coef * x;
            }
        }
    }
    grad
}

fn d_regularizer_gradient(d: &Matrix, partition: &[usize], config: &TrainConfig) -> Matrix {
    match config.variant {
        Variant::Cata => d.scale(2.0 * config.beta),
        Variant::CataG => {
            let norms = block_norms(d, partition);
            let mut g = Matrix::zeros(d.rows(), d.cols());
            for (c, row_norms) in norms.iter().enumerate() {
                let mut start = 0;
                for (&len, &norm) in partition.iter().zip(row_norms) {
                    let s = config.beta / norm.max(GROUP_NORM_EPS);
                    for r in start..start + len {
                        g.set(r, c, s * d.get(r, c));
                    }
                    start += len;
                }
            }
            g
        }
    }
}

pub fn grad_phi(model: &CataModel, dataset: &Dataset, config: &TrainConfig) -> Result<Matrix> {
    check_dataset(model, dataset)?;
    let ev = Evaluation::new(model, dataset);
    Ok(phi_gradient(model, dataset, config.alpha, &ev))
}

pub fn grad_theta(
    model: &CataModel,
    dataset: &Dataset,
    view: usize,
    config: &TrainConfig,
) -> Result<Matrix> {
    check_dataset(model, dataset)?;
    if view >= model.dims().num_views() {
        return Err(CataError::invalid(format!("view {view} out of range")));
    }
    let ev = Evaluation::new(model, dataset);
    Ok(theta_gradient(model, dataset, view, config.alpha, &ev))
}

pub fn grad_core(model: &CataModel, dataset: &Dataset, config: &TrainConfig) -> Result<DenseTensor> {
    check_dataset(model, dataset)?;
    let ev = Evaluation::new(model, dataset);
    Ok(core_gradient(model, dataset, config.alpha, &ev))
}

pub fn grad_d(model: &CataModel, dataset: &Dataset, config: &TrainConfig) -> Result<Matrix> {
    check_dataset(model, dataset)?;
    let ev = Evaluation::new(model, dataset);
    Ok(d_gradient(model, dataset, config, &ev))
}

/// One parameter block, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Phi,
    Theta(usize),
    Core,
    D,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Phi => f.write_str("phi"),
            Block::Theta(v) => write!(f, "theta_{}", v + 1),
            Block::Core => f.write_str("core"),
            Block::D => f.write_str("d"),
        }
    }
}

/// Update order: Phi, Theta_1..Theta_V, core, D.
pub fn block_order(num_views: usize) -> Vec<Block> {
    let mut b = vec![Block::Phi];
    b.extend((0..num_views).map(Block::Theta));
    b.push(Block::Core);
    b.push(Block::D);
    b
}

pub fn block_data_mut(model: &mut CataModel, block: Block) -> &mut [f64] {
    match block {
        Block::Phi => model.phi_data_mut(),
        Block::Theta(v) => model.theta_data_mut(v),
        Block::Core => model.core_data_mut(),
        Block::D => model.d_data_mut(),
    }
}

pub fn block_data(model: &CataModel, block: Block) -> &[f64] {
    match block {
        Block::Phi => model.phi().data(),
        Block::Theta(v) => model.theta()[v].data(),
        Block::Core => model.core().data(),
        Block::D => model.d().data(),
    }
}

/// Analytic gradient of one block, flattened in the block's storage order.
pub fn block_gradient(
    model: &CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
    block: Block,
) -> Result<Vec<f64>> {
    check_dataset(model, dataset)?;
    let ev = Evaluation::new(model, dataset);
    Ok(block_gradient_with(model, dataset, config, block, &ev))
}

fn block_gradient_with(
    model: &CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
    block: Block,
    ev: &Evaluation,
) -> Vec<f64> {
    match block {
        Block::Phi => phi_gradient(model, dataset, config.alpha, ev).into_data(),
        Block::Theta(v) => theta_gradient(model, dataset, v, config.alpha, ev).into_data(),
        Block::Core => core_gradient(model, dataset, config.alpha, ev).into_data(),
        Block::D => d_gradient(model, dataset, config, ev).into_data(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    /// Accepted step size per block in update order; 0 when the block was restored.
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective before the first iteration, then after each iteration.
    pub objective_trace: Vec<f64>,
    pub final_objective: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
    pub block_names: Vec<String>,
    pub iterations: Vec<IterationLog>,
}

impl TrainReport {
    /// Trace as CSV: `iteration,objective,step_<block>...`; row 0 is the initial objective.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective");
        for name in &self.block_names {
            out.push_str(",step_");
            out.push_str(name);
        }
        out.push('\n');
        out.push_str(&format!("0,{}", self.objective_trace[0]));
        for _ in &self.block_names {
            out.push(',');
        }
        out.push('\n');
        for it in &self.iterations {
            out.push_str(&format!("{},{}", it.iteration, it.objective));
            for s in &it.steps {
                out.push_str(&format!(",{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Gradient step on one block. With line search the step is halved until the
/// objective does not increase, and the block is restored if no step works.
/// Returns the accepted step (0 if restored) and the new objective.
fn step_block(
    model: &mut CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
    block: Block,
    current: f64,
) -> (f64, f64) {
    let ev = Evaluation::new(model, dataset);
    let grad = block_gradient_with(model, dataset, config, block, &ev);
    let saved = block_data(model, block).to_vec();
    let mut eta = config.eta;
    let attempts = if config.line_search { MAX_HALVINGS + 1 } else { 1 };
    for _ in 0..attempts {
        for ((x, &x0), &g) in block_data_mut(model, block).iter_mut().zip(&saved).zip(&grad) {
            *x = x0 - eta * g;
        }
        let obj = data_loss_unchecked(model, dataset) + regularizer(model, config);
        if !config.line_search || obj <= current {
            return (eta, obj);
        }
        eta *= 0.5;
    }
    block_data_mut(model, block).copy_from_slice(&saved);
    (0.0, current)
}

/// Trains from an `N(0, init_sigma)` initialization drawn with `config.seed`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(CataModel, TrainReport)> {
    config.validate()?;
    let dims = config.model_dims(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = CataModel::random(dims, config.init_sigma, &mut rng)?;
    train_from(model, dataset, config)
}

/// Runs alternating block updates starting from `model`.
pub fn train_from(
    mut model: CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(CataModel, TrainReport)> {
    config.validate()?;
    check_dataset(&model, dataset)?;
    if model.dims().ranks != config.ranks {
        return Err(CataError::invalid(format!(
            "model ranks {:?} differ from configured ranks {:?}",
            model.dims().ranks,
            config.ranks
        )));
    }
    let start = Instant::now();
    let blocks = block_order(model.dims().num_views());
    let mut current = objective(&model, dataset, config)?;
    if !current.is_finite() {
        return Err(CataError::Diverged {
            iteration: 0,
            last_objective: current,
        });
    }
    let mut trace = vec![current];
    let mut iterations = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iters {
        let previous = current;
        let mut steps = Vec::with_capacity(blocks.len());
        for &block in &blocks {
            let (eta, obj) = step_block(&mut model, dataset, config, block, current);
            steps.push(eta);
            current = obj;
        }
        if !current.is_finite() || !model.is_finite() {
            return Err(CataError::Diverged {
                iteration,
                last_objective: previous,
            });
        }
        trace.push(current);
        iterations.push(IterationLog {
            iteration,
            objective: current,
            steps,
        });
        let change = if previous == 0.0 {
            (previous - current).abs()
        } else {
            ((previous - current) / previous).abs()
        };
        log::debug!("iteration {iteration}: objective {current:.6e} (rel change {change:.3e})");
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let report = TrainReport {
        final_objective: current,
        iterations_run: trace.len() - 1,
        objective_trace: trace,
        converged,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        block_names: blocks.iter().map(Block::to_string).collect(),
        iterations,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Checked,
    SkippedNonsmooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub max_rel_error: f64,
    pub status: CheckStatus,
}

impl BlockCheck {
    pub fn is_skipped(&self) -> bool {
        self.status == CheckStatus::SkippedNonsmooth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub step: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    /// Largest error over blocks that were actually checked.
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| !b.is_skipped())
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub const FD_STEP: f64 = 1e-6;

/// Block below which the group norm counts as nonsmooth for checking.
pub const NONSMOOTH_BLOCK_NORM: f64 = 1e-3;

/// Discrepancy between two gradient blocks, normalized by the larger of
/// their max-norms. Two zero blocks compare as 0.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central finite differences of the objective with respect to one block.
pub fn numeric_block_gradient(
    model: &CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
    block: Block,
    step: f64,
) -> Result<Vec<f64>> {
    check_dataset(model, dataset)?;
    let mut m = model.clone();
    let n = block_data(&m, block).len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let x0 = block_data(&m, block)[k];
        block_data_mut(&mut m, block)[k] = x0 + step;
        let up = objective(&m, dataset, config)?;
        block_data_mut(&mut m, block)[k] = x0 - step;
        let down = objective(&m, dataset, config)?;
        block_data_mut(&mut m, block)[k] = x0;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Compares every analytic block gradient at `model` with finite differences.
pub fn grad_check_at(
    model: &CataModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<BlockCheck>> {
    let nonsmooth = config.variant == Variant::CataG
        && block_norms(model.d(), model.dims().view_dims())
            .iter()
            .flatten()
            .any(|&n| n < NONSMOOTH_BLOCK_NORM);
    block_order(model.dims().num_views())
        .into_iter()
        .map(|block| {
            if block == Block::D && nonsmooth {
                return Ok(BlockCheck {
                    block: block.to_string(),
                    max_rel_error: 0.0,
                    status: CheckStatus::SkippedNonsmooth,
                });
            }
            let a = block_gradient(model, dataset, config, block)?;
            let n = numeric_block_gradient(model, dataset, config, block, FD_STEP)?;
            Ok(BlockCheck {
                block: block.to_string(),
                max_rel_error: relative_error(&a, &n),
                status: CheckStatus::Checked,
            })
        })
        .collect()
}

/// Random sparse dataset with `N(0, 1)` ratings; category sizes in `0..=6`
/// with at least one record overall.
pub fn random_dataset<R: Rng>(dims: &ModelDims, rng: &mut R) -> Dataset {
    let mut records = Vec::new();
    for c in 0..dims.categories() {
        let n = rng.random_range(0..=6);
        for _ in 0..n {
            records.push(random_record(dims, c, rng));
        }
    }
    if records.is_empty() {
        records.push(random_record(dims, 0, rng));
    }
    Dataset::new(dims.features.clone(), records).expect("generated records are valid")
}

fn random_record<R: Rng>(dims: &ModelDims, category: usize, rng: &mut R) -> RatingRecord {
    let views = dims
        .view_dims()
        .iter()
        .map(|&n| {
            let mut idx = Vec::new();
            let mut val = Vec::new();
            for i in 0..n {
                if rng.random_bool(0.6) {
                    idx.push(i);
                    val.push(rng.random_range(-1.0..1.0));
                }
            }
            SparseVec::new(n, idx, val).expect("sorted indices")
        })
        .collect();
    let rating = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    RatingRecord {
        category,
        views,
        rating,
    }
}

/// Runs `trials` random (model, dataset) draws and reports per-block maxima.
/// Draws come from `config.seed`.
pub fn grad_check(dims: &ModelDims, config: &TrainConfig, trials: usize) -> Result<GradCheckReport> {
    if config.ranks != dims.ranks {
        return Err(CataError::invalid("config ranks differ from dims ranks"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut blocks: Vec<BlockCheck> = block_order(dims.num_views())
        .into_iter()
        .map(|b| BlockCheck {
            block: b.to_string(),
            max_rel_error: 0.0,
            status: CheckStatus::Checked,
        })
        .collect();
    let mut checked_d = false;
    for _ in 0..trials {
        let model = CataModel::random(dims.clone(), 0.5, &mut rng)?;
        let dataset = random_dataset(dims, &mut rng);
        for (acc, res) in blocks.iter_mut().zip(grad_check_at(&model, &dataset, config)?) {
            if res.is_skipped() {
                continue;
            }
            if acc.block == "d" {
                checked_d = true;
            }
            acc.max_rel_error = acc.max_rel_error.max(res.max_rel_error);
        }
    }
    if trials > 0 && !checked_d {
        if let Some(d) = blocks.last_mut() {
            d.status = CheckStatus::SkippedNonsmooth;
        }
    }
    Ok(GradCheckReport {
        trials,
        step: FD_STEP,
        blocks,
    })
}
