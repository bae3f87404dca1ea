//! Context-aware rating prediction with a Tucker-factorized full-order
//! interaction model over multi-view features and item categories.
//!
//! - [`tensor`]: dense tensor algebra used by everything else.
//! - [`model`]: parameters, prediction and the explicit-tensor reference.
//! - [`training`]: objective, block gradients and the trainer.
//! - [`data`]: dataset files, splits, synthetic data and statistics.
//! - [`eval`]: MAE/RMSE, grid search and repeated trials.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod training;

pub use data::{load_dataset, Dataset, PlantedSpec, SplitSpec};
pub use error::{CataError, Result};
pub use model::{CataModel, FeatureDims, ModelDims, RatingRecord, SparseVec};
pub use training::{train, TrainConfig, TrainReport, Variant};
