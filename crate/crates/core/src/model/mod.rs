//! Stage-1 MLP, Stage-2 aggregator, and the reward models built from them.

pub mod aggregator;
mod io;
mod linalg;
pub mod mlp;
mod optim;
mod reward;

pub use aggregator::{AggregatorFit, LinearAggregator};
pub use io::{load_model, model_from_str, model_to_string, save_model, MODEL_SCHEMA};
pub use linalg::sigmoid;
pub use mlp::{MlpConfig, MlpGradient, MlpModel, TrainingLog};
pub use optim::OptimizerKind;
pub use reward::{
    coarse_labels_of, train_cbm, train_cbm_on, train_coarse, train_coarse_on, AggregatorReport, ModelKind,
    RewardModel,
};
