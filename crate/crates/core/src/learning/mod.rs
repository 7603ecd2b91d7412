//! Learned subset ranking: features, labelled data, the classifier, its
//! training, and learning-assisted selection.

pub mod dataset;
pub mod features;
pub mod laspd;
pub mod mlp;
pub mod scg;

pub use dataset::{generate_dataset, Dataset, DatasetMeta};
pub use features::{build_features, FeatureMap, FeatureVector};
pub use laspd::{l_aspd, predict_topk, RankedSubset};
pub use mlp::{gradient_check, loss_and_grad, tansig, LossKind, MlpModel};
pub use scg::{scg_train, EpochRecord, TrainConfig, TrainingLog};
