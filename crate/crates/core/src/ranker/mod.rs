//! Feature fusion, candidate normalization, prediction and training.

pub mod features;
pub mod model;
pub mod optim;
pub mod train;

pub use features::{fuse, loss, mention_loss, normalize, predict, Feature, FeatureMask, FeatureVector, FusionLayer, N_FEATURES};
pub use model::{EncodedMention, MentionPass, ModelConfig, RankerModel, Weights};
pub use optim::{lr_factor, AdamW, AdamWConfig};
pub use train::{
    fusion_accuracy, fusion_loss_and_grad, learn_tokenizer, precompute_features, tally, train, train_fusion, train_model,
    EpochStats, FrozenMention, Tally, TrainConfig, TrainOutcome,
};
