//! SuperNet training, candidate retraining, distillation and grafting.

pub mod checkpoint;
pub mod graft;
pub mod infer;
pub mod loss;
pub mod sample;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointKind};
pub use graft::{graft_coefficient, graft_networks, layer_entropy, GraftConfig};
pub use infer::{evaluate, predict_video, recalibrate_bn, CandidateEvaluator, EvalVideo, SearchMetric, WindowConfig};
pub use loss::{distill_loss, loss_multihead, LossWeights};
pub use sample::{make_batch, make_training_sample, SampleConfig, ShotPool, TrainBatch, TrainSample};
pub use trainer::{
    retrain_candidate, sample_uniform_path, train_supernet, PathPolicy, SgdConfig, StepRecord, SuperNet, TrainReport,
    Trainer,
};
