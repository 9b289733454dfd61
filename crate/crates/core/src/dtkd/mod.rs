//! Two teachers trained on source images styled toward each target group,
//! distilled into one student.

pub mod batch;
pub mod config;
pub mod train;

pub use batch::{build_batch, build_sample, network_input, Group, Sample, Stream, StreamKind};
pub use config::{Ablations, LambdaMode, TrainConfig};
pub use train::{
    cluster_targets, evaluate, DomainLabels, LabeledDomain, evaluate_index, joint_epoch, predict, run, run_with, teacher_epoch, train,
    train_source_only, train_with, write_run_dir, Member, ModelTrio, Phase, RunOutput, TrainData, TrainLogRecord,
};
