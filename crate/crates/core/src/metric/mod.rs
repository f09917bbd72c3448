//! The metric network M, triplet losses, and the semantic rectifying network R.

mod net;
mod train;

pub use net::{
    hinge, mmtl_loss, mn_total_loss, triplet_loss_tl, unseen_representation, InputMode, MetricConfig, MetricNet, Srn,
    TripletInputs,
};
pub use train::{
    class_representation, margin_violation_rate, srn_sampling_loss, train_mn, train_srn, triplet_inputs,
    ClassRepTable, Mining, MnTrainConfig, MnTrainLog, SrnTrainConfig, SrnTrainLog,
};
