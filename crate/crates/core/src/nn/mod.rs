//! Networks, optimizer and losses shared by every model in the pipeline.

mod adam;
mod loss;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use loss::{label_log_probs, one_hot, softmax_cross_entropy};
pub use mlp::{weight_decay_term, FinalActivation, Mlp, MlpConfig};
