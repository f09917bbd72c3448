//! Feature synthesis, softmax heads, the weighted ensemble, metrics and exports.

mod export;
mod heads;
mod metrics;
mod report;

pub use export::{export_representations, tensor_rows, Pca2};
pub use heads::{
    argmax_rows, combine_scores, synthesize_features, train_heads, Combine, EnsembleClassifier, FeatureSet,
    HeadConfig, HeadWeights, SoftmaxHead,
};
pub use metrics::{gzsl_metrics, harmonic_mean, per_class_accuracies, per_class_top1, PerClass};
pub use report::{EvalMode, EvalReport, Scores, CSV_HEADER};
