//! Teacher and student models: softmax classifiers over sentence embeddings.

mod model;
mod synthetic;
mod train;

pub use model::{
    cross_entropy, kl_div, softmax, Architecture, Classifier, Dense, SoftLabel, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use synthetic::{
    annotate, annotate_embedded, load_jsonl, read_jsonl, save_jsonl, write_jsonl, AnnotateStats,
    SyntheticExample,
};
pub use train::{
    accuracy, loss_and_grad, mean_loss, train, train_from, LossKind, Targets, TrainSpec,
    TrainSummary,
};

/// One hidden layer of 256 tanh units.
pub fn default_teacher(input_dim: usize, num_classes: usize) -> Architecture {
    Architecture::new(input_dim, vec![256], num_classes)
}

/// Linear model, used as the distillation student.
pub fn default_student(input_dim: usize, num_classes: usize) -> Architecture {
    Architecture::linear(input_dim, num_classes)
}
