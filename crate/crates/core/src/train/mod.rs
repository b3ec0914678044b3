//! Losses, minibatch SGD with momentum, the training loop and the
//! finite-difference gradient checker.

mod dataset;
mod gradcheck;
mod loss;
mod sgd;
mod trainer;

pub use dataset::{denormalize_coord, normalize_coord, Dataset, Targets, KEYPOINT_HALF};
pub use gradcheck::{
    analytic_gradients, grad_check, relative_error, GradCheckConfig, GradCheckReport, Objective,
    TensorReport,
};
pub use loss::{cross_entropy_loss, mse_loss, LossKind, PROB_FLOOR};
pub use sgd::{sgd_step, sgd_step_network, sgd_update, zero_velocity};
pub use trainer::{
    batch_loss, evaluate, keypoint_errors, predict_all, train, train_step, train_with_validation,
    EpochRecord, TrainConfig, TrainLog,
};
