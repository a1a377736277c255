//! Fitting the closure network to coarse trajectories.

pub mod adam;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod tape;

pub use adam::AdamState;
pub use fit::{train, train_from, TrainConfig, TrainReport};
pub use gradcheck::{compare_gradients, finite_diff_check, random_instance, seeded_instance, GradCheckReport, DEFAULT_ABS_FLOOR, DEFAULT_EPS, DEFAULT_TOLERANCE};
pub use loss::trajectory_loss;
pub use tape::{batch_loss, grad, run_loss, run_loss_and_grad, GradientTape};
