//! Policy-gradient engine: Gaussian policies, REINFORCE, checkpoints and
//! the loss-landscape scanner.

mod checkpoint;
mod landscape;
mod policy;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use landscape::{
    cell_loss, landscape_scan, segment_max, Landscape, LandscapeConfig, LandscapeGrid,
};
pub use policy::{gaussian_log_density, Arch, PolicyParams, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{
    derive_seed, evaluate, policy_gradient, rewards_to_go, train, Convergence, CurvePoint,
    Evaluation, L2Sp, TrainConfig, TrainReport,
};
