//! The coarse-grained equation-based model.

pub mod dynamics;
pub mod mlp;
pub mod params;
pub mod rollout;

pub use dynamics::{all_features, beta, features, node_rhs, pressure, system_rhs, BetaForm, EbmConfig, FluxScale};
pub use mlp::{phi, swish};
pub use params::{param_count, EbmParams, MLP_PARAMS};
pub use rollout::euler_rollout;
