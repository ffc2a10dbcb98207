//! The residual lifting regressor: dense layers, batch normalization, ReLU,
//! inverted dropout and skip connections, with hand-written forward and
//! backward passes and a per-unit max-norm projection.

mod layers;
mod network;

pub use layers::{BatchNorm, Dense, ResidualBlock, Stage};
pub use network::{Architecture, Flags, ForwardCache, Gradients, LiftingNetwork, Mode, StageCache};
