//! From-scratch deep RL stack: dense networks with hand-derived
//! reverse-mode gradients, a ring replay buffer, soft actor-critic, and
//! binary checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod replay;
pub mod sac;

pub use checkpoint::{load, save, CheckpointError};
pub use mlp::{Adam, Mlp, MlpGrads, ScalarAdam};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{soft_update, train_bandit, Sac, SacConfig, UpdateStats};
