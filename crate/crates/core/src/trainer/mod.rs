//! Adversarial training: replay histories, the joint generator update and
//! the four discriminator updates, the epoch loop, checkpoints and resume.

mod buffer;
mod config;
mod run;
mod state;
mod step;

pub use buffer::{FakePair, FrameOrigin, ReplayBuffer};
pub use config::TrainConfig;
pub use run::{checkpoint_path, train, TrainData, TrainOutcome, CHECKPOINT_DIR, LOSS_LOG_FILE};
pub use state::{CheckpointHeader, ModelKind, PoolHeader, TemporalCritics, TrainState};
pub use step::Sample;
