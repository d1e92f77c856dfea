//! Online class-incremental learners: a linear softmax head over frozen
//! features trained with Adam under the vanilla, EWC, LwF and naive replay
//! strategies.

mod adam;
mod head;
mod run;
mod strategy;

pub use adam::{adam_step, AdamState};
pub use head::{forward, masked_argmax, masked_softmax, HeadParams, Init};
pub use run::{evaluate, run_curriculum, BufferPolicy, RunSeeds, StrategyConfig, TrainConfig};
pub use strategy::{
    consolidate_ewc, loss_and_grad, update_replay_buffer, EwcAnchor, LwfSnapshot, ReplayBuffer, StrategyState,
};
