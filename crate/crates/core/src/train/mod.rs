//! Objectives, optimizer, training loop, checkpoint averaging and
//! sequence-level distillation.

mod average;
mod distill;
mod loss;
mod optim;
mod trainer;


pub use average::{average_params, BestCheckpoints, RankedCheckpoint};
pub use distill::{alpha_grid, distill_corpus, tune_alpha, AlphaTuning};
pub use loss::{batch_loss, cmlm_loss, disco_loss, easy_first_training_loss, LossParts, Objective};
pub use optim::{lr_at, AdamConfig, AdamW};
pub use trainer::{train, TrainConfig, TrainEvent, TrainOutcome};
