//! Offline actor-critic on tabular MDPs.

pub mod critic;
pub mod dataset;
pub mod mdp;
pub mod trainer;

pub use critic::{expectile, fit_critics, CriticConfig, CriticTables};
pub use dataset::{generate_dataset, OfflineDataset, Transition};
pub use mdp::{evaluate_policy, gridworld, EvaluationResult, GridworldConfig, TabularMdp, TabularPolicy};
pub use trainer::{actor_gradients, awac_update, sfac_update, ActorGradients, train, TrainConfig, TrainMode, TrainOutput, TrainState};
