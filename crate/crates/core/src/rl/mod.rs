//! Cluster-number controller: a Markov decision process over clustering
//! states, solved with a small softmax quality network and experience replay.

mod policy;
mod qlearn;
mod quality;
mod reward;
mod state;
mod train;

pub use policy::{select_action, select_action_with, PolicySchedule};
pub use qlearn::{
    q_loss, q_loss_on_tape, td_loss, train_quality, Experience, ReplayBuffer, TdTerm,
};
pub use quality::{
    init_quality, quality_forward, quality_forward_batch_on_tape, quality_forward_on_tape,
    QualityNetworkParams, NORM_EPS,
};
pub use reward::reward;
pub use state::ClusterState;
pub use train::{derive_seed, rgc_train, train_fixed_k, TrainOutcome};
