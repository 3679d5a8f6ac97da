//! Deep R-learning on the encoder-decoder Q-network, with tabular
//! counterparts used as oracles.

mod agent;
mod checkpoint;
mod explore;
mod gridsmdp;
mod qnet;
mod select;
mod tabular;

pub use agent::{
    AgentConfig, AgentState, DeltaMode, EpsilonSchedule, OptimizerChoice, ReplayBuffer, TrainDiagnostics, Transition,
};
pub use checkpoint::{load_agent, read_agent, save_agent, write_agent};
pub use explore::{evaluate, explore_loop, random_free_cell, EvalRecord, QController, TrainReport};
pub use gridsmdp::{GridPolicyController, GridState, TwoEventGrid};
pub use qnet::{build_qnetwork, build_qnetwork_typed, qnetwork_specs, NetPlan};
pub use select::{masked_argmax, masked_max, select_action};
pub use tabular::{
    enumerate_optimal_gain, random_smdp, recurrent_class_rates, simulate_policy, smdp_value_iteration,
    tabular_r_learning, Outcome, SmdpSolution, TabularConfig, TabularResult, TabularSMDP,
};
