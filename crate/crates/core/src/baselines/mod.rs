//! Comparison controllers: the rate-learning greedy sweeper and coverage patrol.

mod greedy;
mod patrol;

pub use greedy::{greedy_select, greedy_update, path_score, GreedyAgent, GreedyConfig, RateEstimateTable};
pub use patrol::{plan_patrol, PatrolAgent, PatrolPlan};
