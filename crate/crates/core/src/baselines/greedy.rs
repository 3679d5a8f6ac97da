use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gridworld::{Cell, Env, EventField, Seconds, StepOutcome, World};
use crate::policy::Controller;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// EMA weight λ of each new rate observation.
    pub smoothing: f64,
    /// `t_d` assumed for never-visited cells.
    pub horizon: f64,
    /// When false, each cell's expected count is capped at its bound.
    pub assume_unbounded: bool,
    /// Starting estimate for every free cell. A positive value makes the
    /// agent visit unseen cells before trusting its estimates.
    pub initial_rate: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { smoothing: 0.2, horizon: 1000.0, assume_unbounded: true, initial_rate: 0.05 }
    }
}

/// Learned per-cell event probability per second.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimateTable {
    pub p_hat: Vec<f64>,
    pub last_obs: Vec<Seconds>,
}

impl RateEstimateTable {
    pub fn new(world: &World, initial_rate: f64) -> Self {
        let mut p_hat = vec![0.0; world.map.len()];
        for &c in world.map.free_cells() {
            p_hat[c.0] = initial_rate.clamp(0.0, 1.0);
        }
        Self { p_hat, last_obs: vec![0; world.map.len()] }
    }
}

/// `p ← (1−λ) p + λ min(observed / elapsed, 1)`.
pub fn greedy_update(table: &mut RateEstimateTable, cell: Cell, observed: u32, elapsed: Seconds, now: Seconds, smoothing: f64) {
    if elapsed == 0 {
        return;
    }
    let rate = (observed as f64 / elapsed as f64).min(1.0);
    let p = &mut table.p_hat[cell.0];
    *p = (1.0 - smoothing) * *p + smoothing * rate;
    table.last_obs[cell.0] = now;
}

/// Expected events collected along the shortest path to `target`.
pub fn path_score(
    table: &RateEstimateTable,
    field: &EventField,
    world: &World,
    position: Cell,
    target: Cell,
    now: Seconds,
    cfg: &GreedyConfig,
) -> Result<(f64, usize)> {
    let path = world.path(position, target)?;
    let mut score = 0.0;
    for &c in &path {
        let td = field.since_visit(c, now).map_or(cfg.horizon, |t| t as f64);
        let mut expect = table.p_hat[c.0] * td;
        if !cfg.assume_unbounded {
            expect = expect.min(field.bound(c) as f64);
        }
        score += expect;
    }
    Ok((score, path.len()))
}

/// Highest-scoring free target; ties go to the shorter path, then the lower index.
pub fn greedy_select(
    table: &RateEstimateTable,
    field: &EventField,
    world: &World,
    position: Cell,
    now: Seconds,
    cfg: &GreedyConfig,
) -> Result<Cell> {
    let mut best = (f64::NEG_INFINITY, usize::MAX, position);
    for &target in world.map.free_cells() {
        let (score, len) = path_score(table, field, world, position, target, now, cfg)?;
        if score > best.0 || (score == best.0 && len < best.1) {
            best = (score, len, target);
        }
    }
    Ok(best.2)
}

/// The `adt-greedy` baseline as a controller.
#[derive(Debug, Clone)]
pub struct GreedyAgent {
    pub table: RateEstimateTable,
    pub config: GreedyConfig,
}

impl GreedyAgent {
    pub fn new(world: &World, config: GreedyConfig) -> Self {
        Self { table: RateEstimateTable::new(world, config.initial_rate), config }
    }
}

impl Controller for GreedyAgent {
    fn act(&mut self, env: &Env) -> Result<Cell> {
        greedy_select(&self.table, env.field(), env.world(), env.robot(), env.now(), &self.config)
    }

    fn observe(&mut self, _env: &Env, outcome: &StepOutcome) {
        for (cell, t, hits) in outcome.visits() {
            let elapsed = t.saturating_sub(self.table.last_obs[cell.0]);
            greedy_update(&mut self.table, cell, hits, elapsed, t, self.config.smoothing);
        }
    }
}
