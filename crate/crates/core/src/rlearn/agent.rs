use std::collections::VecDeque;
use std::sync::Arc;

use areasweep_tensor::{Network, Optimizer, OptimizerConfig, OptimizerKind, Tensor4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qnet::{build_qnetwork, NetPlan};
use super::select::{masked_argmax, masked_max};
use crate::encoding::StateTensor;
use crate::error::{config_err, Error, Result};
use crate::gridworld::Cell;
use crate::rewards::FirstStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// δ = `delta` × running mean of |TD error|.
    #[default]
    Adaptive,
    /// δ = `delta`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    #[default]
    Adam,
    Sgd,
}

/// Linear ε decay from `start` to `end` over `decay_steps` decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 0.1, end: 0.1, decay_steps: 0 }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self { start: eps, end: eps, decay_steps: 0 }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let f = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Step size of the gain estimate ρ.
    pub rho_learning_rate: f64,
    /// Step size of the network optimizer.
    pub learning_rate: f64,
    pub optimizer: OptimizerChoice,
    pub delta: f64,
    pub delta_mode: DeltaMode,
    /// EMA weight of the |TD error| tracker used by the adaptive gate.
    pub td_smoothing: f64,
    /// Target network sync period, in training steps.
    pub tau: u64,
    pub epsilon: EpsilonSchedule,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Decisions collected before the first training step.
    pub warmup_steps: u64,
    /// Decisions between training steps.
    pub train_every: u64,
    /// Decisions between random repositionings of the robot.
    pub reset_interval: u64,
    /// Decisions between restarts in a fresh environment (no visit
    /// history, new event stream); 0 never restarts.
    pub restart_interval: u64,
    pub eval_interval: u64,
    pub eval_steps: u64,
    /// Start cells per evaluation; the score is the mean DPS over them.
    pub eval_starts: usize,
    pub patience: u32,
    pub max_steps: u64,
    /// Restore the best-evaluated parameters when training ends.
    pub keep_best: bool,
    pub plan: NetPlan,
    pub first_step: FirstStep,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            rho_learning_rate: 1e-4,
            learning_rate: 1e-3,
            optimizer: OptimizerChoice::Adam,
            delta: 0.05,
            delta_mode: DeltaMode::Adaptive,
            td_smoothing: 0.01,
            tau: 500,
            epsilon: EpsilonSchedule::default(),
            batch_size: 32,
            replay_capacity: 100_000,
            warmup_steps: 1_000,
            train_every: 1,
            reset_interval: 50,
            restart_interval: 0,
            eval_interval: 20_000,
            eval_steps: 2_000,
            eval_starts: 1,
            patience: 10,
            max_steps: 500_000,
            keep_best: true,
            plan: NetPlan::Auto,
            first_step: FirstStep::Telescoped,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.rho_learning_rate, "rho_learning_rate")?;
        positive(self.learning_rate, "learning_rate")?;
        positive(self.delta, "delta")?;
        if self.tau == 0 || self.train_every == 0 || self.reset_interval == 0 || self.eval_interval == 0 || self.eval_starts == 0 {
            return Err(config_err("tau, train_every, reset_interval, eval_interval and eval_starts must be at least 1"));
        }
        for e in [self.epsilon.start, self.epsilon.end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(config_err(format!("epsilon {e} outside [0, 1]")));
            }
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(config_err("replay capacity must hold at least one batch"));
        }
        if !(0.0..=1.0).contains(&self.td_smoothing) {
            return Err(config_err("td_smoothing outside [0, 1]"));
        }
        Ok(())
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        let kind = match self.optimizer {
            OptimizerChoice::Adam => OptimizerKind::Adam,
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
        };
        OptimizerConfig { kind, learning_rate: self.learning_rate, ..OptimizerConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub s: Arc<StateTensor>,
    pub a: Cell,
    pub r: f64,
    pub s_next: Arc<StateTensor>,
}

/// Bounded FIFO transition store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Learner state: online and target networks, gain estimate and replay.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub theta: Network<f32>,
    pub theta_minus: Network<f32>,
    pub rho: f64,
    pub replay: ReplayBuffer,
    /// Training steps taken.
    pub step_count: u64,
    /// Running mean |TD error| for the adaptive gate.
    pub td_scale: f64,
    optimizer: Optimizer<f32>,
    allowed: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainDiagnostics {
    pub td_errors: Vec<f64>,
    /// Mean TD error over the gated samples, if any passed.
    pub delta_mean: Option<f64>,
    pub gated: usize,
    pub rho: f64,
    pub loss: f64,
}

impl AgentState {
    /// Fresh agent for a `c x h x w` state; `allowed` lists the free cells.
    pub fn new(h: usize, w: usize, c: usize, allowed: Vec<Cell>, cfg: &AgentConfig, rng: &mut impl Rng) -> Result<Self> {
        let theta = build_qnetwork(h, w, c, cfg.plan, rng)?;
        Ok(Self::from_network(theta, allowed, cfg))
    }

    pub fn from_network(theta: Network<f32>, mut allowed: Vec<Cell>, cfg: &AgentConfig) -> Self {
        allowed.sort();
        Self {
            theta_minus: theta.clone(),
            theta,
            rho: 0.0,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            step_count: 0,
            td_scale: 0.0,
            optimizer: Optimizer::new(cfg.optimizer_config()),
            allowed,
        }
    }

    pub fn allowed(&self) -> &[Cell] {
        &self.allowed
    }

    /// Current gate width.
    pub fn gate(&self, cfg: &AgentConfig) -> f64 {
        match cfg.delta_mode {
            DeltaMode::Fixed => cfg.delta,
            // Before any TD error is seen the gate is wide open.
            DeltaMode::Adaptive if self.step_count == 0 => f64::INFINITY,
            DeltaMode::Adaptive => cfg.delta * self.td_scale,
        }
    }

    /// `r − ρ + Q⁻(s', argmax_a Q(s', a))` for each transition.
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next: Vec<&StateTensor> = batch.iter().map(|t| t.s_next.as_ref()).collect();
        let x = Tensor4::stack(&next)?;
        let online = self.theta.forward(&x)?;
        let target = self.theta_minus.forward(&x)?;
        let plane = online.shape().sample_len();
        batch
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let a = masked_argmax(online.sample(j), &self.allowed)?;
                Ok(t.r - self.rho + target.data()[j * plane + a.0] as f64)
            })
            .collect()
    }

    /// One regression step on `batch`, then the gated update of ρ and the
    /// periodic target sync. TD errors and gating use the pre-step parameters.
    pub fn train_on(&mut self, batch: &[&Transition], cfg: &AgentConfig) -> Result<TrainDiagnostics> {
        let y = self.targets(batch)?;
        let states: Vec<&StateTensor> = batch.iter().map(|t| t.s.as_ref()).collect();
        let x = Tensor4::stack(&states)?;
        let q = self.theta.forward_train(&x)?;
        let plane = q.shape().sample_len();
        let gate = self.gate(cfg);
        let n = batch.len();
        let mut grad = Tensor4::<f32>::zeros(q.shape());
        let mut td = Vec::with_capacity(n);
        let mut gated_sum = 0.0;
        let mut gated = 0;
        let mut loss = 0.0;
        for (j, t) in batch.iter().enumerate() {
            let row = q.sample(j);
            let q_sa = row[t.a.0] as f64;
            let e = y[j] - q_sa;
            td.push(e);
            loss += e * e / n as f64;
            grad.data_mut()[j * plane + t.a.0] = (2.0 * -e / n as f64) as f32;
            let gap = (q_sa - masked_max(row, &self.allowed)? as f64).abs();
            if gap < gate {
                gated_sum += e;
                gated += 1;
            }
        }
        self.theta.zero_grad();
        self.theta.backward(&grad)?;
        self.optimizer.step(&mut self.theta)?;

        let delta_mean = (gated > 0).then(|| gated_sum / gated as f64);
        if let Some(d) = delta_mean {
            self.rho += cfg.rho_learning_rate * d;
        }
        let mean_abs = td.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        self.td_scale = if self.step_count == 0 {
            mean_abs
        } else {
            (1.0 - cfg.td_smoothing) * self.td_scale + cfg.td_smoothing * mean_abs
        };
        self.step_count += 1;
        if self.step_count % cfg.tau == 0 {
            self.theta_minus.copy_params_from(&self.theta)?;
        }
        Ok(TrainDiagnostics { td_errors: td, delta_mean, gated, rho: self.rho, loss })
    }

    /// Samples a batch from replay and trains on it.
    pub fn train_step(&mut self, cfg: &AgentConfig, rng: &mut impl Rng) -> Result<TrainDiagnostics> {
        if self.replay.len() < cfg.batch_size {
            return Err(Error::ReplayTooSmall { have: self.replay.len(), need: cfg.batch_size });
        }
        let replay = std::mem::replace(&mut self.replay, ReplayBuffer::new(0));
        let result = {
            let batch = replay.sample(cfg.batch_size, rng);
            self.train_on(&batch, cfg)
        };
        self.replay = replay;
        result
    }
}
