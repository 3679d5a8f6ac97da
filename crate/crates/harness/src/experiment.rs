use std::sync::Arc;

use areasweep_core::baselines::{GreedyAgent, PatrolAgent};
use areasweep_core::gridworld::{metric_adt, metric_dps, Cell, Env, EventConfig, GeneratorSpec, RunLog, World};
use areasweep_core::policy::{run_for, Controller};
use areasweep_core::rlearn::{explore_loop, AgentState, QController, TrainReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{AgentKind, AgentSection, ExperimentConfig};
use crate::error::{invalid, Result};
use crate::instance::generate_instance;
use crate::report::{ComparisonReport, InstanceRow};

/// Environment variable holding the number of parallel instance workers.
pub const WORKERS_ENV: &str = "AREASWEEP_WORKERS";

const TRAIN_EVENT_SALT: u64 = 0x7a41_0e5e;
const LEARNER_SALT: u64 = 0x1ea2_3e71;

/// Everything that defines one instance of an experiment.
#[derive(Debug, Clone)]
pub struct InstanceSetup {
    pub index: usize,
    pub seed: u64,
    pub world: Arc<World>,
    pub spec: GeneratorSpec,
    pub bound: u32,
    pub eval_start: Cell,
}

impl InstanceSetup {
    pub fn new(cfg: &ExperimentConfig, world: Arc<World>, index: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = match (&cfg.events.generate, &cfg.events.spec) {
            (Some(v), _) => generate_instance(&mut rng, &world.map, *v)?,
            (None, Some(s)) => s.clone(),
            (None, None) => return Err(invalid("events needs generate or spec")),
        };
        let longest = spec.longest_period();
        if longest > 0 && cfg.run.horizon < 20 * longest {
            log::warn!(
                "instance {index}: horizon {} s is shorter than 20 x the longest period ({longest} s)",
                cfg.run.horizon
            );
        }
        let eval_start = *world.map.free_cells().choose(&mut rng).expect("maps have a free cell");
        Ok(Self { index, seed, world, spec, bound: cfg.events.bound, eval_start })
    }

    /// Event stream every agent is evaluated on.
    pub fn eval_events(&self) -> EventConfig {
        EventConfig::new(self.spec.clone(), self.bound, self.seed)
    }

    /// Independent stream used for training.
    pub fn train_events(&self) -> EventConfig {
        EventConfig::new(self.spec.clone(), self.bound, self.seed ^ TRAIN_EVENT_SALT)
    }
}

/// Trains a dps-max learner on `events`; `seed` is mixed into the learner seed.
pub fn train_dps_max(
    world: &Arc<World>,
    events: &EventConfig,
    agent: &AgentSection,
    seed: u64,
) -> Result<(AgentState, TrainReport)> {
    let mut learner = agent.learner.clone();
    learner.seed = learner.seed.wrapping_add(seed ^ LEARNER_SALT);
    let mut rng = ChaCha8Rng::seed_from_u64(learner.seed);
    let map = &world.map;
    let mut state =
        AgentState::new(map.height(), map.width(), agent.encoding.channels(), map.free_cells().to_vec(), &learner, &mut rng)?;
    let report = explore_loop(world, events, &agent.encoding, &mut state, &learner)?;
    Ok((state, report))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub adt: f64,
    pub dps: f64,
    pub log: RunLog,
}

/// Runs `ctrl` for `horizon` seconds from `start`.
pub fn evaluate_controller(
    world: &Arc<World>,
    events: &EventConfig,
    start: Cell,
    horizon: u64,
    ctrl: &mut dyn Controller,
    keep_outcomes: bool,
) -> Result<Evaluation> {
    let mut env = Env::new(world.clone(), events, start)?;
    if !keep_outcomes {
        env = env.without_outcomes();
    }
    run_for(&mut env, ctrl, horizon)?;
    let log = env.into_log();
    Ok(Evaluation { adt: metric_adt(&log, log.now)?, dps: metric_dps(&log)?, log })
}

/// Builds the controller for `kind`, training first for dps-max.
pub fn make_controller(setup: &InstanceSetup, kind: AgentKind, agent: &AgentSection) -> Result<Box<dyn Controller>> {
    Ok(match kind {
        AgentKind::DpsMax => {
            let (state, report) = train_dps_max(&setup.world, &setup.train_events(), agent, setup.seed)?;
            log::info!(
                "instance {}: trained {} decisions, best eval dps {:.5}",
                setup.index,
                report.steps,
                report.best_dps
            );
            Box::new(QController::new(state.theta, agent.encoding, &setup.world))
        }
        AgentKind::AdtGreedy => Box::new(GreedyAgent::new(&setup.world, agent.greedy)),
        AgentKind::Patrol => Box::new(PatrolAgent::new(&setup.world)),
    })
}

pub fn evaluate_kind(setup: &InstanceSetup, kind: AgentKind, agent: &AgentSection, horizon: u64) -> Result<Evaluation> {
    let mut ctrl = make_controller(setup, kind, agent)?;
    evaluate_controller(&setup.world, &setup.eval_events(), setup.eval_start, horizon, ctrl.as_mut(), false)
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Every instance of `cfg`, ours (`agent.kind`) against `agent.baseline`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let world = World::new(cfg.load_map()?);
    let seeds = cfg.seeds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| invalid(format!("cannot start workers: {e}")))?;
    let rows: Vec<Result<InstanceRow>> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let setup = InstanceSetup::new(cfg, world.clone(), i, seed)?;
                let ours = evaluate_kind(&setup, cfg.agent.kind, &cfg.agent, cfg.run.horizon)?;
                let base = evaluate_kind(&setup, cfg.agent.baseline, &cfg.agent, cfg.run.horizon)?;
                Ok(InstanceRow::new(i, seed, (ours.adt, ours.dps), (base.adt, base.dps)))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport::new(cfg.agent.kind, cfg.agent.baseline, rows))
}
