use std::io::Write;
use std::sync::Arc;

use areasweep_tensor::Network;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{AgentConfig, AgentState, Transition};
use super::select::{masked_argmax, select_action};
use crate::encoding::{encode_state, EncodingConfig};
use crate::error::Result;
use crate::gridworld::{metric_dps, Cell, Env, EventConfig, World};
use crate::policy::{run_steps, Controller};
use crate::rewards::RewardShaper;

const RESTART_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Greedy controller over a trained network.
#[derive(Debug, Clone)]
pub struct QController {
    pub net: Network<f32>,
    pub encoding: EncodingConfig,
    allowed: Vec<Cell>,
}

impl QController {
    pub fn new(net: Network<f32>, encoding: EncodingConfig, world: &World) -> Self {
        Self { net, encoding, allowed: world.map.free_cells().to_vec() }
    }
}

impl Controller for QController {
    fn act(&mut self, env: &Env) -> Result<Cell> {
        let s = encode_state(env, &self.encoding);
        let q = self.net.forward(&s)?;
        masked_argmax(q.data(), &self.allowed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Decisions taken when the evaluation ran.
    pub step: u64,
    pub rho: f64,
    pub mean_td: f64,
    pub dps: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub steps: u64,
    pub train_steps: u64,
    pub evals: Vec<EvalRecord>,
    pub best_dps: f64,
    /// Decision counts at which the robot was repositioned.
    pub resets: Vec<u64>,
    /// Decision counts at which a fresh environment was started.
    pub restarts: Vec<u64>,
}

impl TrainReport {
    /// Columns `step,rho,mean_td,eval_dps`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,rho,mean_td,eval_dps")?;
        for e in &self.evals {
            writeln!(out, "{},{},{},{}", e.step, e.rho, e.mean_td, e.dps)?;
        }
        Ok(())
    }
}

/// Runs `steps` greedy decisions from `start` in a fresh environment and returns the DPS.
pub fn evaluate(
    net: &Network<f32>,
    world: &Arc<World>,
    events: &EventConfig,
    encoding: &EncodingConfig,
    start: Cell,
    steps: u64,
) -> Result<f64> {
    let mut env = Env::new(world.clone(), events, start)?.without_outcomes();
    let mut ctrl = QController::new(net.clone(), *encoding, world);
    run_steps(&mut env, &mut ctrl, steps)?;
    metric_dps(env.log())
}

/// Trains `agent` with ε-greedy rollouts, random repositioning every
/// `reset_interval` decisions, optional fresh restarts and greedy evaluations every `eval_interval`
/// decisions, stopping after `patience` evaluations without improvement or at
/// `max_steps`. The reward tracker spans the whole run.
pub fn explore_loop(
    world: &Arc<World>,
    events: &EventConfig,
    encoding: &EncodingConfig,
    agent: &mut AgentState,
    cfg: &AgentConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    encoding.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let free = world.map.free_cells().to_vec();
    let start = *free.choose(&mut rng).expect("maps have a free cell");
    let mut env = Env::new(world.clone(), events, start)?.without_outcomes();
    let eval_events = EventConfig { seed: events.seed ^ 0x5eed_e7a1, ..events.clone() };
    let eval_starts: Vec<Cell> = (0..cfg.eval_starts).map(|_| *free.choose(&mut rng).expect("non-empty")).collect();

    let mut shaper = RewardShaper::new(cfg.first_step);
    let mut report = TrainReport { best_dps: f64::NEG_INFINITY, ..Default::default() };
    let mut best: Option<Network<f32>> = None;
    let mut stale = 0u32;
    let mut td_window = (0.0, 0usize);
    let mut s = Arc::new(encode_state(&env, encoding));

    for step in 1..=cfg.max_steps {
        if step > 1 && cfg.restart_interval > 0 && (step - 1) % cfg.restart_interval == 0 {
            let round = (step - 1) / cfg.restart_interval;
            let fresh = EventConfig { seed: events.seed.wrapping_add(round.wrapping_mul(RESTART_SALT)), ..events.clone() };
            env = Env::new(world.clone(), &fresh, *free.choose(&mut rng).expect("non-empty"))?.without_outcomes();
            s = Arc::new(encode_state(&env, encoding));
            report.restarts.push(step - 1);
        } else if step > 1 && (step - 1) % cfg.reset_interval == 0 {
            env.teleport(*free.choose(&mut rng).expect("non-empty"))?;
            s = Arc::new(encode_state(&env, encoding));
            report.resets.push(step - 1);
        }
        let eps = cfg.epsilon.at(step - 1);
        let a = select_action(&agent.theta, &s, eps, agent.allowed(), &mut rng)?;
        let out = env.step(a)?;
        let r = shaper.push(out.detections, out.duration)?;
        let s_next = Arc::new(encode_state(&env, encoding));
        agent.replay.push(Transition { s: s.clone(), a, r, s_next: s_next.clone() });
        s = s_next;

        if step >= cfg.warmup_steps && step % cfg.train_every == 0 && agent.replay.len() >= cfg.batch_size {
            let d = agent.train_step(cfg, &mut rng)?;
            td_window.0 += d.td_errors.iter().sum::<f64>() / d.td_errors.len() as f64;
            td_window.1 += 1;
        }
        report.steps = step;

        if step % cfg.eval_interval == 0 {
            let mut dps = 0.0;
            for &start in &eval_starts {
                dps += evaluate(&agent.theta, world, &eval_events, encoding, start, cfg.eval_steps)?;
            }
            dps /= eval_starts.len() as f64;
            let mean_td = if td_window.1 > 0 { td_window.0 / td_window.1 as f64 } else { 0.0 };
            td_window = (0.0, 0);
            log::debug!("step {step}: rho {:.5} eval dps {dps:.5}", agent.rho);
            report.evals.push(EvalRecord { step, rho: agent.rho, mean_td, dps });
            if dps > report.best_dps {
                report.best_dps = dps;
                stale = 0;
                if cfg.keep_best {
                    best = Some(agent.theta.clone());
                }
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    if let Some(net) = best {
        agent.theta = net;
        agent.theta_minus.copy_params_from(&agent.theta)?;
    }
    report.train_steps = agent.step_count;
    Ok(report)
}

/// Uniformly random free cell.
pub fn random_free_cell(world: &World, rng: &mut impl Rng) -> Cell {
    *world.map.free_cells().choose(rng).expect("maps have a free cell")
}
