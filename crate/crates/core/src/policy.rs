//! Common driver for anything that picks target cells.

use crate::error::Result;
use crate::gridworld::{Cell, Env, Seconds, StepOutcome};

pub trait Controller {
    fn act(&mut self, env: &Env) -> Result<Cell>;

    /// Called with the outcome of every step taken on the controller's choice.
    fn observe(&mut self, _env: &Env, _outcome: &StepOutcome) {}
}

/// Steps `env` under `ctrl` until at least `horizon` simulated seconds have passed.
pub fn run_for<C: Controller + ?Sized>(env: &mut Env, ctrl: &mut C, horizon: Seconds) -> Result<()> {
    let end = env.now() + horizon;
    while env.now() < end {
        let target = ctrl.act(env)?;
        let out = env.step(target)?;
        ctrl.observe(env, &out);
    }
    Ok(())
}

/// Takes exactly `steps` decisions.
pub fn run_steps<C: Controller + ?Sized>(env: &mut Env, ctrl: &mut C, steps: u64) -> Result<()> {
    for _ in 0..steps {
        let target = ctrl.act(env)?;
        let out = env.step(target)?;
        ctrl.observe(env, &out);
    }
    Ok(())
}
