use areasweep_tensor::Network;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::encoding::StateTensor;
use crate::error::{Error, Result};
use crate::gridworld::Cell;

/// Index of the largest `q` over `allowed`, lowest index on ties.
pub fn masked_argmax(q: &[f32], allowed: &[Cell]) -> Result<Cell> {
    let mut best: Option<(f32, Cell)> = None;
    for &c in allowed {
        let v = q[c.0];
        if v.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bc)) => v > b || (v == b && c < bc),
        };
        if better {
            best = Some((v, c));
        }
    }
    best.map(|(_, c)| c).or_else(|| allowed.iter().min().copied()).ok_or(Error::EmptyMask)
}

/// Largest `q` over `allowed`.
pub fn masked_max(q: &[f32], allowed: &[Cell]) -> Result<f32> {
    masked_argmax(q, allowed).map(|c| q[c.0])
}

/// ε-greedy over the free cells. `allowed` must be sorted by index for the
/// tie rule to hold.
pub fn select_action(
    net: &Network<f32>,
    state: &StateTensor,
    epsilon: f64,
    allowed: &[Cell],
    rng: &mut impl Rng,
) -> Result<Cell> {
    if allowed.is_empty() {
        return Err(Error::EmptyMask);
    }
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        return Ok(*allowed.choose(rng).expect("non-empty"));
    }
    let q = net.forward(state)?;
    masked_argmax(q.data(), allowed)
}
