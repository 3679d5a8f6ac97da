//! Multi-channel grid encoding of the simulator state.

use areasweep_tensor::{Shape4, Tensor4};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::gridworld::{Env, GridMap};

/// `1 x C x H x W` state fed to the Q-network.
pub type StateTensor = Tensor4<f32>;

fn default_rate() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Decay rate α of the `exp(-α t_d)` channel, per second.
    #[serde(default = "default_rate")]
    pub uncertainty_rate: f64,
    #[serde(default)]
    pub include_person_channel: bool,
    #[serde(default)]
    pub include_furniture_channel: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { uncertainty_rate: default_rate(), include_person_channel: false, include_furniture_channel: false }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.uncertainty_rate > 0.0 && self.uncertainty_rate.is_finite()) {
            return Err(config_err(format!("uncertainty_rate must be positive, got {}", self.uncertainty_rate)));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        3 + usize::from(self.include_person_channel) + usize::from(self.include_furniture_channel)
    }

    pub fn shape(&self, map: &GridMap) -> Shape4 {
        Shape4::new(1, self.channels(), map.height(), map.width())
    }
}

/// Channels: 0 obstacles, 1 robot one-hot, 2 `exp(-α t_d)` (0 where never
/// visited), then the person and furniture one-hots when enabled.
pub fn encode_state(env: &Env, config: &EncodingConfig) -> StateTensor {
    let map = env.map();
    let shape = config.shape(map);
    let plane = shape.plane();
    let mut data = vec![0f32; shape.len()];
    for (i, v) in data[..plane].iter_mut().enumerate() {
        *v = f32::from(map.obstacles()[i]);
    }
    data[plane + env.robot().0] = 1.0;
    let decay = &mut data[2 * plane..3 * plane];
    for &c in map.free_cells() {
        if let Some(td) = env.since_visit(c) {
            decay[c.0] = (-config.uncertainty_rate * td as f64).exp() as f32;
        }
    }
    let mut next = 3;
    if config.include_person_channel {
        if let Some(p) = env.generator().person() {
            data[next * plane + p.0] = 1.0;
        }
        next += 1;
    }
    if config.include_furniture_channel {
        if let Some(f) = env.generator().furniture() {
            data[next * plane + f.0] = 1.0;
        }
    }
    Tensor4::from_vec(shape, data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_map, Cell, Coord, EventConfig, GeneratorSpec, World};

    fn env() -> Env {
        let map = load_map("...\n.#.\n...").unwrap();
        Env::new(World::new(map), &EventConfig::new(GeneratorSpec::empty(), 1, 0), Cell(0)).unwrap()
    }

    #[test]
    fn channel_layout() {
        let mut env = env();
        let cfg = EncodingConfig::default();
        let s = encode_state(&env, &cfg);
        assert_eq!(s.shape(), Shape4::new(1, 3, 3, 3));
        assert_eq!(s.at(0, 0, 1, 1), 1.0);
        assert_eq!(s.data()[..9].iter().sum::<f32>(), 1.0);
        assert_eq!(s.data()[9..18].iter().sum::<f32>(), 1.0);
        // never visited
        assert!(s.data()[18..].iter().all(|&v| v == 0.0));

        for _ in 0..50 {
            env.step(Cell(0)).unwrap();
        }
        env.step(Cell(1)).unwrap();
        let s = encode_state(&env, &cfg);
        assert_eq!(s.at(0, 1, 0, 1), 1.0);
        assert_eq!(s.at(0, 2, 0, 1), 1.0);
        let expect = (-0.02f64 * 1.0).exp() as f32;
        assert_eq!(s.at(0, 2, 0, 0), expect);
        assert_eq!(s.at(0, 2, 2, 2), 0.0);
    }

    #[test]
    fn fifty_seconds_decays_to_inverse_e() {
        let mut env = env();
        env.step(Cell(1)).unwrap();
        for _ in 0..50 {
            env.step(Cell(2)).unwrap();
        }
        let s = encode_state(&env, &EncodingConfig::default());
        assert!((s.at(0, 2, 0, 1) as f64 - (-1.0f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn person_channel_marks_person() {
        let map = GridMap::open(4, 4).unwrap();
        let spec = GeneratorSpec::PersonWalk { start: Coord { x: 2, y: 3 }, p: 0.3 };
        let env = Env::new(World::new(map), &EventConfig::new(spec, 1, 0), Cell(0)).unwrap();
        let cfg = EncodingConfig { include_person_channel: true, ..Default::default() };
        let s = encode_state(&env, &cfg);
        assert_eq!(s.shape().c, 4);
        assert_eq!(s.at(0, 3, 3, 2), 1.0);
        assert_eq!(s.data()[48..].iter().sum::<f32>(), 1.0);
        let both = EncodingConfig { include_furniture_channel: true, ..cfg };
        assert_eq!(encode_state(&env, &both).shape().c, 5);
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let cfg = EncodingConfig { uncertainty_rate: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
