//! Agent files: a network blob followed by the learner scalars.
//!
//! ```text
//! magic    b"ASAG"
//! version  u32
//! network  tensor checkpoint
//! rho      f64
//! steps    u64
//! td_scale f64
//! allowed  u32 count, then u32 cell indices
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use areasweep_tensor::checkpoint::{read_network, write_network};

use super::agent::{AgentConfig, AgentState};
use crate::error::{config_err, Result};
use crate::gridworld::Cell;

const MAGIC: &[u8; 4] = b"ASAG";
const VERSION: u32 = 1;

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn write_agent(agent: &AgentState, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_network(&agent.theta, w)?;
    w.write_all(&agent.rho.to_le_bytes())?;
    w.write_all(&agent.step_count.to_le_bytes())?;
    w.write_all(&agent.td_scale.to_le_bytes())?;
    w.write_all(&(agent.allowed().len() as u32).to_le_bytes())?;
    for c in agent.allowed() {
        w.write_all(&(c.0 as u32).to_le_bytes())?;
    }
    Ok(())
}

/// Restores an agent with an empty replay and a fresh optimizer; the target
/// network starts as a copy of the online one.
pub fn read_agent(r: &mut impl Read, cfg: &AgentConfig) -> Result<AgentState> {
    if &read_array::<4>(r)? != MAGIC {
        return Err(config_err("not an agent checkpoint"));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(config_err(format!("unsupported agent checkpoint version {version}")));
    }
    let net = read_network(r)?;
    let rho = f64::from_le_bytes(read_array(r)?);
    let step_count = u64::from_le_bytes(read_array(r)?);
    let td_scale = f64::from_le_bytes(read_array(r)?);
    let n = u32::from_le_bytes(read_array(r)?) as usize;
    let mut allowed = Vec::with_capacity(n);
    for _ in 0..n {
        allowed.push(Cell(u32::from_le_bytes(read_array(r)?) as usize));
    }
    if !rho.is_finite() {
        return Err(config_err("checkpoint gain is not finite"));
    }
    let mut agent = AgentState::from_network(net, allowed, cfg);
    agent.rho = rho;
    agent.step_count = step_count;
    agent.td_scale = td_scale;
    Ok(agent)
}

pub fn save_agent(agent: &AgentState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_agent(agent, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_agent(path: impl AsRef<Path>, cfg: &AgentConfig) -> Result<AgentState> {
    read_agent(&mut BufReader::new(File::open(path)?), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlearn::select_action;
    use areasweep_tensor::{SampleShape, Tensor4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_keeps_greedy_actions() {
        let cfg = AgentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let allowed: Vec<Cell> = (0..100).filter(|i| i % 7 != 3).map(Cell).collect();
        let mut agent = AgentState::new(10, 10, 3, allowed, &cfg, &mut rng).unwrap();
        agent.rho = 0.0123;
        agent.step_count = 42;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.bin");
        save_agent(&agent, &path).unwrap();
        let back = load_agent(&path, &cfg).unwrap();
        assert_eq!(back.rho, agent.rho);
        assert_eq!(back.step_count, 42);
        assert_eq!(back.allowed(), agent.allowed());
        for _ in 0..100 {
            let data: Vec<f32> = (0..300).map(|_| rng.gen()).collect();
            let s = Tensor4::from_vec(SampleShape::new(3, 10, 10).batch(1), data).unwrap();
            let a = select_action(&agent.theta, &s, 0.0, agent.allowed(), &mut rng).unwrap();
            let b = select_action(&back.theta, &s, 0.0, back.allowed(), &mut rng).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn garbage_is_rejected() {
        let cfg = AgentConfig::default();
        assert!(read_agent(&mut &b"ASQN\x01\0\0\0"[..], &cfg).is_err());
        assert!(read_agent(&mut &b"ASAG"[..], &cfg).is_err());
    }
}
