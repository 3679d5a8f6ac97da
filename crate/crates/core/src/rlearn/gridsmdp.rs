use std::collections::HashMap;
use std::sync::Arc;

use super::tabular::{Outcome, TabularSMDP};
use crate::error::{config_err, Result};
use crate::gridworld::{metric_dps, BinomialSite, Cell, Env, EventConfig, GeneratorSpec, GridMap, World};
use crate::policy::{run_for, Controller};

/// Decision state: robot cell index into `decision_cells` and the two
/// event flags.
pub type GridState = (usize, bool, bool);

/// A grid with two binomial event sites (bound 1), reduced to a decision
/// process whose actions move between the two sites and the central cell.
/// Transition laws are derived tick by tick.
#[derive(Debug, Clone)]
pub struct TwoEventGrid {
    pub smdp: TabularSMDP,
    pub world: Arc<World>,
    pub events: EventConfig,
    /// Site A, site B, centre.
    pub decision_cells: [Cell; 3],
    pub states: Vec<GridState>,
    /// `(centre, no events)`.
    pub start: usize,
}

impl TwoEventGrid {
    /// The 3x3 instance with events in corners (0,0) and (2,2).
    pub fn new(p_a: f64, p_b: f64) -> Result<Self> {
        let sites = [BinomialSite { x: 0, y: 0, p: p_a }, BinomialSite { x: 2, y: 2, p: p_b }];
        Self::with_sites(GridMap::open(3, 3)?, sites)
    }

    /// Any map with two binomial sites; decisions move between the sites and
    /// the map's central cell, which must be free and distinct from both.
    pub fn with_sites(map: GridMap, sites: [BinomialSite; 2]) -> Result<Self> {
        for s in &sites {
            if !(s.p > 0.0 && s.p < 1.0) {
                return Err(config_err("event probabilities must lie in (0, 1)"));
            }
        }
        let free = |x: usize, y: usize| map.cell(x, y).filter(|&c| map.is_free(c));
        let (cx, cy) = (map.width() / 2, map.height() / 2);
        let cells = match (free(sites[0].x, sites[0].y), free(sites[1].x, sites[1].y), free(cx, cy)) {
            (Some(a), Some(b), Some(c)) if a != b && a != c && b != c => [a, b, c],
            _ => return Err(config_err("sites and the central cell must be three distinct free cells")),
        };
        let (p_a, p_b) = (sites[0].p, sites[1].p);
        let world = World::new(map);
        let events = EventConfig::new(GeneratorSpec::Binomial { sites: sites.to_vec() }, 1, 0);

        let mut index: HashMap<GridState, usize> = HashMap::new();
        let mut states: Vec<GridState> = vec![(2, false, false)];
        index.insert(states[0], 0);
        let mut rows: Vec<Vec<Vec<Outcome>>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            let (pos, fa, fb) = states[i];
            let mut acts = Vec::with_capacity(3);
            for target in 0..3 {
                let path = world.path(cells[pos], cells[target])?;
                let visited: Vec<Cell> = if path.len() > 1 { path[1..].to_vec() } else { path.clone() };
                let mut outs = Vec::new();
                for ((na, nb, det), prob) in propagate(&visited, &cells, [p_a, p_b], fa, fb) {
                    let next = (target, na, nb);
                    let id = *index.entry(next).or_insert_with(|| {
                        states.push(next);
                        states.len() - 1
                    });
                    outs.push(Outcome { next: id, prob, detections: det, sojourn: visited.len() as u64 });
                }
                acts.push(outs);
            }
            rows.push(acts);
            i += 1;
        }
        Ok(Self { smdp: TabularSMDP::new(rows)?, world, events, decision_cells: cells, states, start: 0 })
    }

    /// State index of a robot at `robot` with events pending as given.
    pub fn state_of(&self, robot: Cell, flag_a: bool, flag_b: bool) -> Option<usize> {
        let pos = self.decision_cells.iter().position(|&c| c == robot)?;
        self.states.iter().position(|&s| s == (pos, flag_a, flag_b))
    }

    pub fn controller(&self, policy: &[usize]) -> GridPolicyController<'_> {
        GridPolicyController { grid: self, policy: policy.to_vec() }
    }

    /// DPS of `policy` in the simulator over `horizon` seconds from the centre.
    pub fn simulate(&self, policy: &[usize], horizon: u64, seed: u64) -> Result<f64> {
        let events = EventConfig { seed, ..self.events.clone() };
        let mut env = Env::new(self.world.clone(), &events, self.decision_cells[2])?.without_outcomes();
        run_for(&mut env, &mut self.controller(policy), horizon)?;
        metric_dps(env.log())
    }
}

/// Distribution over (flag A, flag B, detections) after the robot visits
/// `visited` one tick at a time.
fn propagate(visited: &[Cell], cells: &[Cell; 3], p: [f64; 2], fa: bool, fb: bool) -> Vec<((bool, bool, u32), f64)> {
    let mut dist: HashMap<(bool, bool, u32), f64> = HashMap::new();
    dist.insert((fa, fb, 0), 1.0);
    for &c in visited {
        let mut next: HashMap<(bool, bool, u32), f64> = HashMap::new();
        for (&(a, b, d), &pr) in &dist {
            let spawn_a: &[(bool, f64)] = if a { &[(true, 1.0)] } else { &[(true, p[0]), (false, 1.0 - p[0])] };
            let spawn_b: &[(bool, f64)] = if b { &[(true, 1.0)] } else { &[(true, p[1]), (false, 1.0 - p[1])] };
            for &(na, pa) in spawn_a {
                for &(nb, pb) in spawn_b {
                    let (mut na, mut nb, mut nd) = (na, nb, d);
                    if c == cells[0] && na {
                        na = false;
                        nd += 1;
                    }
                    if c == cells[1] && nb {
                        nb = false;
                        nd += 1;
                    }
                    *next.entry((na, nb, nd)).or_insert(0.0) += pr * pa * pb;
                }
            }
        }
        dist = next;
    }
    let mut out: Vec<_> = dist.into_iter().filter(|&(_, pr)| pr > 0.0).collect();
    out.sort_by(|x, y| x.0.cmp(&y.0));
    out
}

/// Plays a tabular policy in the simulator.
#[derive(Debug, Clone)]
pub struct GridPolicyController<'a> {
    grid: &'a TwoEventGrid,
    policy: Vec<usize>,
}

impl Controller for GridPolicyController<'_> {
    fn act(&mut self, env: &Env) -> Result<Cell> {
        let [a, b, _] = self.grid.decision_cells;
        let flags = (env.field().active_count(a) > 0, env.field().active_count(b) > 0);
        let s = self
            .grid
            .state_of(env.robot(), flags.0, flags.1)
            .ok_or_else(|| config_err("robot left the decision cells"))?;
        Ok(self.grid.decision_cells[self.policy[s]])
    }
}
