use crate::error::Result;
use crate::gridworld::{Cell, Env, World};
use crate::policy::Controller;

/// Closed loop over every free cell; consecutive entries (and last to first)
/// are 4-adjacent, except in the single-cell case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatrolPlan {
    pub cycle: Vec<Cell>,
}

/// Boustrophedon sweep: rows top to bottom, alternating direction, joined by
/// shortest-path detours and closed with a return leg.
pub fn plan_patrol(world: &World) -> PatrolPlan {
    let map = &world.map;
    let mut order = Vec::with_capacity(map.free_cells().len());
    for y in 0..map.height() {
        let row = (0..map.width()).filter_map(|x| map.cell(x, y)).filter(|&c| map.is_free(c));
        if y % 2 == 0 {
            order.extend(row);
        } else {
            let mut r: Vec<Cell> = row.collect();
            r.reverse();
            order.extend(r);
        }
    }
    let mut cycle = vec![order[0]];
    let legs = order.iter().skip(1).chain(std::iter::once(&order[0]));
    for &next in legs {
        let here = *cycle.last().unwrap();
        let path = world.path(here, next).expect("validated maps are connected");
        cycle.extend_from_slice(&path[1..]);
    }
    // The return leg ends on the first cell, which already opens the cycle.
    if cycle.len() > 1 {
        cycle.pop();
    }
    PatrolPlan { cycle }
}

/// Walks the patrol loop one cell per decision.
#[derive(Debug, Clone)]
pub struct PatrolAgent {
    plan: PatrolPlan,
    index: usize,
}

impl PatrolAgent {
    pub fn new(world: &World) -> Self {
        Self { plan: plan_patrol(world), index: 0 }
    }

    pub fn plan(&self) -> &PatrolPlan {
        &self.plan
    }
}

impl Controller for PatrolAgent {
    fn act(&mut self, env: &Env) -> Result<Cell> {
        let cycle = &self.plan.cycle;
        if cycle[self.index] != env.robot() {
            self.index = cycle.iter().position(|&c| c == env.robot()).unwrap_or(0);
            if cycle[self.index] != env.robot() {
                return Ok(cycle[0]);
            }
        }
        self.index = (self.index + 1) % cycle.len();
        Ok(cycle[self.index])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_map, GridMap};
    use std::collections::BTreeSet;

    fn check_loop(world: &World, plan: &PatrolPlan) {
        let free: BTreeSet<Cell> = world.map.free_cells().iter().copied().collect();
        let seen: BTreeSet<Cell> = plan.cycle.iter().copied().collect();
        assert_eq!(seen, free);
        if plan.cycle.len() > 1 {
            for i in 0..plan.cycle.len() {
                let a = plan.cycle[i];
                let b = plan.cycle[(i + 1) % plan.cycle.len()];
                assert_eq!(world.map.manhattan(a, b), 1, "{a} -> {b}");
            }
        }
    }

    #[test]
    fn snake_on_open_three_by_three() {
        let world = World::new(GridMap::open(3, 3).unwrap());
        let plan = plan_patrol(&world);
        let idx: Vec<usize> = plan.cycle.iter().map(|c| c.0).collect();
        assert_eq!(idx, [0, 1, 2, 5, 4, 3, 6, 7, 8, 5, 2, 1]);
        check_loop(&world, &plan);
    }

    #[test]
    fn walled_map_is_covered() {
        let text = "\
..........
.####.....
.#........
.#..####..
....#.....
....#..#..
.......#..
..###..#..
..........
..........";
        let world = World::new(load_map(text).unwrap());
        check_loop(&world, &plan_patrol(&world));
    }

    #[test]
    fn single_cell_cycle() {
        let world = World::new(GridMap::open(1, 1).unwrap());
        assert_eq!(plan_patrol(&world).cycle, vec![Cell(0)]);
    }

    #[test]
    fn agent_resyncs_after_teleport() {
        use crate::gridworld::{EventConfig, GeneratorSpec};
        let world = World::new(GridMap::open(3, 3).unwrap());
        let mut env = Env::new(world.clone(), &EventConfig::new(GeneratorSpec::empty(), 1, 0), Cell(0)).unwrap();
        let mut agent = PatrolAgent::new(&world);
        assert_eq!(agent.act(&env).unwrap(), Cell(1));
        env.teleport(Cell(4)).unwrap();
        assert_eq!(agent.act(&env).unwrap(), Cell(3));
    }
}
