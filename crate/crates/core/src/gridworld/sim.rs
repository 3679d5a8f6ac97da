use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::events::{Event, EventConfig, EventField, EventGenerator, Seconds};
use super::map::{Cell, GridMap, PathTable};
use crate::error::{Error, Result};

/// A map together with its all-pairs path table. Shared by every env on the map.
#[derive(Debug)]
pub struct World {
    pub map: GridMap,
    pub paths: PathTable,
}

impl World {
    pub fn new(map: GridMap) -> Arc<Self> {
        let paths = PathTable::new(&map);
        Arc::new(Self { map, paths })
    }

    pub fn path(&self, from: Cell, to: Cell) -> Result<Vec<Cell>> {
        self.paths.path(&self.map, from, to)
    }
}

/// Result of one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Zero-based decision index `n`.
    pub decision_index: u64,
    pub path: Vec<Cell>,
    /// Detections at each path cell during this step, aligned with `path`.
    pub hits: Vec<u32>,
    pub duration: Seconds,
    pub detections: u32,
    /// Cumulative seconds at the end of the step.
    pub wallclock: Seconds,
}

impl StepOutcome {
    pub fn target(&self) -> Cell {
        *self.path.last().expect("paths are never empty")
    }

    pub fn start(&self) -> Seconds {
        self.wallclock - self.duration
    }

    /// `(cell, time the robot was there, detections)` for every tick.
    pub fn visits(&self) -> impl Iterator<Item = (Cell, Seconds, u32)> + '_ {
        let start = self.start();
        let skip = usize::from(self.path.len() > 1);
        self.path
            .iter()
            .zip(&self.hits)
            .enumerate()
            .skip(skip)
            .map(move |(i, (&c, &h))| (c, start + i.max(1) as Seconds, h))
    }
}

/// Everything that happened in one simulation.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub outcomes: Vec<StepOutcome>,
    pub events: Vec<Event>,
    pub now: Seconds,
    pub steps: u64,
    pub detections: u64,
}

impl RunLog {
    /// Total events that occurred (`m`); dropped spawns are not events.
    pub fn event_count(&self) -> usize {
        self.events.len()
    }
}

/// A robot sweeping one map under one event process.
#[derive(Debug, Clone)]
pub struct Env {
    world: Arc<World>,
    generator: EventGenerator,
    field: EventField,
    log: RunLog,
    robot: Cell,
    rng: ChaCha8Rng,
    keep_outcomes: bool,
}

impl Env {
    pub fn new(world: Arc<World>, events: &EventConfig, start: Cell) -> Result<Self> {
        if !world.map.is_free(start) {
            return Err(Error::TargetIsObstacle(start.0));
        }
        let generator = EventGenerator::new(&events.generator, &world.map)?;
        let field = EventField::new(world.map.len(), events.bound);
        Ok(Self {
            world,
            generator,
            field,
            log: RunLog::default(),
            robot: start,
            rng: ChaCha8Rng::seed_from_u64(events.seed),
            keep_outcomes: true,
        })
    }

    /// Stops retaining per-step outcomes; totals are still tracked.
    pub fn without_outcomes(mut self) -> Self {
        self.keep_outcomes = false;
        self
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn map(&self) -> &GridMap {
        &self.world.map
    }

    pub fn robot(&self) -> Cell {
        self.robot
    }

    pub fn now(&self) -> Seconds {
        self.log.now
    }

    pub fn field(&self) -> &EventField {
        &self.field
    }

    pub fn generator(&self) -> &EventGenerator {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut EventGenerator {
        &mut self.generator
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    /// Seconds since the robot was on `c` (`None` if never).
    pub fn since_visit(&self, c: Cell) -> Option<Seconds> {
        self.field.since_visit(c, self.log.now)
    }

    /// Walks the shortest path to `target`, one cell per second. Each second
    /// the process spawns first, then events in the robot's cell are detected.
    pub fn step(&mut self, target: Cell) -> Result<StepOutcome> {
        if !self.world.map.is_free(target) {
            return Err(Error::TargetIsObstacle(target.0));
        }
        let path = self.world.path(self.robot, target)?;
        let mut hits = vec![0u32; path.len()];
        let ticks: Vec<usize> = if path.len() == 1 { vec![0] } else { (1..path.len()).collect() };
        for &i in &ticks {
            self.log.now += 1;
            let now = self.log.now;
            self.robot = path[i];
            self.generator
                .spawn_tick(&self.world.map, &mut self.field, &mut self.log.events, now, &mut self.rng);
            hits[i] = self.field.detect(&mut self.log.events, self.robot, now);
            self.field.mark_visit(self.robot, now);
        }
        let detections = hits.iter().sum();
        let outcome = StepOutcome {
            decision_index: self.log.steps,
            path,
            hits,
            duration: ticks.len() as Seconds,
            detections,
            wallclock: self.log.now,
        };
        self.log.steps += 1;
        self.log.detections += detections as u64;
        if self.keep_outcomes {
            self.log.outcomes.push(outcome.clone());
        }
        Ok(outcome)
    }

    /// Places the robot at `cell` without advancing time or detecting.
    pub fn teleport(&mut self, cell: Cell) -> Result<()> {
        if !self.world.map.is_free(cell) {
            return Err(Error::TargetIsObstacle(cell.0));
        }
        self.robot = cell;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::events::{BinomialSite, GeneratorSpec, PeriodicSite};

    fn env_with(map: GridMap, spec: GeneratorSpec, bound: u32) -> Env {
        Env::new(World::new(map), &EventConfig::new(spec, bound, 5), Cell(0)).unwrap()
    }

    #[test]
    fn stay_detects_standing_event() {
        // The site fires every second; staying for one tick spawns and detects.
        let spec = GeneratorSpec::Periodic { sites: vec![PeriodicSite { x: 0, y: 0, period: 1, phase: 0 }] };
        let mut env = env_with(GridMap::open(2, 2).unwrap(), spec, 1);
        let out = env.step(Cell(0)).unwrap();
        assert_eq!(out.duration, 1);
        assert_eq!(out.detections, 1);
        assert_eq!(out.hits, vec![1]);
    }

    #[test]
    fn three_move_path_counts_spawned_events() {
        // Row of four cells; events at x=2 (fires at t=2) and x=3 (fires at t=3).
        let spec = GeneratorSpec::Periodic {
            sites: vec![
                PeriodicSite { x: 2, y: 0, period: 100, phase: 2 },
                PeriodicSite { x: 3, y: 0, period: 100, phase: 3 },
            ],
        };
        let mut env = env_with(GridMap::open(4, 1).unwrap(), spec, 1);
        let out = env.step(Cell(3)).unwrap();
        assert_eq!(out.duration, 3);
        assert_eq!(out.hits, vec![0, 0, 1, 1]);
        assert_eq!(out.detections, 2);
        assert_eq!(env.since_visit(Cell(3)), Some(0));
        assert_eq!(env.since_visit(Cell(1)), Some(2));
    }

    #[test]
    fn bound_holds_under_certain_spawns() {
        let spec = GeneratorSpec::Binomial { sites: vec![BinomialSite { x: 1, y: 1, p: 1.0 }] };
        let mut env = env_with(GridMap::open(3, 3).unwrap(), spec, 1);
        for _ in 0..10 {
            env.step(Cell(0)).unwrap();
            assert_eq!(env.field().active_count(Cell(4)), 1);
        }
        assert_eq!(env.log().event_count(), 1);
        assert_eq!(env.field().dropped(Cell(4)), 9);
    }

    #[test]
    fn teleport_is_instant_and_silent() {
        let spec = GeneratorSpec::Binomial { sites: vec![BinomialSite { x: 1, y: 0, p: 1.0 }] };
        let mut env = env_with(GridMap::open(2, 1).unwrap(), spec, 1);
        env.step(Cell(0)).unwrap();
        env.teleport(Cell(1)).unwrap();
        assert_eq!(env.now(), 1);
        assert_eq!(env.field().active_count(Cell(1)), 1);
        assert_eq!(env.log().detections, 0);
        assert!(env.teleport(Cell(5)).is_err());
    }

    #[test]
    fn visits_report_tick_times() {
        let mut env = env_with(GridMap::open(3, 1).unwrap(), GeneratorSpec::empty(), 1);
        env.step(Cell(0)).unwrap();
        let out = env.step(Cell(2)).unwrap();
        let v: Vec<_> = out.visits().map(|(c, t, _)| (c.0, t)).collect();
        assert_eq!(v, [(1, 2), (2, 3)]);
        let out = env.step(Cell(2)).unwrap();
        let v: Vec<_> = out.visits().map(|(c, t, _)| (c.0, t)).collect();
        assert_eq!(v, [(2, 4)]);
    }

    #[test]
    fn obstacle_target_rejected() {
        let map = crate::gridworld::load_map(".#\n..").unwrap();
        let mut env = env_with(map, GeneratorSpec::empty(), 1);
        assert!(matches!(env.step(Cell(1)), Err(Error::TargetIsObstacle(1))));
    }
}
