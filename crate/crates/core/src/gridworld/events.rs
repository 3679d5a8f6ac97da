use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::map::{Cell, GridMap};
use crate::error::{config_err, Result};

/// Simulated time in whole seconds.
pub type Seconds = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub cell: Cell,
    pub onset: Seconds,
    pub detected_at: Option<Seconds>,
}

/// Undetected events per cell, the per-cell bound and robot presence times.
#[derive(Debug, Clone)]
pub struct EventField {
    active: Vec<Vec<usize>>,
    bound: Vec<u32>,
    last_visit: Vec<Option<Seconds>>,
    dropped: Vec<u64>,
}

impl EventField {
    pub fn new(cells: usize, bound: u32) -> Self {
        Self {
            active: vec![Vec::new(); cells],
            bound: vec![bound.max(1); cells],
            last_visit: vec![None; cells],
            dropped: vec![0; cells],
        }
    }

    /// Ids (into the run's event list) of undetected events at `c`.
    pub fn active(&self, c: Cell) -> &[usize] {
        &self.active[c.0]
    }

    pub fn active_count(&self, c: Cell) -> usize {
        self.active[c.0].len()
    }

    pub fn total_active(&self) -> usize {
        self.active.iter().map(Vec::len).sum()
    }

    pub fn bound(&self, c: Cell) -> u32 {
        self.bound[c.0]
    }

    pub fn set_bound(&mut self, c: Cell, bound: u32) {
        self.bound[c.0] = bound.max(1);
    }

    /// Spawns rejected because the cell was at its bound.
    pub fn dropped(&self, c: Cell) -> u64 {
        self.dropped[c.0]
    }

    pub fn total_dropped(&self) -> u64 {
        self.dropped.iter().sum()
    }

    pub fn last_visit(&self, c: Cell) -> Option<Seconds> {
        self.last_visit[c.0]
    }

    /// Seconds since the robot was last on `c`, `None` if never.
    pub fn since_visit(&self, c: Cell, now: Seconds) -> Option<Seconds> {
        self.last_visit[c.0].map(|t| now - t)
    }

    pub(crate) fn mark_visit(&mut self, c: Cell, now: Seconds) {
        self.last_visit[c.0] = Some(now);
    }

    /// Adds an event unless the cell is saturated. Returns whether it was kept.
    pub(crate) fn try_spawn(&mut self, events: &mut Vec<Event>, cell: Cell, now: Seconds) -> bool {
        if self.active[cell.0].len() >= self.bound[cell.0] as usize {
            self.dropped[cell.0] += 1;
            return false;
        }
        self.active[cell.0].push(events.len());
        events.push(Event { cell, onset: now, detected_at: None });
        true
    }

    /// Marks everything at `cell` detected. Returns the count.
    pub(crate) fn detect(&mut self, events: &mut [Event], cell: Cell, now: Seconds) -> u32 {
        let ids = std::mem::take(&mut self.active[cell.0]);
        for &id in &ids {
            events[id].detected_at = Some(now);
        }
        ids.len() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialSite {
    pub x: usize,
    pub y: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSite {
    pub x: usize,
    pub y: usize,
    pub period: u64,
    #[serde(default)]
    pub phase: i64,
}

/// An event site attached to the furniture, as an offset from its anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureSite {
    pub dx: isize,
    pub dy: isize,
    pub period: u64,
    #[serde(default)]
    pub phase: i64,
}

fn default_person_p() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

/// Declarative event process, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Binomial {
        #[serde(default)]
        sites: Vec<BinomialSite>,
    },
    Periodic {
        #[serde(default)]
        sites: Vec<PeriodicSite>,
    },
    PersonWalk {
        start: Coord,
        #[serde(default = "default_person_p")]
        p: f64,
    },
    FurnitureWalk {
        anchors: Vec<Coord>,
        sites: Vec<FurnitureSite>,
        /// Seconds between moves to the next anchor; 0 pins the furniture.
        #[serde(default)]
        relocate_every: u64,
        #[serde(default)]
        start: usize,
        /// When false, events stay at the sites of the starting anchor.
        #[serde(default = "default_true")]
        follow: bool,
    },
}

impl GeneratorSpec {
    pub fn empty() -> Self {
        GeneratorSpec::Binomial { sites: Vec::new() }
    }

    /// Longest period of any periodic site (0 for non-periodic processes).
    pub fn longest_period(&self) -> u64 {
        match self {
            GeneratorSpec::Periodic { sites } => sites.iter().map(|s| s.period).max().unwrap_or(0),
            GeneratorSpec::FurnitureWalk { sites, .. } => {
                sites.iter().map(|s| s.period).max().unwrap_or(0)
            }
            _ => 0,
        }
    }
}

fn bound_default() -> u32 {
    1
}

/// The `[events]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    #[serde(default = "bound_default")]
    pub bound: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub generator: GeneratorSpec,
}

impl EventConfig {
    pub fn new(generator: GeneratorSpec, bound: u32, seed: u64) -> Self {
        Self { bound, seed, generator }
    }
}

#[derive(Debug, Clone)]
struct Furniture {
    anchors: Vec<Cell>,
    /// `sites[anchor]` are the cells of every site for that anchor.
    sites: Vec<Vec<Cell>>,
    timing: Vec<(u64, i64)>,
    current: usize,
    home: usize,
    relocate_every: u64,
    follow: bool,
}

#[derive(Debug, Clone)]
enum Process {
    Binomial(Vec<(Cell, f64)>),
    Periodic(Vec<(Cell, u64, i64)>),
    Person { at: Cell, p: f64 },
    Furniture(Furniture),
}

/// Runtime state of an event process.
#[derive(Debug, Clone)]
pub struct EventGenerator {
    process: Process,
}

fn free_cell(map: &GridMap, x: usize, y: usize, what: &str) -> Result<Cell> {
    map.cell(x, y)
        .filter(|&c| map.is_free(c))
        .ok_or_else(|| config_err(format!("{what} at ({x}, {y}) is not a free cell")))
}

#[inline]
fn fires(now: Seconds, period: u64, phase: i64) -> bool {
    (now as i64 - phase).rem_euclid(period as i64) == 0
}

impl EventGenerator {
    pub fn new(spec: &GeneratorSpec, map: &GridMap) -> Result<Self> {
        let process = match spec {
            GeneratorSpec::Binomial { sites } => {
                let mut out = Vec::with_capacity(sites.len());
                for s in sites {
                    if !(0.0..=1.0).contains(&s.p) {
                        return Err(config_err(format!("probability {} outside [0, 1]", s.p)));
                    }
                    out.push((free_cell(map, s.x, s.y, "binomial site")?, s.p));
                }
                Process::Binomial(out)
            }
            GeneratorSpec::Periodic { sites } => {
                let mut out = Vec::with_capacity(sites.len());
                for s in sites {
                    if s.period == 0 {
                        return Err(config_err("period must be at least 1 second"));
                    }
                    out.push((free_cell(map, s.x, s.y, "periodic site")?, s.period, s.phase));
                }
                Process::Periodic(out)
            }
            GeneratorSpec::PersonWalk { start, p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(config_err(format!("probability {p} outside [0, 1]")));
                }
                Process::Person { at: free_cell(map, start.x, start.y, "person")?, p: *p }
            }
            GeneratorSpec::FurnitureWalk { anchors, sites: offsets, relocate_every, start, follow } => {
                if anchors.is_empty() {
                    return Err(config_err("furniture needs at least one anchor"));
                }
                if *start >= anchors.len() {
                    return Err(config_err(format!("start anchor {start} out of range")));
                }
                let mut cells = Vec::with_capacity(anchors.len());
                let mut sites = Vec::with_capacity(anchors.len());
                for a in anchors {
                    cells.push(free_cell(map, a.x, a.y, "furniture anchor")?);
                    let mut row = Vec::with_capacity(offsets.len());
                    for s in offsets {
                        let x = a.x.checked_add_signed(s.dx);
                        let y = a.y.checked_add_signed(s.dy);
                        let c = match (x, y) {
                            (Some(x), Some(y)) => free_cell(map, x, y, "furniture site")?,
                            _ => return Err(config_err("furniture site lies outside the map")),
                        };
                        row.push(c);
                    }
                    sites.push(row);
                }
                if offsets.iter().any(|s| s.period == 0) {
                    return Err(config_err("period must be at least 1 second"));
                }
                Process::Furniture(Furniture {
                    anchors: cells,
                    sites,
                    timing: offsets.iter().map(|s| (s.period, s.phase)).collect(),
                    current: *start,
                    home: *start,
                    relocate_every: *relocate_every,
                    follow: *follow,
                })
            }
        };
        Ok(Self { process })
    }

    /// Current person cell, for person-walk processes.
    pub fn person(&self) -> Option<Cell> {
        match &self.process {
            Process::Person { at, .. } => Some(*at),
            _ => None,
        }
    }

    /// Current furniture anchor cell, for furniture-walk processes.
    pub fn furniture(&self) -> Option<Cell> {
        match &self.process {
            Process::Furniture(f) => Some(f.anchors[f.current]),
            _ => None,
        }
    }

    /// Moves the furniture to anchor `index`.
    pub fn set_anchor(&mut self, index: usize) -> Result<()> {
        match &mut self.process {
            Process::Furniture(f) if index < f.anchors.len() => {
                f.current = index;
                Ok(())
            }
            _ => Err(config_err(format!("no furniture anchor {index}"))),
        }
    }

    /// Advances the process by one second ending at `now`. New events are
    /// appended to `events`; the returned range holds their ids.
    pub fn spawn_tick<R: Rng + ?Sized>(
        &mut self,
        map: &GridMap,
        field: &mut EventField,
        events: &mut Vec<Event>,
        now: Seconds,
        rng: &mut R,
    ) -> Range<usize> {
        let first = events.len();
        match &mut self.process {
            Process::Binomial(sites) => {
                for &(cell, p) in sites.iter() {
                    if p > 0.0 && rng.gen_bool(p) {
                        field.try_spawn(events, cell, now);
                    }
                }
            }
            Process::Periodic(sites) => {
                for &(cell, period, phase) in sites.iter() {
                    if fires(now, period, phase) {
                        field.try_spawn(events, cell, now);
                    }
                }
            }
            Process::Person { at, p } => {
                let options: Vec<Cell> = map.neighbours(*at).collect();
                if let Some(&next) = options.choose(rng) {
                    *at = next;
                }
                if rng.gen_bool(*p) {
                    field.try_spawn(events, *at, now);
                }
            }
            Process::Furniture(f) => {
                if f.relocate_every > 0 && now % f.relocate_every == 0 {
                    f.current = (f.current + 1) % f.anchors.len();
                }
                let row = if f.follow { f.current } else { f.home };
                for (i, &(period, phase)) in f.timing.iter().enumerate() {
                    if fires(now, period, phase) {
                        field.try_spawn(events, f.sites[row][i], now);
                    }
                }
            }
        }
        first..events.len()
    }
}
