//! Semi-Markov gridworld: maps, event processes, the stepping simulator and
//! the ADT/DPS metrics.

mod events;
mod map;
mod metrics;
mod sim;

pub use events::{
    BinomialSite, Coord, Event, EventConfig, EventField, EventGenerator, FurnitureSite, GeneratorSpec,
    PeriodicSite, Seconds,
};
pub use map::{load_map, shortest_path, Cell, GridMap, PathTable, MOVES};
pub use metrics::{metric_adt, metric_dps, write_events_csv, write_runlog_csv};
pub use sim::{Env, RunLog, StepOutcome, World};
