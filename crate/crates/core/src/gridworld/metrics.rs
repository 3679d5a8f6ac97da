use std::io::Write;

use super::events::Seconds;
use super::map::GridMap;
use super::sim::RunLog;
use crate::error::{Error, Result};

/// Average detection time: mean of `detected_at - onset`, where undetected
/// events count as detected at `now`.
pub fn metric_adt(log: &RunLog, now: Seconds) -> Result<f64> {
    if log.events.is_empty() {
        return Err(Error::NoEvents);
    }
    let total: u64 = log
        .events
        .iter()
        .map(|e| e.detected_at.unwrap_or(now.max(e.onset)) - e.onset)
        .sum();
    Ok(total as f64 / log.events.len() as f64)
}

/// Detections per second over the whole run.
pub fn metric_dps(log: &RunLog) -> Result<f64> {
    if log.now == 0 {
        return Err(Error::ZeroElapsedTime);
    }
    Ok(log.detections as f64 / log.now as f64)
}

/// Columns `n,action_x,action_y,duration_s,detections,t_n`.
pub fn write_runlog_csv<W: Write>(log: &RunLog, map: &GridMap, mut out: W) -> Result<()> {
    writeln!(out, "n,action_x,action_y,duration_s,detections,t_n")?;
    for o in &log.outcomes {
        let (x, y) = map.coords(o.target());
        writeln!(out, "{},{},{},{},{},{}", o.decision_index, x, y, o.duration, o.detections, o.wallclock)?;
    }
    Ok(())
}

/// Columns `cell_x,cell_y,onset,detected_at`; `detected_at` is empty when undetected.
pub fn write_events_csv<W: Write>(log: &RunLog, map: &GridMap, mut out: W) -> Result<()> {
    writeln!(out, "cell_x,cell_y,onset,detected_at")?;
    for e in &log.events {
        let (x, y) = map.coords(e.cell);
        match e.detected_at {
            Some(s) => writeln!(out, "{x},{y},{},{s}", e.onset)?,
            None => writeln!(out, "{x},{y},{},", e.onset)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::events::Event;
    use crate::gridworld::map::Cell;

    fn ev(onset: u64, detected_at: Option<u64>) -> Event {
        Event { cell: Cell(0), onset, detected_at }
    }

    #[test]
    fn adt_examples() {
        let mut log = RunLog { events: vec![ev(1, Some(6))], ..Default::default() };
        assert_eq!(metric_adt(&log, 6).unwrap(), 5.0);
        log.events = vec![ev(0, Some(2)), ev(3, Some(7))];
        assert_eq!(metric_adt(&log, 7).unwrap(), 3.0);
        log.events = vec![ev(10, None)];
        assert_eq!(metric_adt(&log, 25).unwrap(), 15.0);
        log.events.clear();
        assert!(matches!(metric_adt(&log, 25), Err(Error::NoEvents)));
    }

    #[test]
    fn dps_examples() {
        let mut log = RunLog { now: 100, ..Default::default() };
        assert_eq!(metric_dps(&log).unwrap(), 0.0);
        log.now = 14;
        log.detections = 7;
        assert_eq!(metric_dps(&log).unwrap(), 0.5);
        log.now = 0;
        assert!(matches!(metric_dps(&log), Err(Error::ZeroElapsedTime)));
    }

    #[test]
    fn csv_columns() {
        use crate::gridworld::{EventConfig, Env, GeneratorSpec, PeriodicSite, World};
        let map = GridMap::open(3, 1).unwrap();
        let spec = GeneratorSpec::Periodic { sites: vec![PeriodicSite { x: 2, y: 0, period: 2, phase: 0 }] };
        let mut env = Env::new(World::new(map.clone()), &EventConfig::new(spec, 1, 0), Cell(0)).unwrap();
        env.step(Cell(2)).unwrap();
        env.step(Cell(0)).unwrap();
        let mut buf = Vec::new();
        write_runlog_csv(env.log(), &map, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,action_x,action_y,duration_s,detections,t_n\n0,2,0,2,1,2\n1,0,0,2,0,4\n"
        );
        let mut buf = Vec::new();
        write_events_csv(env.log(), &map, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cell_x,cell_y,onset,detected_at\n2,0,2,2\n2,0,4,\n");
    }
}
