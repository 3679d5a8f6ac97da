use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use areasweep_core::baselines::PatrolAgent;
use areasweep_core::gridworld::{write_runlog_csv, GeneratorSpec, World};
use areasweep_core::rlearn::{enumerate_optimal_gain, load_agent, save_agent, smdp_value_iteration, QController, TwoEventGrid};
use areasweep_core::policy::Controller;
use clap::{Args, Parser, Subcommand};

use crate::config::{AgentKind, ExperimentConfig};
use crate::error::{invalid, Result};
use crate::experiment::{evaluate_controller, make_controller, run_experiment, train_dps_max, InstanceSetup};

#[derive(Debug, Parser)]
#[command(name = "areasweep", about = "Train, evaluate and compare continual area-sweeping agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment file (TOML with [map], [events], [agent], [run]).
    #[arg(long)]
    config: PathBuf,
    /// Map file overriding [map].
    #[arg(long)]
    map: Option<PathBuf>,
    /// Base seed overriding [run].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train dps-max on the first instance.
    Train {
        #[command(flatten)]
        common: Common,
        /// Diagnostics CSV (step, rho, mean TD error, eval DPS).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to save the trained agent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate one agent on the first instance for the configured horizon.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run log CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trained agent to evaluate instead of [agent] kind.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare [agent] kind against [agent] baseline on every instance.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comparison report CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coverage patrol on the first instance.
    Patrol {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the two-site gridworld decision process exactly.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(map) = &common.map {
        cfg.map.path = Some(std::env::current_dir()?.join(map));
        cfg.map.text = None;
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
        cfg.run.seeds.clear();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn first_instance(cfg: &ExperimentConfig) -> Result<InstanceSetup> {
    let world = World::new(cfg.load_map()?);
    InstanceSetup::new(cfg, world, 0, cfg.seeds()[0])
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::sink()),
    })
}

fn train(common: &Common, out: &Option<PathBuf>, checkpoint: &Option<PathBuf>) -> Result<()> {
    let cfg = load(common)?;
    let setup = first_instance(&cfg)?;
    let (state, report) = train_dps_max(&setup.world, &setup.train_events(), &cfg.agent, setup.seed)?;
    let mut w = output(out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = checkpoint {
        save_agent(&state, p)?;
    }
    println!(
        "trained {} decisions ({} updates), rho {:.6}, best eval dps {:.6}",
        report.steps, report.train_steps, state.rho, report.best_dps
    );
    Ok(())
}

fn eval(common: &Common, out: &Option<PathBuf>, checkpoint: &Option<PathBuf>) -> Result<()> {
    let cfg = load(common)?;
    let setup = first_instance(&cfg)?;
    let (name, mut ctrl) = match checkpoint {
        Some(p) => {
            let agent = load_agent(p, &cfg.agent.learner)?;
            let ctrl: Box<dyn Controller> =
                Box::new(QController::new(agent.theta, cfg.agent.encoding, &setup.world));
            ("checkpoint", ctrl)
        }
        None => (cfg.agent.kind.name(), make_controller(&setup, cfg.agent.kind, &cfg.agent)?),
    };
    report_run(&setup, &cfg, name, ctrl.as_mut(), out)
}

fn report_run(
    setup: &InstanceSetup,
    cfg: &ExperimentConfig,
    name: &str,
    ctrl: &mut dyn Controller,
    out: &Option<PathBuf>,
) -> Result<()> {
    let ev = evaluate_controller(&setup.world, &setup.eval_events(), setup.eval_start, cfg.run.horizon, ctrl, out.is_some())?;
    if out.is_some() {
        let mut w = output(out)?;
        write_runlog_csv(&ev.log, &setup.world.map, &mut w)?;
        w.flush()?;
    }
    println!("{name}: adt {:.4} s, dps {:.6}, {} decisions over {} s", ev.adt, ev.dps, ev.log.steps, ev.log.now);
    Ok(())
}

fn compare(common: &Common, out: &Option<PathBuf>) -> Result<()> {
    let cfg = load(common)?;
    let report = run_experiment(&cfg)?;
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    let t = report.dps_sign_test();
    eprintln!(
        "{} vs {}: dps {:+.2}% (sd {:.2}), adt {:+.2}% (sd {:.2}), wins {}/{} (sign test p = {:.4})",
        report.ours.name(),
        report.base.name(),
        report.dps_pct().mean,
        report.dps_pct().std,
        report.adt_pct().mean,
        report.adt_pct().std,
        t.wins,
        report.rows.len(),
        t.p_value
    );
    Ok(())
}

fn patrol(common: &Common, out: &Option<PathBuf>) -> Result<()> {
    let cfg = load(common)?;
    let setup = first_instance(&cfg)?;
    let mut ctrl = PatrolAgent::new(&setup.world);
    report_run(&setup, &cfg, AgentKind::Patrol.name(), &mut ctrl, out)
}

fn oracle(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let sites = match &cfg.events.spec {
        Some(GeneratorSpec::Binomial { sites }) if sites.len() == 2 => [sites[0].clone(), sites[1].clone()],
        _ => return Err(invalid("oracle needs events.spec with exactly two binomial sites")),
    };
    if cfg.events.bound != 1 {
        return Err(invalid("oracle models bound 1 only"));
    }
    let grid = TwoEventGrid::with_sites(cfg.load_map()?, sites)?;
    let sol = smdp_value_iteration(&grid.smdp, 1e-10)?;
    println!("rho* {:.8} detections per second over {} states", sol.rho, grid.states.len());
    if let Ok((best, _)) = enumerate_optimal_gain(&grid.smdp, 1_000_000) {
        println!("enumeration {best:.8}");
    }
    let map = &grid.world.map;
    for (i, &(pos, fa, fb)) in grid.states.iter().enumerate() {
        let at = map.coords(grid.decision_cells[pos]);
        let to = map.coords(grid.decision_cells[sol.policy[i]]);
        println!(
            "robot ({},{}) events A={} B={} -> ({},{})  h {:.6}",
            at.0, at.1, u8::from(fa), u8::from(fb), to.0, to.1, sol.h[i]
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train { common, out, checkpoint } => train(common, out, checkpoint),
        Command::Eval { common, out, checkpoint } => eval(common, out, checkpoint),
        Command::Compare { common, out } => compare(common, out),
        Command::Patrol { common, out } => patrol(common, out),
        Command::Oracle { common } => oracle(common),
    }
}

/// Parses `argv` and runs the command. Usage errors exit with 2, runtime
/// errors with 1.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
