//! `stt` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or check failure, 2 I/O or format error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::monitors::{run_monitors, social_deviation_metric, MonitorOptions, MonitorReport};
use crate::plot::{plot_run, PlotOptions};
use crate::scenario::{parse_scenario, validate_scenario, Scenario};
use crate::sim::{annotate, nominal_centers, run_simulation_unchecked, SimConfig, SimTrace};
use crate::trace_io::{load_run, save_run, Overrides, RunManifest, RunStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_IO: i32 = 2;

pub const SCENARIO_COPY: &str = "scenario.yaml";
pub const REPORT_FILE: &str = "monitors.json";

/// Scenarios shipped with the tool, run by `stt demo`.
pub const SHIPPED: [(&str, &str); 3] = [
    ("eight_agents_2d", include_str!("../scenarios/eight_agents_2d.yaml")),
    ("eight_uavs_3d", include_str!("../scenarios/eight_uavs_3d.yaml")),
    ("hardware_swap", include_str!("../scenarios/hardware_swap.yaml")),
];

#[derive(Debug, Parser)]
#[command(name = "stt", version, about = "Spatiotemporal tubes for socially aware multi-agent systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario's separation and ordering assumptions.
    Validate { scenario: PathBuf },
    /// Simulate a scenario and write trace, events and manifest.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        /// Output directory; defaults to runs/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even when hard validation checks fail.
        #[arg(long)]
        force: bool,
    },
    /// Run every monitor over a saved run.
    Check {
        /// Run directory or its trace file.
        run: PathBuf,
    },
    /// Write SVG figures of a saved run.
    Plot {
        run: PathBuf,
        /// Figure directory; defaults to <run>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot times, comma-separated.
        #[arg(long, value_delimiter = ',')]
        stamps: Vec<f64>,
    },
    /// Run, check and plot the shipped scenarios.
    Demo {
        #[arg(long, default_value = "demo")]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SimFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli.command),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            e.print().ok();
            code
        }
    }
}

pub fn execute(command: Command) -> i32 {
    let outcome = match command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run {
            scenario,
            sim,
            out,
            force,
        } => cmd_run(&scenario, &sim, out.as_deref(), force).map(|(code, _)| code),
        Command::Check { run } => cmd_check(&run),
        Command::Plot { run, out, stamps } => cmd_plot(&run, out.as_deref(), stamps),
        Command::Demo { out, sim } => cmd_demo(&out, &sim),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

pub fn cmd_validate(path: &Path) -> Result<i32> {
    let sc = load_scenario(path)?;
    let report = validate_scenario(&sc);
    println!("{report}");
    Ok(if report.all_hard_pass() { EXIT_OK } else { EXIT_FAIL })
}

/// Config for `sc` with command-line overrides applied.
pub fn sim_config(sc: &Scenario, flags: &SimFlags) -> SimConfig {
    let mut cfg = SimConfig::for_scenario(sc);
    if let Some(dt) = flags.dt {
        cfg.dt = dt;
    }
    if let Some(t) = flags.t_end {
        cfg.t_end = t;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    cfg
}

fn default_out(scenario: &Path) -> PathBuf {
    let stem = scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Path::new("runs").join(stem)
}

/// Returns the exit code and the output directory.
pub fn cmd_run(scenario: &Path, flags: &SimFlags, out: Option<&Path>, force: bool) -> Result<(i32, PathBuf)> {
    let text = fs::read_to_string(scenario).map_err(|e| Error::io(scenario, e))?;
    let sc = parse_scenario(&text)?;
    let report = validate_scenario(&sc);
    if !report.all_hard_pass() && !force {
        println!("{report}");
        eprintln!("refusing to run; pass --force to override");
        return Ok((EXIT_FAIL, PathBuf::new()));
    }
    let cfg = sim_config(&sc, flags);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_out(scenario));
    let (trace, status) = match run_simulation_unchecked(&sc, &cfg) {
        Ok(t) => (t, RunStatus::Complete),
        Err(Error::Aborted { step, agent, partial }) => (*partial, RunStatus::Aborted { step, agent }),
        Err(e) => return Err(e),
    };
    let manifest = RunManifest {
        scenario_path: fs::canonicalize(scenario).unwrap_or_else(|_| scenario.to_path_buf()),
        overrides: flags.overrides(),
        output_dir: dir.clone(),
        seed: cfg.seed,
        dt: cfg.dt,
        t_end: cfg.t_end,
        record_stride: cfg.record_stride,
        integrator: cfg.integrator,
        forced: force && !report.all_hard_pass(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rows: trace.rows(),
        status: status.clone(),
    };
    save_run(&dir, &trace, &manifest)?;
    let copy = dir.join(SCENARIO_COPY);
    fs::write(&copy, &text).map_err(|e| Error::io(copy, e))?;
    match status {
        RunStatus::Complete => {
            println!("{} rows written to {}", trace.rows(), dir.display());
            Ok((EXIT_OK, dir))
        }
        RunStatus::Aborted { step, agent } => {
            eprintln!(
                "aborted at step {step}: agent {agent} left the finite range; partial trace in {}",
                dir.display()
            );
            Ok((EXIT_FAIL, dir))
        }
    }
}

/// Loads a saved run with its scenario, preferring the copy in the run directory.
pub fn load_checked_run(path: &Path) -> Result<(SimTrace, RunManifest, Scenario)> {
    let (mut trace, manifest) = load_run(path)?;
    let dir = crate::trace_io::run_dir(path);
    let copy = dir.join(SCENARIO_COPY);
    let sc = if copy.exists() {
        load_scenario(&copy)?
    } else {
        load_scenario(&manifest.scenario_path)?
    };
    if sc.agents.len() != trace.agents.len() || sc.obstacles.len() != trace.obstacles.len() {
        return Err(Error::Trace("trace does not match its scenario".into()));
    }
    annotate(&mut trace, &sc);
    Ok((trace, manifest, sc))
}

pub fn check_report(trace: &SimTrace, sc: &Scenario) -> MonitorReport {
    run_monitors(trace, sc, &MonitorOptions::default())
}

pub fn cmd_check(path: &Path) -> Result<i32> {
    let (trace, manifest, sc) = load_checked_run(path)?;
    let report = check_report(&trace, &sc);
    println!("{report}");
    let dir = crate::trace_io::run_dir(path);
    let json = dir.join(REPORT_FILE);
    let mut w = fs::File::create(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n").map_err(|e| Error::io(&json, e))?;
    if let RunStatus::Aborted { step, agent } = &manifest.status {
        println!("run aborted at step {step} (agent {agent})");
        return Ok(EXIT_FAIL);
    }
    Ok(if report.tras_pass() { EXIT_OK } else { EXIT_FAIL })
}

/// Social deviation of every agent against its goal-only run.
pub fn deviations(trace: &SimTrace, sc: &Scenario, manifest: &RunManifest) -> Result<Vec<(String, f64)>> {
    let cfg = SimConfig {
        dt: manifest.dt,
        t_end: manifest.t_end,
        seed: manifest.seed,
        record_stride: manifest.record_stride,
        integrator: manifest.integrator,
        ..SimConfig::for_scenario(sc)
    };
    let nominal = nominal_centers(sc, &cfg)?;
    Ok((0..trace.agents.len())
        .map(|k| (trace.agents[k].id.clone(), social_deviation_metric(trace, &nominal, k)))
        .collect())
}

pub fn cmd_plot(path: &Path, out: Option<&Path>, stamps: Vec<f64>) -> Result<i32> {
    let (trace, manifest, sc) = load_checked_run(path)?;
    let annotations = deviations(&trace, &sc, &manifest)?;
    for (id, d) in &annotations {
        println!("deviation {id}: {d:.6}");
    }
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| crate::trace_io::run_dir(path).join("plots"));
    let files = plot_run(&trace, &dir, &PlotOptions { stamps, annotations })?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(EXIT_OK)
}

pub fn cmd_demo(out: &Path, flags: &SimFlags) -> Result<i32> {
    let mut code = EXIT_OK;
    for (name, text) in SHIPPED {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let source = dir.join(SCENARIO_COPY);
        fs::write(&source, text).map_err(|e| Error::io(&source, e))?;
        println!("== {name}");
        let (run_code, run) = cmd_run(&source, flags, Some(&dir), false)?;
        if run_code != EXIT_OK {
            code = code.max(run_code);
            continue;
        }
        code = code.max(cmd_check(&run)?);
        code = code.max(cmd_plot(&run, None, Vec::new())?);
    }
    Ok(code)
}
