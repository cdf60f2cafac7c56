//! On-disk run artifacts: a columnar trace, a line-delimited event log and a
//! manifest describing how to reproduce the run.
//!
//! The trace is comma-separated text. The header names every column: `t`,
//! then for each agent `<id>:sigma_i`, `<id>:rho`, `<id>:x<z>_i`, `<id>:u_i`,
//! `<id>:e1`, then for each obstacle `<id>:center_i` and `<id>:radius`. Values
//! carry 17 significant digits, which round-trips every `f64` exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{AgentTrace, Integrator, ObstacleTrace, SimEvent, SimTrace};

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The run stopped at a non-finite state; the trace is partial.
    Aborted { step: usize, agent: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_path: PathBuf,
    pub overrides: Overrides,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub integrator: Integrator,
    /// Validation failures were overridden.
    pub forced: bool,
    pub tool_version: String,
    pub rows: usize,
    pub status: RunStatus,
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // Rust parses "NaN", "inf" and "-inf"
        format!("{x}")
    }
}

pub fn trace_header(trace: &SimTrace) -> Vec<String> {
    let n = trace.dimension;
    let mut cols = vec!["t".to_string()];
    for a in &trace.agents {
        cols.extend((0..n).map(|i| format!("{}:sigma_{i}", a.id)));
        cols.push(format!("{}:rho", a.id));
        for z in 1..=a.order {
            cols.extend((0..n).map(|i| format!("{}:x{z}_{i}", a.id)));
        }
        cols.extend((0..n).map(|i| format!("{}:u_{i}", a.id)));
        cols.push(format!("{}:e1", a.id));
    }
    for o in &trace.obstacles {
        cols.extend((0..n).map(|i| format!("{}:center_{i}", o.id)));
        cols.push(format!("{}:radius", o.id));
    }
    cols
}

pub fn write_trace<W: Write>(trace: &SimTrace, mut w: W) -> std::io::Result<()> {
    let n = trace.dimension;
    writeln!(w, "{}", trace_header(trace).join(","))?;
    let mut line = String::new();
    for row in 0..trace.rows() {
        line.clear();
        line.push_str(&fmt_f64(trace.times[row]));
        let mut put = |x: f64| {
            line.push(',');
            line.push_str(&fmt_f64(x));
        };
        for a in &trace.agents {
            a.sigma[row * n..(row + 1) * n].iter().for_each(|&x| put(x));
            put(a.rho[row]);
            let m = a.order * n;
            a.x[row * m..(row + 1) * m].iter().for_each(|&x| put(x));
            a.u[row * n..(row + 1) * n].iter().for_each(|&x| put(x));
            put(a.e1[row]);
        }
        for o in &trace.obstacles {
            o.center[row * n..(row + 1) * n].iter().for_each(|&x| put(x));
            put(o.radius[row]);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

enum Slot {
    Sigma(usize),
    Rho(usize),
    X(usize),
    U(usize),
    E1(usize),
    Center(usize),
    Radius(usize),
}

/// Reads a trace written by [`write_trace`]. Social interaction values and
/// switch states are not stored; see [`crate::sim::annotate`].
pub fn read_trace<R: BufRead>(r: R) -> Result<SimTrace> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::Trace(e.to_string()))?,
        None => return Err(Error::Trace("empty trace".into())),
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(Error::Trace("first column must be `t`".into()));
    }

    let mut agents: Vec<AgentTrace> = Vec::new();
    let mut obstacles: Vec<ObstacleTrace> = Vec::new();
    let mut slots = Vec::with_capacity(cols.len() - 1);
    let mut dimension = 0usize;
    for col in &cols[1..] {
        let (id, field) = col
            .rsplit_once(':')
            .ok_or_else(|| Error::Trace(format!("malformed column `{col}`")))?;
        let agent_slot = |agents: &mut Vec<AgentTrace>| {
            if agents.last().map(|a| a.id.as_str()) != Some(id) {
                agents.push(AgentTrace {
                    id: id.to_string(),
                    order: 0,
                    sigma: Vec::new(),
                    rho: Vec::new(),
                    x: Vec::new(),
                    u: Vec::new(),
                    e1: Vec::new(),
                    phi: Vec::new(),
                    obstacle_switch: Vec::new(),
                    agent_switch: Vec::new(),
                });
            }
            agents.len() - 1
        };
        let slot = if let Some(i) = field.strip_prefix("sigma_") {
            let k = agent_slot(&mut agents);
            let i: usize = i.parse().map_err(|_| Error::Trace(format!("bad column `{col}`")))?;
            dimension = dimension.max(i + 1);
            Slot::Sigma(k)
        } else if field == "rho" {
            Slot::Rho(agent_slot(&mut agents))
        } else if let Some(rest) = field.strip_prefix('x') {
            let k = agent_slot(&mut agents);
            let z: usize = rest
                .split_once('_')
                .and_then(|(z, _)| z.parse().ok())
                .ok_or_else(|| Error::Trace(format!("bad column `{col}`")))?;
            agents[k].order = agents[k].order.max(z);
            Slot::X(k)
        } else if field.starts_with("u_") {
            Slot::U(agent_slot(&mut agents))
        } else if field == "e1" {
            Slot::E1(agent_slot(&mut agents))
        } else if field.starts_with("center_") {
            if obstacles.last().map(|o| o.id.as_str()) != Some(id) {
                obstacles.push(ObstacleTrace {
                    id: id.to_string(),
                    center: Vec::new(),
                    radius: Vec::new(),
                });
            }
            Slot::Center(obstacles.len() - 1)
        } else if field == "radius" {
            Slot::Radius(obstacles.len().saturating_sub(1))
        } else {
            return Err(Error::Trace(format!("unknown column `{col}`")));
        };
        if let Slot::Radius(_) = slot {
            if obstacles.is_empty() {
                return Err(Error::Trace(format!("radius column `{col}` before any center")));
            }
        }
        slots.push(slot);
    }
    if dimension == 0 {
        return Err(Error::Trace("no agent columns".into()));
    }

    let mut times = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Trace(e.to_string()))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Trace(format!(
                "row {} has {} fields, expected {}",
                lineno + 1,
                fields.len(),
                cols.len()
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Trace(format!("row {}: bad number `{s}`", lineno + 1)))
        };
        times.push(parse(fields[0])?);
        for (slot, s) in slots.iter().zip(&fields[1..]) {
            let x = parse(s)?;
            match *slot {
                Slot::Sigma(k) => agents[k].sigma.push(x),
                Slot::Rho(k) => agents[k].rho.push(x),
                Slot::X(k) => agents[k].x.push(x),
                Slot::U(k) => agents[k].u.push(x),
                Slot::E1(k) => agents[k].e1.push(x),
                Slot::Center(j) => obstacles[j].center.push(x),
                Slot::Radius(j) => obstacles[j].radius.push(x),
            }
        }
    }
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Ok(SimTrace {
        dimension,
        dt,
        times,
        agents,
        obstacles,
        events: Vec::new(),
    })
}

pub fn write_events<W: Write>(events: &[SimEvent], mut w: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::Trace(e.to_string()))?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(r: R) -> Result<Vec<SimEvent>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::Trace(e.to_string()))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes trace, events and manifest into `dir`.
pub fn save_run(dir: &Path, trace: &SimTrace, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    let path = dir.join(TRACE_FILE);
    let mut w = create(TRACE_FILE)?;
    write_trace(trace, &mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mut w = create(EVENTS_FILE)?;
    write_events(&trace.events, &mut w)?;
    w.flush().map_err(|e| Error::io(dir.join(EVENTS_FILE), e))?;

    let mut w = create(MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n").map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    w.flush().map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    Ok(())
}

/// Resolves a run directory or a trace file to the run directory.
pub fn run_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Loads trace, events and manifest of a saved run, checking the row count
/// against the manifest.
pub fn load_run(path: &Path) -> Result<(SimTrace, RunManifest)> {
    let dir = run_dir(path);
    let trace_path = if path.is_dir() { dir.join(TRACE_FILE) } else { path.to_path_buf() };
    let open = |p: &Path| fs::File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));

    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: RunManifest = serde_json::from_reader(open(&manifest_path)?)?;
    let mut trace = read_trace(open(&trace_path)?)?;
    if trace.rows() != manifest.rows {
        return Err(Error::Trace(format!(
            "{} has {} rows, manifest records {}",
            trace_path.display(),
            trace.rows(),
            manifest.rows
        )));
    }
    let events_path = dir.join(EVENTS_FILE);
    if events_path.exists() {
        trace.events = read_events(open(&events_path)?)?;
    }
    trace.dt = manifest.dt * manifest.record_stride as f64;
    Ok((trace, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;
    use crate::sim::{annotate, run_simulation, SimConfig};

    const DOC: &str = r#"
dimension: 2
horizon: 2
agents:
  - { id: a, social_index: 0.7, start_point: [0, 0], start_radius: 1, target_point: [2, 0],
      target_radius: 1, completion_time: 2, rho_min: 0.6, rho_max: 0.9, goal_gain: 1,
      plant: { model: double_integrator }, funnels: { p: 2, q: 0.5, mu: 1 } }
  - { id: b, social_index: 0.3, start_point: [0, 3], start_radius: 1, target_point: [2, 3],
      target_radius: 1, completion_time: 2, rho_min: 0.6, rho_max: 0.9, goal_gain: 1 }
obstacles:
  - { id: ob, motion: { kind: linear, start: [1, 8], velocity: [0, -0.5] }, radius: 0.3 }
"#;

    #[test]
    fn round_trip_is_lossless() {
        let sc = parse_scenario(DOC).unwrap();
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.record_stride = 50;
        let trace = run_simulation(&sc, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let mut back = read_trace(buf.as_slice()).unwrap();
        annotate(&mut back, &sc);
        back.events = trace.events.clone();
        back.dt = trace.dt;
        assert_eq!(back, trace);
    }

    #[test]
    fn header_names_columns() {
        let sc = parse_scenario(DOC).unwrap();
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.record_stride = 500;
        let trace = run_simulation(&sc, &cfg).unwrap();
        let h = trace_header(&trace);
        assert_eq!(h[0], "t");
        assert_eq!(&h[1..4], ["a:sigma_0", "a:sigma_1", "a:rho"]);
        assert!(h.contains(&"a:x2_1".to_string()));
        assert!(!h.contains(&"b:x2_0".to_string()));
        assert_eq!(h.last().unwrap(), "ob:radius");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "t,a:sigma_0,a:rho,a:x1_0,a:u_0,a:e1\n0,1,2,3,4,5\n0.1,1,2\n";
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Trace(_))));
    }

    #[test]
    fn events_round_trip() {
        let events = vec![SimEvent::ControllerClamp {
            step: 3,
            t: 0.003,
            agent: "a".into(),
            stage: 2,
            component: Some(1),
        }];
        let mut buf = Vec::new();
        write_events(&events, &mut buf).unwrap();
        assert_eq!(read_events(buf.as_slice()).unwrap(), events);
    }
}
