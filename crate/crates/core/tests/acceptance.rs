//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! A criterion may fail only in the documented way: the radius lower bound is
//! violated while every individual clearance still respects `ρ_min`, because
//! the smooth minimum over several close neighbours dips below the bound. Any
//! other outcome makes the process exit non-zero.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stt_core::cli::{cmd_run, SimFlags};
use stt_core::monitors::{clamp_total, run_monitors, social_deviation_metric, MonitorOptions, MonitorReport};
use stt_core::plants::{DisturbanceKind, DisturbanceSpec};
use stt_core::sim::{nominal_centers, run_simulation_unchecked};
use stt_core::trace_io::TRACE_FILE;
use stt_core::tube::{
    agent_terms, d_prime_agent, d_prime_obstacle, obstacle_terms, radius_closed_form, radius_lower_bound,
    radius_rate, sif, smooth_min,
};
use stt_core::{parse_scenario, Scenario, SimConfig, SimTrace, Vector};

type Criterion = (&'static str, fn() -> Verdict);

enum Verdict {
    Pass(String),
    /// Failed in the documented, analysed way.
    KnownFail(String),
    Unexpected(String),
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn shipped(name: &str) -> Scenario {
    parse_scenario(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn timed_run(sc: &Scenario, cfg: &SimConfig) -> Result<(SimTrace, Duration), String> {
    let t0 = Instant::now();
    let trace = run_simulation_unchecked(sc, cfg).map_err(|e| e.to_string())?;
    Ok((trace, t0.elapsed()))
}

fn failing(report: &MonitorReport) -> Vec<String> {
    report.checks.iter().filter(|c| !c.passed()).map(|c| c.name.clone()).collect()
}

/// Whether every agent's output lies in its target ball at its own completion time.
fn targets_reached(trace: &SimTrace, sc: &Scenario) -> Result<(), String> {
    for (k, a) in sc.agents.iter().enumerate() {
        let row = (a.completion_time / trace.dt).round() as usize;
        let miss = (trace.output_vec(k, row) - &a.target_point).norm() - a.target_radius;
        if miss > 0.0 {
            return Err(format!("{} misses its target by {miss:.3e} at t_c", a.id));
        }
    }
    Ok(())
}

/// Recomputes the radius terms at the worst row of the radius check and
/// confirms the bound is lost only through aggregation over neighbours.
fn explain_radius_failure(trace: &SimTrace, sc: &Scenario, report: &MonitorReport) -> Result<String, String> {
    let check = report.check("radius_positivity").unwrap();
    let t = check.worst_time.ok_or("no worst time")?;
    let id = check.worst_agents.first().ok_or("no worst agent")?;
    let k = sc.agent_index(id).ok_or("unknown agent")?;
    let a = &sc.agents[k];
    let row = (t / trace.dt).round() as usize;
    let sigma = trace.sigma_vec(k, row);
    let obstacles = sc.obstacles_at(t);
    let clear: Vec<f64> = obstacles
        .iter()
        .map(|o| d_prime_obstacle(&sigma, &o.center, o.radius))
        .collect();
    let gaps: Vec<f64> = (0..sc.agents.len())
        .filter(|&l| l != k)
        .map(|l| {
            let phi = trace.phi(k, l, row);
            d_prime_agent(&sigma, &trace.sigma_vec(l, row), a.rho_min, sc.agents[l].rho_min, phi)
        })
        .collect();
    let rho = radius_closed_form(smooth_min(&clear, sc.nu), smooth_min(&gaps, sc.nu), a.rho_max, sc.nu);
    if (rho - trace.rho(k, row)).abs() > 1e-9 {
        return Err(format!("recorded radius {} differs from recomputed {rho}", trace.rho(k, row)));
    }
    let smallest = clear.iter().chain(&gaps).copied().fold(f64::INFINITY, f64::min);
    let bound = radius_lower_bound(a.rho_min, a.rho_max, sc.nu);
    let close = gaps.iter().filter(|&&g| g < a.rho_max + 3.0 / sc.nu).count();
    if smallest < a.rho_min - 1e-9 {
        return Err(format!("{id}: a single clearance {smallest:.4} is below rho_min"));
    }
    if close < 2 {
        return Err(format!("{id}: only {close} neighbour near, bound loss unexplained"));
    }
    Ok(format!(
        "{id} at t={t:.3}: radius {rho:.4} < bound {bound:.4} with {close} close neighbours, smallest clearance {smallest:.4} >= rho_min {}",
        a.rho_min
    ))
}

/// Shared verdict for the multi-agent scenario criteria.
fn scenario_verdict(sc: &Scenario, trace: &SimTrace, elapsed: Duration, limit: Duration) -> Verdict {
    let report = run_monitors(trace, sc, &MonitorOptions::default());
    let failed = failing(&report);
    let time = format!("runtime {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs());
    if elapsed > limit {
        return Verdict::Unexpected(format!("{time}; failing {failed:?}"));
    }
    if let Err(e) = targets_reached(trace, sc) {
        return Verdict::Unexpected(e);
    }
    let clamps = clamp_total(trace);
    if clamps > 0 {
        return Verdict::Unexpected(format!("{clamps} funnel clamp event(s)"));
    }
    if failed.is_empty() {
        return Verdict::Pass(format!("all monitors pass, targets reached, no clamps, {time}"));
    }
    if failed != ["radius_positivity"] {
        return Verdict::Unexpected(format!("failing {failed:?}\n{report}"));
    }
    let margin = report.check("radius_positivity").unwrap().margin;
    let containment = report.check("output_containment").unwrap().margin;
    match explain_radius_failure(trace, sc, &report) {
        Ok(why) => Verdict::KnownFail(format!(
            "radius_positivity margin {margin:.4e}; every other monitor passes (containment margin {containment:.4e}), no clamps, targets reached, {time}; {why}"
        )),
        Err(e) => Verdict::Unexpected(e),
    }
}

fn criterion_1() -> Verdict {
    let sc = parse_scenario(
        r#"
dimension: 2
horizon: 10
dt: 0.001
agents:
  - id: solo
    social_index: 0.5
    start_point: [-4, 2]
    start_radius: 1.0
    target_point: [3, -1]
    target_radius: 1.0
    completion_time: 10
    rho_min: 0.6
    rho_max: 0.9
    goal_gain: 0.3
    controller_gains: 4
"#,
    )
    .unwrap();
    let cfg = SimConfig::for_scenario(&sc);
    let (trace, elapsed) = match timed_run(&sc, &cfg) {
        Ok(r) => r,
        Err(e) => return Verdict::Unexpected(e),
    };
    let a = &sc.agents[0];
    let power = a.goal_gain * a.completion_time;
    let mut worst: f64 = 0.0;
    for (row, &t) in trace.times.iter().enumerate() {
        let decay = ((a.completion_time - t) / a.completion_time).max(0.0).powf(power);
        let exact = &a.target_point + (&a.start_point - &a.target_point) * decay;
        worst = worst.max((trace.sigma_vec(0, row) - exact).norm());
    }
    let msg = format!("max centre error {worst:.3e} (< 1e-4), runtime {:.3} s (< 1 s)", elapsed.as_secs_f64());
    if worst < 1e-4 && elapsed < Duration::from_secs(1) {
        Verdict::Pass(msg)
    } else {
        Verdict::Unexpected(msg)
    }
}

fn criterion_2() -> Verdict {
    let sc = shipped("eight_agents_2d.yaml");
    let cfg = SimConfig::for_scenario(&sc);
    match timed_run(&sc, &cfg) {
        Ok((trace, elapsed)) => scenario_verdict(&sc, &trace, elapsed, Duration::from_secs(30)),
        Err(e) => Verdict::Unexpected(e),
    }
}

fn criterion_3() -> Verdict {
    let sc = shipped("eight_uavs_3d.yaml");
    let cfg = SimConfig::for_scenario(&sc);
    match timed_run(&sc, &cfg) {
        Ok((trace, elapsed)) => scenario_verdict(&sc, &trace, elapsed, Duration::from_secs(60)),
        Err(e) => Verdict::Unexpected(e),
    }
}

fn deviations(sc: &Scenario) -> Result<(f64, f64), String> {
    let mut cfg = SimConfig::for_scenario(sc);
    cfg.record_stride = 10;
    let trace = run_simulation_unchecked(sc, &cfg).map_err(|e| e.to_string())?;
    let report = run_monitors(&trace, sc, &MonitorOptions::default());
    if !failing(&report).is_empty() {
        return Err(format!("swap run fails monitors\n{report}"));
    }
    let nominal = nominal_centers(sc, &cfg).map_err(|e| e.to_string())?;
    Ok((social_deviation_metric(&trace, &nominal, 0), social_deviation_metric(&trace, &nominal, 1)))
}

fn criterion_4() -> Verdict {
    let sc = shipped("hardware_swap.yaml");
    let mut swapped = sc.clone();
    let (sa, sb) = (sc.agents[0].social_index, sc.agents[1].social_index);
    swapped.agents[0].social_index = sb;
    swapped.agents[1].social_index = sa;
    let ((a, b), (a2, b2)) = match (deviations(&sc), deviations(&swapped)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return Verdict::Unexpected(e),
    };
    let msg = format!(
        "altruist/egoist deviation {a:.3}/{b:.3} (ratio {:.2}); swapped {a2:.3}/{b2:.3} (ratio {:.2}); threshold 1.5",
        a / b,
        b2 / a2
    );
    if a > 1.5 * b && b2 > 1.5 * a2 {
        Verdict::Pass(msg)
    } else {
        Verdict::Unexpected(msg)
    }
}

fn criterion_5() -> Verdict {
    const SAMPLES: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_cap = f64::NEG_INFINITY;
    let mut worst_bound = f64::INFINITY;
    let mut worst_sif: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..SAMPLES {
        let nu = rng.random_range(0.5..50.0);
        let rho_min = rng.random_range(0.01..2.0);
        let rho_max = rho_min + rng.random_range(0.0..2.0);
        let d1 = rng.random_range(-1.0..6.0);
        let d2 = rng.random_range(-1.0..6.0);
        let r = radius_closed_form(d1, d2, rho_max, nu);
        worst_cap = worst_cap.max(r - rho_max.min(d1).min(d2));
        if d1 >= rho_min && d2 > rho_min {
            worst_bound = worst_bound.min(r - radius_lower_bound(rho_min, rho_max, nu));
        }

        let (sk, sl) = (rng.random_range(1e-3..1.0), rng.random_range(1e-3..1.0));
        let (tck, tcl): (f64, f64) = (rng.random_range(1.0..30.0), rng.random_range(1.0..30.0));
        let t = rng.random_range(0.0..tck.min(tcl));
        worst_sif = worst_sif.max((sif(sk, sl, t, tck, 0.5) + sif(sl, sk, t, tcl, 0.5) - 1.0).abs());

        let dim = if rng.random_bool(0.5) { 2 } else { 3 };
        let mut point = || Vector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
        let (s, o, g) = (point(), point(), point());
        let radius = rho_min.min(0.5);
        for pair in [
            obstacle_terms(&s, &o, radius, rho_max, rho_min, &g),
            agent_terms(&s, &o, rho_min, radius, rho_max, rho_max, &g),
        ] {
            let scale = (pair.m.norm() * pair.v.norm()).max(1.0);
            worst_orth = worst_orth.max(pair.m.dot(&pair.v).abs() / scale);
        }
    }
    let msg = format!(
        "{SAMPLES} samples: cap excess {worst_cap:.1e} (<= 1e-12), bound slack {worst_bound:.3e} (> 0), SIF partition {worst_sif:.1e}, orthogonality {worst_orth:.1e} (<= 1e-12)"
    );
    if worst_cap <= 1e-12 && worst_bound > 0.0 && worst_sif <= 1e-12 && worst_orth <= 1e-12 {
        Verdict::Pass(msg)
    } else {
        Verdict::Unexpected(msg)
    }
}

fn criterion_6() -> Verdict {
    let sc = parse_scenario(
        r#"
dimension: 2
nu: 10
horizon: 12
dt: 0.001
agents:
  - id: a
    social_index: 0.5
    start_point: [-4, 0]
    start_radius: 1.0
    target_point: [4, 0.5]
    target_radius: 1.0
    completion_time: 10
    rho_min: 0.3
    rho_max: 0.9
    goal_gain: 0.2
    obstacle_gains: { h2: 1, h3: 1 }
    controller_gains: 4
obstacles:
  - id: o
    motion: { kind: circular, center: [0, 0], radius: 0.8, angular_speed: 0.3 }
    radius: 0.4
"#,
    )
    .unwrap();
    let cfg = SimConfig::for_scenario(&sc);
    let trace = match run_simulation_unchecked(&sc, &cfg) {
        Ok(t) => t,
        Err(e) => return Verdict::Unexpected(e.to_string()),
    };
    let a = &sc.agents[0];
    let dt = trace.dt;
    let d1 = |row: usize| {
        d_prime_obstacle(&trace.sigma_vec(0, row), &trace.obstacle_center(0, row), trace.obstacle_radius(0, row))
    };
    let switches = &trace.agents[0].obstacle_switch;
    let (mut checked, mut agree) = (0usize, 0usize);
    for row in 1..trace.rows() - 1 {
        let t = trace.times[row];
        if (t - a.completion_time).abs() < 3.0 * dt || switches[row - 1] != switches[row + 1] {
            continue;
        }
        let closed = (trace.rho(0, row + 1) - trace.rho(0, row - 1)) / (2.0 * dt);
        let d1_dot = (d1(row + 1) - d1(row - 1)) / (2.0 * dt);
        let assembled = radius_rate(d1(row), f64::INFINITY, d1_dot, 0.0, a.rho_max, sc.nu);
        checked += 1;
        if (closed - assembled).abs() <= 1e-4 * closed.abs().max(assembled.abs()) + 1e-10 {
            agree += 1;
        }
    }
    let share = agree as f64 / checked as f64;
    let active = switches.iter().filter(|&&s| s).count();
    let msg = format!("{agree}/{checked} grid points agree ({:.3}%, need 99%); switch on for {active} rows", 100.0 * share);
    if share >= 0.99 && active > 0 {
        Verdict::Pass(msg)
    } else {
        Verdict::Unexpected(msg)
    }
}

fn criterion_7() -> Verdict {
    let mut sc = shipped("eight_agents_2d.yaml");
    for a in &mut sc.agents {
        a.plant.disturbance = DisturbanceSpec {
            kind: DisturbanceKind::ClippedNoise {
                seed: 3,
                std: 0.1,
                hold: 0.01,
            },
            bound: 0.1,
            stream: 0,
        };
    }
    let cfg = SimConfig::for_scenario(&sc);
    match timed_run(&sc, &cfg) {
        Ok((trace, elapsed)) => scenario_verdict(&sc, &trace, elapsed, Duration::from_secs(30)),
        Err(e) => Verdict::Unexpected(e),
    }
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy.yaml");
    std::fs::write(
        &noisy,
        r#"
dimension: 2
horizon: 6
agents:
  - id: a
    social_index: 0.4
    start_point: [-3, 0]
    start_radius: 1.0
    target_point: [3, 0]
    target_radius: 1.0
    completion_time: 5
    rho_min: 0.4
    rho_max: 0.6
    goal_gain: 0.5
    plant: { model: double_integrator, disturbance: { kind: clipped_noise, bound: 0.1, seed: 11 } }
    controller_gains: [4, 4]
  - id: b
    social_index: 0.6
    start_point: [3, 0.2]
    start_radius: 1.0
    target_point: [-3, 0.2]
    target_radius: 1.0
    completion_time: 5
    rho_min: 0.4
    rho_max: 0.6
    goal_gain: 0.5
    plant: { model: double_integrator, disturbance: { kind: clipped_noise, bound: 0.1, seed: 11 } }
    controller_gains: [4, 4]
"#,
    )
    .unwrap();
    let flags = SimFlags {
        seed: Some(42),
        ..SimFlags::default()
    };
    let mut details = Vec::new();
    for scenario in [scenario_path("eight_agents_2d.yaml"), noisy] {
        let mut bytes = Vec::new();
        for run in ["first", "second"] {
            let out = dir.path().join(format!("{}-{run}", scenario.file_stem().unwrap().to_string_lossy()));
            if let Err(e) = cmd_run(&scenario, &flags, Some(&out), false) {
                return Verdict::Unexpected(e.to_string());
            }
            bytes.push(std::fs::read(out.join(TRACE_FILE)).unwrap());
        }
        let name = scenario.file_name().unwrap().to_string_lossy().into_owned();
        if bytes[0] != bytes[1] {
            return Verdict::Unexpected(format!("{name}: traces differ"));
        }
        details.push(format!("{name} {} bytes identical", bytes[0].len()));
    }
    Verdict::Pass(details.join("; "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("prescribed-time reach", criterion_1),
        ("eight agents 2D", criterion_2),
        ("eight UAVs 3D", criterion_3),
        ("social asymmetry", criterion_4),
        ("radius law properties", criterion_5),
        ("rate and closed-form consistency", criterion_6),
        ("robustness to disturbances", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut unexpected = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::KnownFail(d) => ("FAIL", d),
            Verdict::Unexpected(d) => {
                unexpected += 1;
                ("FAIL (unexpected)", d)
            }
        };
        println!("criterion {} [{name}]: {tag}: {detail}", i + 1);
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criterion outcome(s) outside the documented failure modes");
        std::process::exit(1);
    }
}
