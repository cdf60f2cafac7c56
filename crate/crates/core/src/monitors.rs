//! Mechanical checks of the tube guarantees on recorded traces.
//!
//! Continuous-time clauses are evaluated on the recorded grid. The obstacle
//! check additionally revisits the neighbourhood of its worst row with the
//! obstacle trajectories sampled ten times finer. Strict inequalities pass
//! only with a margin above [`STRICT_MARGIN`].

use std::fmt;

use serde::Serialize;

use crate::scenario::{Scenario, Vector};
use crate::sim::{SimEvent, SimTrace};
use crate::tube::radius_lower_bound;

pub const STRICT_MARGIN: f64 = 1e-9;
/// Slack on non-strict inequalities, absorbing rounding in the recorded values.
const CLOSED_SLACK: f64 = 1e-12;
/// Rows within this distance of `t_c` count as being at `t_c`.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorOptions {
    /// Cap on `‖Δσ‖/Δt` between consecutive rows.
    pub sigma_rate_cap: f64,
    /// Cap on `|Δρ|/Δt` between consecutive rows.
    pub rho_rate_cap: f64,
    /// Subdivisions per row interval when refining the obstacle check.
    pub refinement: usize,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        Self {
            sigma_rate_cap: 100.0,
            rho_rate_cap: 100.0,
            refinement: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

impl Status {
    pub fn passed(&self) -> bool {
        matches!(self, Status::Pass)
    }
}

/// Outcome of one check restricted to one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentOutcome {
    pub agent: String,
    pub status: Status,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    /// Worst signed margin; positive means satisfied. `+∞` when vacuous.
    pub margin: f64,
    pub worst_time: Option<f64>,
    pub worst_agents: Vec<String>,
    pub detail: String,
    pub per_agent: Vec<AgentOutcome>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status.passed()
    }

    pub fn agent(&self, id: &str) -> Option<&AgentOutcome> {
        self.per_agent.iter().find(|o| o.agent == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentVerdict {
    pub agent: String,
    /// Reach-and-stay, obstacle avoidance, disjointness and containment all pass.
    pub tras: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub checks: Vec<CheckResult>,
    pub verdicts: Vec<AgentVerdict>,
}

impl MonitorReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn tras_pass(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.tras)
    }
}

impl fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match &c.status {
                Status::Pass => "PASS".to_string(),
                Status::Fail => "FAIL".to_string(),
                Status::Skipped(why) => format!("SKIP ({why})"),
            };
            write!(f, "{:<22} {status:<6} margin {:+.6e}", c.name, c.margin)?;
            if let Some(t) = c.worst_time {
                write!(f, " at t={t:.4}")?;
            }
            if !c.worst_agents.is_empty() {
                write!(f, " [{}]", c.worst_agents.join(","))?;
            }
            if !c.detail.is_empty() {
                write!(f, " {}", c.detail)?;
            }
            writeln!(f)?;
        }
        for v in &self.verdicts {
            writeln!(f, "TRAS {:<12} {}", v.agent, if v.tras { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Running worst case of a margin.
struct Worst {
    margin: f64,
    time: Option<f64>,
    agents: Vec<String>,
    row: Option<usize>,
    detail: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            time: None,
            agents: Vec::new(),
            row: None,
            detail: String::new(),
        }
    }

    fn offer(&mut self, margin: f64, row: usize, t: f64, agents: &[&str], detail: impl FnOnce() -> String) {
        // NaN margins always win so that they surface as failures.
        if margin < self.margin || (margin.is_nan() && !self.margin.is_nan()) {
            self.margin = margin;
            self.time = Some(t);
            self.row = Some(row);
            self.agents = agents.iter().map(|s| s.to_string()).collect();
            self.detail = detail();
        }
    }
}

fn pass_strict(m: f64) -> bool {
    m > STRICT_MARGIN
}

fn pass_closed(m: f64) -> bool {
    m >= -CLOSED_SLACK
}

fn status_of(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn result(name: &str, worst: Worst, ok: bool, per_agent: Vec<AgentOutcome>) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: status_of(ok),
        margin: worst.margin,
        worst_time: worst.time,
        worst_agents: worst.agents,
        detail: worst.detail,
        per_agent,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Tube and output inside the target ball from each agent's completion time on.
pub fn check_target_stay(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    let mut worst = Worst::new();
    let mut per_agent = Vec::new();
    for (k, a) in sc.agents.iter().enumerate() {
        let eta = a.target_point.as_slice();
        let mut m_agent = f64::INFINITY;
        let mut seen = false;
        for row in 0..trace.rows() {
            let t = trace.times[row];
            if t < a.completion_time - TIME_SLACK {
                continue;
            }
            seen = true;
            let tube = a.target_radius - dist(trace.sigma(k, row), eta) - trace.rho(k, row);
            let out = a.target_radius - dist(trace.output(k, row), eta);
            let m = tube.min(out);
            m_agent = m_agent.min(m);
            worst.offer(m, row, t, &[&a.id], || {
                if tube <= out { "tube leaves target".into() } else { "output leaves target".into() }
            });
        }
        per_agent.push(AgentOutcome {
            agent: a.id.clone(),
            status: if seen {
                status_of(pass_closed(m_agent))
            } else {
                Status::Skipped("insufficient horizon".into())
            },
            margin: m_agent,
        });
    }
    let any_skipped = per_agent.iter().any(|o| matches!(o.status, Status::Skipped(_)));
    let ok = per_agent.iter().all(|o| !matches!(o.status, Status::Fail));
    let mut r = result("target_stay", worst, ok, per_agent);
    if ok && any_skipped {
        r.status = Status::Skipped("insufficient horizon".into());
    }
    r
}

/// Tube and centre keep clear of every obstacle.
pub fn check_obstacle_avoidance(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    check_obstacle_avoidance_with(trace, sc, &MonitorOptions::default())
}

pub fn check_obstacle_avoidance_with(trace: &SimTrace, sc: &Scenario, opts: &MonitorOptions) -> CheckResult {
    let margins = |k: usize, sigma: &[f64], rho: f64, o: &Vector, rho_o: f64| {
        let d = dist(sigma, o.as_slice()) - rho_o;
        (d - rho, d - sc.agents[k].rho_min)
    };
    let mut worst = Worst::new();
    let mut m_agent = vec![f64::INFINITY; sc.agents.len()];
    for row in 0..trace.rows() {
        let t = trace.times[row];
        for j in 0..trace.obstacles.len() {
            let o = trace.obstacle_center(j, row);
            let rho_o = trace.obstacle_radius(j, row);
            for (k, a) in sc.agents.iter().enumerate() {
                let (tube, centre) = margins(k, trace.sigma(k, row), trace.rho(k, row), &o, rho_o);
                let m = tube.min(centre);
                m_agent[k] = m_agent[k].min(m);
                worst.offer(m, row, t, &[&a.id, &trace.obstacles[j].id], || {
                    if tube <= centre { "tube margin".into() } else { "centre margin".into() }
                });
            }
        }
    }

    // Refine around the worst row with exactly sampled obstacles.
    if let (Some(row), Some(j)) = (
        worst.row,
        worst
            .agents
            .get(1)
            .and_then(|id| sc.obstacles.iter().position(|o| &o.id == id)),
    ) {
        let k = sc.agent_index(&worst.agents[0]).unwrap_or(0);
        let lo = row.saturating_sub(1);
        let hi = (row + 1).min(trace.rows() - 1);
        for r in lo..hi {
            let (t0, t1) = (trace.times[r], trace.times[r + 1]);
            for s in 1..opts.refinement {
                let w = s as f64 / opts.refinement as f64;
                let t = t0 + (t1 - t0) * w;
                let sigma = trace.sigma_vec(k, r).lerp(&trace.sigma_vec(k, r + 1), w);
                let rho = trace.rho(k, r) + (trace.rho(k, r + 1) - trace.rho(k, r)) * w;
                let state = sc.obstacles[j].state_at(t);
                let (tube, centre) = margins(k, sigma.as_slice(), rho, &state.center, state.radius);
                let m = tube.min(centre);
                m_agent[k] = m_agent[k].min(m);
                let ids = [sc.agents[k].id.as_str(), sc.obstacles[j].id.as_str()];
                worst.offer(m, r, t, &ids, || "refined".into());
            }
        }
    }

    let per_agent: Vec<AgentOutcome> = sc
        .agents
        .iter()
        .zip(&m_agent)
        .map(|(a, &m)| AgentOutcome {
            agent: a.id.clone(),
            status: status_of(pass_strict(m)),
            margin: m,
        })
        .collect();
    let ok = pass_strict(worst.margin);
    result("obstacle_avoidance", worst, ok, per_agent)
}

/// Tubes of distinct agents never intersect and centres keep the summed
/// minimum radii apart.
pub fn check_tube_disjointness(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    let na = sc.agents.len();
    let mut worst = Worst::new();
    let mut m_agent = vec![f64::INFINITY; na];
    for row in 0..trace.rows() {
        let t = trace.times[row];
        for k in 0..na {
            for l in k + 1..na {
                let d = dist(trace.sigma(k, row), trace.sigma(l, row));
                let tube = d - trace.rho(k, row) - trace.rho(l, row);
                let centre = d - sc.agents[k].rho_min - sc.agents[l].rho_min;
                let m = tube.min(centre);
                m_agent[k] = m_agent[k].min(m);
                m_agent[l] = m_agent[l].min(m);
                worst.offer(m, row, t, &[&sc.agents[k].id, &sc.agents[l].id], || {
                    if tube <= centre { "tube margin".into() } else { "centre margin".into() }
                });
            }
        }
    }
    let per_agent = sc
        .agents
        .iter()
        .zip(&m_agent)
        .map(|(a, &m)| AgentOutcome {
            agent: a.id.clone(),
            status: status_of(pass_strict(m)),
            margin: m,
        })
        .collect();
    let ok = pass_strict(worst.margin);
    result("tube_disjointness", worst, ok, per_agent)
}

/// Radius above its positive lower bound at every row.
pub fn check_radius_positivity(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    let mut worst = Worst::new();
    let mut per_agent = Vec::new();
    for (k, a) in sc.agents.iter().enumerate() {
        let bound = radius_lower_bound(a.rho_min, a.rho_max, sc.nu);
        let mut m_agent = f64::INFINITY;
        for row in 0..trace.rows() {
            let m = trace.rho(k, row) - bound;
            m_agent = m_agent.min(m);
            worst.offer(m, row, trace.times[row], &[&a.id], || format!("bound {bound:.6}"));
        }
        let ok = pass_strict(m_agent) && bound > 0.0;
        per_agent.push(AgentOutcome {
            agent: a.id.clone(),
            status: status_of(ok),
            margin: m_agent,
        });
    }
    let ok = per_agent.iter().all(|o| o.status.passed());
    result("radius_positivity", worst, ok, per_agent)
}

/// Output inside the tube at every row, and no controller clamp logged.
pub fn check_output_containment(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    let mut worst = Worst::new();
    let mut per_agent = Vec::new();
    let mut clamps_total = 0;
    for (k, a) in sc.agents.iter().enumerate() {
        let mut m_agent = f64::INFINITY;
        for row in 0..trace.rows() {
            let m = trace.rho(k, row) - dist(trace.output(k, row), trace.sigma(k, row));
            m_agent = m_agent.min(m);
            worst.offer(m, row, trace.times[row], &[&a.id], String::new);
        }
        let clamps = trace.clamp_count(&a.id);
        clamps_total += clamps;
        per_agent.push(AgentOutcome {
            agent: a.id.clone(),
            status: status_of(pass_closed(m_agent) && clamps == 0),
            margin: m_agent,
        });
    }
    let ok = per_agent.iter().all(|o| o.status.passed());
    let mut r = result("output_containment", worst, ok, per_agent);
    if clamps_total > 0 {
        r.detail = format!("{clamps_total} clamp event(s)");
    }
    r
}

/// Finite centres and radii with bounded per-row increments.
pub fn check_boundedness(trace: &SimTrace) -> CheckResult {
    check_boundedness_with(trace, &MonitorOptions::default())
}

pub fn check_boundedness_with(trace: &SimTrace, opts: &MonitorOptions) -> CheckResult {
    let mut worst = Worst::new();
    let mut per_agent = Vec::new();
    for (k, a) in trace.agents.iter().enumerate() {
        let mut m_agent = f64::INFINITY;
        for row in 0..trace.rows() {
            let t = trace.times[row];
            let finite = trace.sigma(k, row).iter().all(|x| x.is_finite()) && trace.rho(k, row).is_finite();
            if !finite {
                m_agent = f64::NEG_INFINITY;
                worst.offer(f64::NEG_INFINITY, row, t, &[&a.id], || format!("non-finite state at step {row}"));
                continue;
            }
            if row == 0 {
                continue;
            }
            let h = t - trace.times[row - 1];
            let ds = dist(trace.sigma(k, row), trace.sigma(k, row - 1)) / h;
            let dr = (trace.rho(k, row) - trace.rho(k, row - 1)).abs() / h;
            let ms = 1.0 - ds / opts.sigma_rate_cap;
            let mr = 1.0 - dr / opts.rho_rate_cap;
            let m = ms.min(mr);
            m_agent = m_agent.min(m);
            worst.offer(m, row, t, &[&a.id], || {
                if ms <= mr {
                    format!("centre rate {ds:.3e} at step {row}")
                } else {
                    format!("radius rate {dr:.3e} at step {row}")
                }
            });
        }
        per_agent.push(AgentOutcome {
            agent: a.id.clone(),
            status: status_of(m_agent > 0.0),
            margin: m_agent,
        });
    }
    let ok = per_agent.iter().all(|o| o.status.passed());
    result("boundedness", worst, ok, per_agent)
}

/// Output-level avoidance: outputs outside every obstacle and pairwise distinct.
/// Reported next to the tube-level checks, which imply it under containment.
pub fn check_output_avoidance(trace: &SimTrace, sc: &Scenario) -> CheckResult {
    let na = sc.agents.len();
    let mut worst = Worst::new();
    let mut m_agent = vec![f64::INFINITY; na];
    for row in 0..trace.rows() {
        let t = trace.times[row];
        for k in 0..na {
            let y = trace.output(k, row);
            for j in 0..trace.obstacles.len() {
                let m = dist(y, trace.obstacle_center(j, row).as_slice()) - trace.obstacle_radius(j, row);
                m_agent[k] = m_agent[k].min(m);
                worst.offer(m, row, t, &[&sc.agents[k].id, &trace.obstacles[j].id], || "output in obstacle".into());
            }
            for l in k + 1..na {
                let m = dist(y, trace.output(l, row));
                m_agent[k] = m_agent[k].min(m);
                m_agent[l] = m_agent[l].min(m);
                worst.offer(m, row, t, &[&sc.agents[k].id, &sc.agents[l].id], || "outputs coincide".into());
            }
        }
    }
    let per_agent = sc
        .agents
        .iter()
        .zip(&m_agent)
        .map(|(a, &m)| AgentOutcome {
            agent: a.id.clone(),
            status: status_of(pass_strict(m)),
            margin: m,
        })
        .collect();
    let ok = pass_strict(worst.margin);
    result("output_avoidance", worst, ok, per_agent)
}

/// Runs every check and forms the per-agent TRAS verdicts.
pub fn run_monitors(trace: &SimTrace, sc: &Scenario, opts: &MonitorOptions) -> MonitorReport {
    let checks = vec![
        check_target_stay(trace, sc),
        check_obstacle_avoidance_with(trace, sc, opts),
        check_tube_disjointness(trace, sc),
        check_radius_positivity(trace, sc),
        check_output_containment(trace, sc),
        check_boundedness_with(trace, opts),
        check_output_avoidance(trace, sc),
    ];
    let tras_checks = ["target_stay", "obstacle_avoidance", "tube_disjointness", "output_containment"];
    let verdicts = sc
        .agents
        .iter()
        .map(|a| AgentVerdict {
            agent: a.id.clone(),
            tras: tras_checks.iter().all(|name| {
                checks
                    .iter()
                    .find(|c| c.name == *name)
                    .and_then(|c| c.agent(&a.id))
                    .is_some_and(|o| o.status.passed())
            }),
        })
        .collect();
    MonitorReport { checks, verdicts }
}

/// `∫‖σ(t) − σ_nominal(t)‖ dt` by the trapezoid rule, where `nominal` is the
/// goal-only run of the same scenario on the same grid.
pub fn social_deviation_metric(trace: &SimTrace, nominal: &SimTrace, k: usize) -> f64 {
    let rows = trace.rows().min(nominal.rows());
    let gap: Vec<f64> = (0..rows)
        .map(|r| dist(trace.sigma(k, r), nominal.sigma(k, r)))
        .collect();
    gap.windows(2)
        .zip(trace.times.windows(2))
        .map(|(g, t)| 0.5 * (g[0] + g[1]) * (t[1] - t[0]))
        .sum()
}

/// Number of controller clamp events over all agents.
pub fn clamp_total(trace: &SimTrace) -> usize {
    trace
        .events
        .iter()
        .filter(|e| matches!(e, SimEvent::ControllerClamp { .. }))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;
    use crate::sim::{nominal_centers, run_simulation, SimConfig};

    const SOLO: &str = r#"
dimension: 2
horizon: 6
agents:
  - id: solo
    social_index: 0.5
    start_point: [0, 0]
    start_radius: 1.0
    target_point: [3, 1]
    target_radius: 1.0
    completion_time: 4
    rho_min: 0.6
    rho_max: 0.9
    goal_gain: 0.75
    controller_gains: 4
"#;

    fn solo() -> (Scenario, SimTrace) {
        let sc = parse_scenario(SOLO).unwrap();
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.record_stride = 10;
        let trace = run_simulation(&sc, &cfg).unwrap();
        (sc, trace)
    }

    #[test]
    fn solo_run_passes_everything() {
        let (sc, trace) = solo();
        let report = run_monitors(&trace, &sc, &MonitorOptions::default());
        for c in &report.checks {
            assert!(c.passed(), "{report}");
        }
        assert!(report.tras_pass());
        assert!(report.check("target_stay").unwrap().margin > 0.0);
    }

    #[test]
    fn short_horizon_is_skipped() {
        let (sc, mut trace) = solo();
        trace.truncate(100);
        let r = check_target_stay(&trace, &sc);
        assert_eq!(r.status, Status::Skipped("insufficient horizon".into()));
        assert!(!run_monitors(&trace, &sc, &MonitorOptions::default()).tras_pass());
    }

    #[test]
    fn boundary_equality_passes() {
        let (mut sc, mut trace) = solo();
        sc.agents[0].target_radius = sc.agents[0].rho_max;
        let n = trace.dimension;
        for row in 0..trace.rows() {
            let eta = sc.agents[0].target_point.clone();
            let a = &mut trace.agents[0];
            a.sigma[row * n..(row + 1) * n].copy_from_slice(eta.as_slice());
            a.x[row * n..(row + 1) * n].copy_from_slice(eta.as_slice());
            a.rho[row] = sc.agents[0].rho_max;
        }
        let r = check_target_stay(&trace, &sc);
        assert!(r.passed());
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn vacuous_checks() {
        let (sc, trace) = solo();
        let r = check_obstacle_avoidance(&trace, &sc);
        assert!(r.passed());
        assert_eq!(r.margin, f64::INFINITY);
        assert!(check_tube_disjointness(&trace, &sc).passed());
    }

    #[test]
    fn injected_zero_radius_fails() {
        let (sc, mut trace) = solo();
        trace.agents[0].rho[5] = 0.0;
        assert!(!check_radius_positivity(&trace, &sc).passed());
    }

    #[test]
    fn injected_nan_and_jump_fail() {
        let (_, mut trace) = solo();
        trace.agents[0].sigma[20] = f64::NAN;
        let r = check_boundedness(&trace);
        assert!(!r.passed());
        assert!(r.detail.contains("step 10"), "{}", r.detail);

        let (_, mut trace) = solo();
        trace.agents[0].sigma[40] += 5.0;
        let r = check_boundedness(&trace);
        assert!(!r.passed());
        assert!(r.detail.contains("centre rate"));
    }

    #[test]
    fn output_at_centre_has_radius_margin() {
        let (sc, mut trace) = solo();
        let n = trace.dimension;
        for row in 0..trace.rows() {
            let s = trace.sigma(0, row).to_vec();
            trace.agents[0].x[row * n..(row + 1) * n].copy_from_slice(&s);
        }
        let r = check_output_containment(&trace, &sc);
        assert!(r.passed());
        let min_rho = trace.agents[0].rho.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.margin, min_rho);
    }

    #[test]
    fn solo_deviation_is_zero() {
        let (sc, trace) = solo();
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.record_stride = 10;
        let nominal = nominal_centers(&sc, &cfg).unwrap();
        assert!(social_deviation_metric(&trace, &nominal, 0).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_on_linear_gap() {
        let (sc, trace) = solo();
        let mut shifted = trace.clone();
        // gap grows linearly as t, so the integral is t_end²/2
        for row in 0..shifted.rows() {
            shifted.agents[0].sigma[row * 2] += trace.times[row];
        }
        let m = social_deviation_metric(&shifted, &trace, 0);
        assert!((m - 18.0).abs() < 1e-9, "{m}");
        let _ = sc;
    }
}
