//! Fixed-step co-simulation of tubes, controllers and plants.
//!
//! Every step freezes all tube centres into one snapshot, advances each centre
//! against that snapshot and the obstacles sampled at the start of the step,
//! recomputes the radii from the closed form, and then advances each plant
//! with the controller evaluated at every integrator stage against the tube
//! interpolated across the step.

use serde::{Deserialize, Serialize};

use crate::controller::{auto_funnels, control_step, AgentRuntime, ClampEvent, ControlFrame};
use crate::error::{Error, Result};
use crate::plants::{plant_rhs, PlantState};
use crate::scenario::{validate_scenario, ObstacleState, Scenario, Vector};
use crate::tube::{
    center_rhs, repulsion_stiffness, sif, tube_radius, NeighborSnapshot, Singularity, TermMask, TubeState,
    SNAP_TOLERANCE,
};

pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub integrator: Integrator,
    pub t_end: f64,
    /// Keep every `record_stride`-th grid point.
    pub record_stride: usize,
    /// Added to every disturbance seed.
    pub seed: u64,
    pub terms: TermMask,
}

impl SimConfig {
    /// Scenario defaults: its `dt`, its horizon and seed, RK4, every step recorded.
    pub fn for_scenario(sc: &Scenario) -> Self {
        Self {
            dt: sc.dt,
            integrator: Integrator::Rk4,
            t_end: sc.horizon,
            record_stride: 1,
            seed: sc.seed,
            terms: TermMask::ALL,
        }
    }

    /// Number of integration steps; `t_end` is rounded to the grid.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn check(&self, sc: &Scenario) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        let t_c = sc.max_completion_time();
        if self.steps() as f64 * self.dt < t_c - 1e-9 {
            return Err(Error::Config(format!(
                "t_end {} ends before the latest completion time {t_c}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// A controller error was pulled back inside its funnel.
    ControllerClamp {
        step: usize,
        t: f64,
        agent: String,
        stage: usize,
        component: Option<usize>,
    },
    /// A repulsion denominator or switch distance hit its floor.
    NearSingularity {
        step: usize,
        t: f64,
        agent: String,
        /// `obstacle` or `agent`.
        source: String,
        other: String,
    },
    /// The centre was placed exactly on the target at its completion time.
    TargetSnap {
        step: usize,
        t: f64,
        agent: String,
        distance: f64,
    },
}

/// Recorded series of one agent, flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    pub id: String,
    /// Plant order `N`.
    pub order: usize,
    /// `rows × n`.
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    /// `rows × N × n`, stage-major within a row.
    pub x: Vec<f64>,
    /// `rows × n`.
    pub u: Vec<f64>,
    pub e1: Vec<f64>,
    /// `rows × agents`; own column is zero.
    pub phi: Vec<f64>,
    /// `rows × obstacles`, true where the obstacle switch is on.
    pub obstacle_switch: Vec<bool>,
    /// `rows × agents`, true where the neighbour switch is on.
    pub agent_switch: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrace {
    pub id: String,
    /// `rows × n`.
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

/// Uniform-grid record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dimension: usize,
    /// Spacing of the recorded rows.
    pub dt: f64,
    pub times: Vec<f64>,
    pub agents: Vec<AgentTrace>,
    pub obstacles: Vec<ObstacleTrace>,
    pub events: Vec<SimEvent>,
}

impl SimTrace {
    fn empty(sc: &Scenario, row_dt: f64) -> Self {
        Self {
            dimension: sc.dimension,
            dt: row_dt,
            times: Vec::new(),
            agents: sc
                .agents
                .iter()
                .map(|a| AgentTrace {
                    id: a.id.clone(),
                    order: a.plant.order(),
                    sigma: Vec::new(),
                    rho: Vec::new(),
                    x: Vec::new(),
                    u: Vec::new(),
                    e1: Vec::new(),
                    phi: Vec::new(),
                    obstacle_switch: Vec::new(),
                    agent_switch: Vec::new(),
                })
                .collect(),
            obstacles: sc
                .obstacles
                .iter()
                .map(|o| ObstacleTrace {
                    id: o.id.clone(),
                    center: Vec::new(),
                    radius: Vec::new(),
                })
                .collect(),
            events: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn sigma(&self, k: usize, row: usize) -> &[f64] {
        let n = self.dimension;
        &self.agents[k].sigma[row * n..(row + 1) * n]
    }

    pub fn sigma_vec(&self, k: usize, row: usize) -> Vector {
        Vector::from_column_slice(self.sigma(k, row))
    }

    pub fn rho(&self, k: usize, row: usize) -> f64 {
        self.agents[k].rho[row]
    }

    /// Plant stage `z` (1-based) of agent `k`.
    pub fn stage(&self, k: usize, z: usize, row: usize) -> &[f64] {
        let n = self.dimension;
        let a = &self.agents[k];
        let base = (row * a.order + (z - 1)) * n;
        &a.x[base..base + n]
    }

    /// Output `y = x_1`.
    pub fn output(&self, k: usize, row: usize) -> &[f64] {
        self.stage(k, 1, row)
    }

    pub fn output_vec(&self, k: usize, row: usize) -> Vector {
        Vector::from_column_slice(self.output(k, row))
    }

    pub fn obstacle_center(&self, j: usize, row: usize) -> Vector {
        let n = self.dimension;
        Vector::from_column_slice(&self.obstacles[j].center[row * n..(row + 1) * n])
    }

    pub fn obstacle_radius(&self, j: usize, row: usize) -> f64 {
        self.obstacles[j].radius[row]
    }

    pub fn phi(&self, k: usize, l: usize, row: usize) -> f64 {
        self.agents[k].phi[row * self.agents.len() + l]
    }

    /// Number of controller clamps recorded for `agent`.
    pub fn clamp_count(&self, agent: &str) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, SimEvent::ControllerClamp { agent: a, .. } if a == agent))
            .count()
    }

    /// Keeps only the first `rows` rows and the events up to the last kept time.
    pub fn truncate(&mut self, rows: usize) {
        if rows >= self.rows() {
            return;
        }
        let n = self.dimension;
        let na = self.agents.len();
        let no = self.obstacles.len();
        let t_last = if rows == 0 { f64::NEG_INFINITY } else { self.times[rows - 1] };
        self.times.truncate(rows);
        for a in &mut self.agents {
            a.sigma.truncate(rows * n);
            a.rho.truncate(rows);
            a.x.truncate(rows * a.order * n);
            a.u.truncate(rows * n);
            a.e1.truncate(rows);
            a.phi.truncate(rows * na);
            a.obstacle_switch.truncate(rows * no);
            a.agent_switch.truncate(rows * na);
        }
        for o in &mut self.obstacles {
            o.center.truncate(rows * n);
            o.radius.truncate(rows);
        }
        self.events.retain(|e| event_time(e) <= t_last);
    }
}

fn event_time(e: &SimEvent) -> f64 {
    match e {
        SimEvent::ControllerClamp { t, .. }
        | SimEvent::NearSingularity { t, .. }
        | SimEvent::TargetSnap { t, .. } => *t,
    }
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(mut f: F, t: f64, x: &Vector, h: f64) -> Vector
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

pub fn euler_step<F>(mut f: F, t: f64, x: &Vector, h: f64) -> Vector
where
    F: FnMut(f64, &Vector) -> Vector,
{
    x + f(t, x) * h
}

fn step_with<F>(integrator: Integrator, f: F, t: f64, x: &Vector, h: f64) -> Vector
where
    F: FnMut(f64, &Vector) -> Vector,
{
    match integrator {
        Integrator::Rk4 => rk4_step(f, t, x, h),
        Integrator::Euler => euler_step(f, t, x, h),
    }
}

/// One step of the stacked system `ẋ_k = f_k(t, x_1..x_n)`, every stage seeing
/// every component at the same stage.
fn coupled_step<F>(integrator: Integrator, mut f: F, t: f64, xs: &[Vector], h: f64) -> Vec<Vector>
where
    F: FnMut(f64, &[Vector]) -> Vec<Vector>,
{
    let shift = |d: &[Vector], c: f64| -> Vec<Vector> { xs.iter().zip(d).map(|(x, d)| x + d * c).collect() };
    match integrator {
        Integrator::Euler => shift(&f(t, xs), h),
        Integrator::Rk4 => {
            let k1 = f(t, xs);
            let k2 = f(t + 0.5 * h, &shift(&k1, 0.5 * h));
            let k3 = f(t + 0.5 * h, &shift(&k2, 0.5 * h));
            let k4 = f(t + h, &shift(&k3, h));
            (0..xs.len())
                .map(|i| &xs[i] + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0))
                .collect()
        }
    }
}

fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the scenario after checking it; hard validation failures refuse the run.
pub fn run_simulation(sc: &Scenario, cfg: &SimConfig) -> Result<SimTrace> {
    let report = validate_scenario(sc);
    if !report.all_hard_pass() {
        return Err(Error::Invalid(Box::new(report)));
    }
    run_simulation_unchecked(sc, cfg)
}

struct Agent {
    sigma: Vector,
    rho: f64,
    runtime: AgentRuntime,
}

/// Runs the scenario without validating it first.
pub fn run_simulation_unchecked(sc: &Scenario, cfg: &SimConfig) -> Result<SimTrace> {
    cfg.check(sc)?;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let mut trace = SimTrace::empty(sc, dt * cfg.record_stride as f64);

    let bindings: Vec<_> = sc
        .agents
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let mut pb = a.plant.clone();
            pb.disturbance.stream = k as u64;
            if let crate::plants::DisturbanceKind::ClippedNoise { seed, .. } = &mut pb.disturbance.kind {
                *seed = seed.wrapping_add(cfg.seed);
            }
            pb
        })
        .collect();

    let starts: Vec<Vector> = sc.agents.iter().map(|a| a.start_point.clone()).collect();
    let obstacles0 = sc.obstacles_at(0.0);
    let mut agents: Vec<Agent> = sc
        .agents
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let snapshot = NeighborSnapshot::new(sc, &starts, k);
            let rho = tube_radius(a, &a.start_point, &snapshot, &obstacles0, 0.0, sc.nu).rho;
            let state = PlantState::at_rest(a.initial_output(), a.plant.order());
            let tube = TubeState {
                agent: k,
                sigma: a.start_point.clone(),
                rho,
                t: 0.0,
            };
            let funnels = a
                .funnels
                .clone()
                .unwrap_or_else(|| auto_funnels(&state, &tube, &a.controller_gains));
            Agent {
                sigma: a.start_point.clone(),
                rho,
                runtime: AgentRuntime {
                    state,
                    funnels,
                    gains: a.controller_gains.clone(),
                },
            }
        })
        .collect();

    for step in 0..=steps {
        let t = step as f64 * dt;
        let obstacles = sc.obstacles_at(t);
        let record = step % cfg.record_stride == 0;

        if step == steps {
            if record {
                let frames: Vec<ControlFrame> = agents
                    .iter()
                    .enumerate()
                    .map(|(k, ag)| control_step(&ag.runtime, &tube_of(k, ag, t), t))
                    .collect();
                for (k, f) in frames.iter().enumerate() {
                    push_clamps(&mut trace, step, t, &sc.agents[k].id, &f.clamps);
                }
                record_row(&mut trace, sc, &agents, &frames, &obstacles, t);
            }
            break;
        }

        let t_next = (step + 1) as f64 * dt;
        let centers: Vec<Vector> = agents.iter().map(|a| a.sigma.clone()).collect();

        let new_centers = match advance_centers(sc, cfg, &centers, &obstacles, step, t, t_next, &mut trace.events) {
            Ok(c) => c,
            Err(agent) => return abort(trace, step, &sc.agents[agent].id),
        };

        // Radii from the closed form at the end of the step.
        let obstacles_next = sc.obstacles_at(t_next);
        let new_radii: Vec<f64> = sc
            .agents
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let snapshot = NeighborSnapshot::new(sc, &new_centers, k);
                tube_radius(spec, &new_centers[k], &snapshot, &obstacles_next, t_next, sc.nu).rho
            })
            .collect();

        // Plants, with the controller inside every stage.
        let mut frames = Vec::with_capacity(agents.len());
        for (k, spec) in sc.agents.iter().enumerate() {
            let ag = &agents[k];
            let n = sc.dimension;
            let mut first: Option<ControlFrame> = None;
            let mut clamps: Vec<ClampEvent> = Vec::new();
            let mut failure: Option<Error> = None;
            let flat = ag.runtime.state.flatten();
            let (s0, s1) = (&ag.sigma, &new_centers[k]);
            let (r0, r1) = (ag.rho, new_radii[k]);
            let field = |tau: f64, xf: &Vector| {
                let w = ((tau - t) / dt).clamp(0.0, 1.0);
                let tube = TubeState {
                    agent: k,
                    sigma: s0.lerp(s1, w),
                    rho: r0 + (r1 - r0) * w,
                    t: tau,
                };
                let runtime = AgentRuntime {
                    state: PlantState::unflatten(xf, n),
                    funnels: ag.runtime.funnels.clone(),
                    gains: ag.runtime.gains.clone(),
                };
                let frame = control_step(&runtime, &tube, tau);
                for c in &frame.clamps {
                    if !clamps.contains(c) {
                        clamps.push(*c);
                    }
                }
                let d = match plant_rhs(&runtime.state, &frame.u, tau, &bindings[k]) {
                    Ok(d) => PlantState { stages: d }.flatten(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        Vector::from_element(xf.len(), f64::NAN)
                    }
                };
                if first.is_none() {
                    first = Some(frame);
                }
                d
            };
            let next = step_with(cfg.integrator, field, t, &flat, dt);
            if let Some(e) = failure {
                return Err(e);
            }
            push_clamps(&mut trace, step, t, &spec.id, &clamps);
            if !all_finite(&next) {
                return abort(trace, step, &spec.id);
            }
            frames.push((PlantState::unflatten(&next, n), first.expect("integrator evaluates the field")));
        }

        if record {
            let current: Vec<ControlFrame> = frames.iter().map(|(_, f)| f.clone()).collect();
            record_row(&mut trace, sc, &agents, &current, &obstacles, t);
        }

        for (k, (state, _)) in frames.into_iter().enumerate() {
            agents[k].sigma = new_centers[k].clone();
            agents[k].rho = new_radii[k];
            agents[k].runtime.state = state;
        }
    }

    Ok(trace)
}

/// Fraction of the stability limit `1/rate` used as the largest sub-step.
const STIFF_STEP: f64 = 0.5;
/// Fraction of the smallest repulsion gap a centre may close in one sub-step.
const GAP_STEP: f64 = 0.1;
/// Upper bound on sub-steps per grid step.
const MAX_SUBSTEPS: f64 = 1e5;

/// Advances every centre from `t` to `t_next`. Obstacles stay frozen at their
/// state at `t`. Where the repulsion is stiff the interval is split into
/// sub-steps, each starting from a fresh synchronous snapshot of all centres.
/// Returns the index of the first agent whose centre became non-finite on
/// failure.
#[allow(clippy::too_many_arguments)]
fn advance_centers(
    sc: &Scenario,
    cfg: &SimConfig,
    centers: &[Vector],
    obstacles: &[ObstacleState],
    step: usize,
    t: f64,
    t_next: f64,
    events: &mut Vec<SimEvent>,
) -> std::result::Result<Vec<Vector>, usize> {
    let na = sc.agents.len();
    let mut current = centers.to_vec();
    let mut singular: Vec<Vec<Singularity>> = vec![Vec::new(); na];
    let h_min = (t_next - t) / MAX_SUBSTEPS;
    let mut tau = t;
    while tau < t_next {
        let snapshots: Vec<NeighborSnapshot> = (0..na).map(|k| NeighborSnapshot::new(sc, &current, k)).collect();

        let mut h = t_next - tau;
        let stiffness: Vec<_> = sc
            .agents
            .iter()
            .enumerate()
            .map(|(k, a)| repulsion_stiffness(a, &current[k], &snapshots[k], obstacles, tau, cfg.terms))
            .collect();
        if stiffness.iter().any(|s| s.rate > 0.0) {
            let speeds: Vec<f64> = sc
                .agents
                .iter()
                .enumerate()
                .map(|(k, a)| center_rhs(a, &current[k], &snapshots[k], obstacles, tau, cfg.terms).velocity.norm())
                .collect();
            let v_max = speeds.iter().copied().fold(0.0, f64::max);
            for (k, s) in stiffness.iter().enumerate() {
                if s.rate > 0.0 {
                    h = h.min(STIFF_STEP / s.rate);
                }
                if s.gap.is_finite() {
                    let closing = speeds[k] + v_max;
                    if closing > 0.0 {
                        h = h.min(GAP_STEP * s.gap / closing);
                    }
                }
            }
            h = h.max(h_min);
        }
        // no stage may sample the goal term just short of a completion time
        for a in &sc.agents {
            if tau < a.completion_time && a.completion_time < tau + h {
                h = a.completion_time - tau;
            }
        }
        let end = if tau + h >= t_next - 1e-12 * t_next.max(1.0) { t_next } else { tau + h };
        let h = end - tau;

        let field = |s_tau: f64, states: &[Vector]| -> Vec<Vector> {
            (0..na)
                .map(|k| {
                    let snapshot = NeighborSnapshot::new(sc, states, k);
                    let r = center_rhs(&sc.agents[k], &states[k], &snapshot, obstacles, s_tau, cfg.terms);
                    for c in r.clamps {
                        if !singular[k].contains(&c) {
                            singular[k].push(c);
                        }
                    }
                    r.velocity
                })
                .collect()
        };
        let mut next = coupled_step(cfg.integrator, field, tau, &current, h);
        for (k, spec) in sc.agents.iter().enumerate() {
            let t_c = spec.completion_time;
            if tau < t_c && end >= t_c {
                let distance = (&next[k] - &spec.target_point).norm();
                if distance < SNAP_TOLERANCE {
                    next[k] = spec.target_point.clone();
                    events.push(SimEvent::TargetSnap {
                        step,
                        t: end,
                        agent: spec.id.clone(),
                        distance,
                    });
                }
            }
            if !all_finite(&next[k]) {
                return Err(k);
            }
        }
        current = next;
        tau = end;
    }

    for (k, marks) in singular.into_iter().enumerate() {
        for s in marks {
            let (source, other) = match s {
                Singularity::Obstacle(j) => ("obstacle", sc.obstacles[j].id.clone()),
                Singularity::Agent(l) => ("agent", sc.agents[l].id.clone()),
            };
            events.push(SimEvent::NearSingularity {
                step,
                t,
                agent: sc.agents[k].id.clone(),
                source: source.into(),
                other,
            });
        }
    }
    Ok(current)
}

fn tube_of(k: usize, ag: &Agent, t: f64) -> TubeState {
    TubeState {
        agent: k,
        sigma: ag.sigma.clone(),
        rho: ag.rho,
        t,
    }
}

fn push_clamps(trace: &mut SimTrace, step: usize, t: f64, agent: &str, clamps: &[ClampEvent]) {
    for c in clamps {
        trace.events.push(SimEvent::ControllerClamp {
            step,
            t,
            agent: agent.to_string(),
            stage: c.stage,
            component: c.component,
        });
    }
}

fn abort(trace: SimTrace, step: usize, agent: &str) -> Result<SimTrace> {
    Err(Error::Aborted {
        step,
        agent: agent.to_string(),
        partial: Box::new(trace),
    })
}

fn record_row(
    trace: &mut SimTrace,
    sc: &Scenario,
    agents: &[Agent],
    frames: &[ControlFrame],
    obstacles: &[ObstacleState],
    t: f64,
) {
    trace.times.push(t);
    for (k, (ag, frame)) in agents.iter().zip(frames).enumerate() {
        let rec = &mut trace.agents[k];
        rec.sigma.extend(ag.sigma.iter());
        rec.rho.push(ag.rho);
        for s in &ag.runtime.state.stages {
            rec.x.extend(s.iter());
        }
        rec.u.extend(frame.u.iter());
        rec.e1.push(frame.e1);
    }
    for (j, o) in obstacles.iter().enumerate() {
        trace.obstacles[j].center.extend(o.center.iter());
        trace.obstacles[j].radius.push(o.radius);
    }
    annotate_row(trace, sc, trace.rows() - 1);
}

/// Fills the social interaction values and switch states of one row from the
/// recorded centres and obstacles.
fn annotate_row(trace: &mut SimTrace, sc: &Scenario, row: usize) {
    let t = trace.times[row];
    let na = trace.agents.len();
    let centers: Vec<Vector> = (0..na).map(|k| trace.sigma_vec(k, row)).collect();
    let obstacles: Vec<ObstacleState> = (0..trace.obstacles.len())
        .map(|j| ObstacleState {
            center: trace.obstacle_center(j, row),
            radius: trace.obstacle_radius(j, row),
        })
        .collect();
    for (k, spec) in sc.agents.iter().enumerate() {
        let snapshot = NeighborSnapshot::new(sc, &centers, k);
        let r = center_rhs(spec, &centers[k], &snapshot, &obstacles, t, TermMask::ALL);
        let rec = &mut trace.agents[k];
        for (l, other) in sc.agents.iter().enumerate() {
            rec.phi.push(if l == k {
                0.0
            } else {
                sif(spec.social_index, other.social_index, t, spec.completion_time, spec.sif_decay)
            });
            rec.agent_switch.push(r.active_agents.contains(&l));
        }
        for j in 0..obstacles.len() {
            rec.obstacle_switch.push(r.active_obstacles.contains(&j));
        }
    }
}

/// Recomputes the social interaction values and switch states of every row,
/// e.g. after loading a trace that stores only centres, radii and states.
pub fn annotate(trace: &mut SimTrace, sc: &Scenario) {
    for a in &mut trace.agents {
        a.phi.clear();
        a.obstacle_switch.clear();
        a.agent_switch.clear();
    }
    for row in 0..trace.rows() {
        annotate_row(trace, sc, row);
    }
}

/// Tube centres of the same scenario with every obstacle and neighbour term
/// switched off, on the same grid as `cfg`. Goal-only centres do not interact,
/// so each agent runs alone in an empty workspace and its tube keeps the
/// nominal radius.
pub fn nominal_centers(sc: &Scenario, cfg: &SimConfig) -> Result<SimTrace> {
    let cfg = SimConfig {
        terms: TermMask::GOAL_ONLY,
        ..cfg.clone()
    };
    let mut merged: Option<SimTrace> = None;
    for agent in &sc.agents {
        let alone = Scenario {
            agents: vec![agent.clone()],
            obstacles: Vec::new(),
            ..sc.clone()
        };
        let run = run_simulation_unchecked(&alone, &cfg)?;
        match merged.as_mut() {
            None => merged = Some(run),
            Some(m) => {
                m.agents.extend(run.agents);
                m.events.extend(run.events);
            }
        }
    }
    Ok(merged.unwrap_or_else(|| SimTrace {
        dimension: sc.dimension,
        dt: cfg.dt,
        times: Vec::new(),
        agents: Vec::new(),
        obstacles: Vec::new(),
        events: Vec::new(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn rk4_zero_field_keeps_state() {
        let x = v(&[1.0, -2.0]);
        assert_eq!(rk4_step(|_, s| s * 0.0, 0.0, &x, 0.1), x);
    }

    #[test]
    fn rk4_exponential_growth() {
        let x = rk4_step(|_, s| s.clone(), 0.0, &v(&[1.0]), 0.1);
        assert!((x[0] - 0.1f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_exponential_decay_over_unit_time() {
        let mut x = v(&[1.0]);
        for k in 0..1000 {
            x = rk4_step(|_, s| -s, k as f64 * 1e-3, &x, 1e-3);
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn euler_matches_first_order() {
        let x = euler_step(|_, s| s * 2.0, 0.0, &v(&[1.0]), 0.1);
        assert!((x[0] - 1.2).abs() < 1e-15);
    }

    const SINGLE: &str = r#"
dimension: 2
horizon: 4
agents:
  - id: solo
    social_index: 0.5
    start_point: [0, 0]
    start_radius: 1.0
    target_point: [3, 1]
    target_radius: 1.0
    completion_time: 4
    rho_min: 0.5
    rho_max: 0.9
    goal_gain: 0.75
"#;

    #[test]
    fn grid_and_row_count() {
        let sc = parse_scenario(SINGLE).unwrap();
        let trace = run_simulation(&sc, &SimConfig::for_scenario(&sc)).unwrap();
        assert_eq!(trace.rows(), 4001);
        assert_eq!(trace.times[4000], 4.0);
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.record_stride = 10;
        assert_eq!(run_simulation(&sc, &cfg).unwrap().rows(), 401);
    }

    #[test]
    fn reaches_target_at_completion_time() {
        let sc = parse_scenario(SINGLE).unwrap();
        let trace = run_simulation(&sc, &SimConfig::for_scenario(&sc)).unwrap();
        let last = trace.rows() - 1;
        assert_eq!(trace.sigma_vec(0, last), v(&[3.0, 1.0]));
        assert!((trace.output_vec(0, last) - v(&[3.0, 1.0])).norm() < 1.0);
        assert_eq!(trace.clamp_count("solo"), 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let sc = parse_scenario(SINGLE).unwrap();
        let cfg = SimConfig::for_scenario(&sc);
        assert_eq!(run_simulation(&sc, &cfg).unwrap(), run_simulation(&sc, &cfg).unwrap());
    }

    #[test]
    fn config_is_checked() {
        let sc = parse_scenario(SINGLE).unwrap();
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.dt = 0.05;
        assert!(matches!(run_simulation(&sc, &cfg), Err(Error::Config(_))));
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.t_end = 3.0;
        assert!(matches!(run_simulation(&sc, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_scenario_is_refused() {
        let mut sc = parse_scenario(SINGLE).unwrap();
        sc.agents[0].rho_min = 0.95;
        assert!(matches!(
            run_simulation(&sc, &SimConfig::for_scenario(&sc)),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn blow_up_aborts_with_partial_trace() {
        let mut sc = parse_scenario(SINGLE).unwrap();
        sc.agents[0].goal_gain = f64::MAX;
        match run_simulation_unchecked(&sc, &SimConfig::for_scenario(&sc)) {
            Err(Error::Aborted { step, partial, .. }) => {
                assert_eq!(step, 0);
                assert_eq!(partial.rows(), 0);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn truncate_drops_rows_consistently() {
        let sc = parse_scenario(SINGLE).unwrap();
        let mut trace = run_simulation(&sc, &SimConfig::for_scenario(&sc)).unwrap();
        trace.truncate(10);
        assert_eq!(trace.rows(), 10);
        assert_eq!(trace.agents[0].sigma.len(), 20);
        assert_eq!(trace.agents[0].phi.len(), 10);
    }
}
