//! Online spatiotemporal tube synthesis.
//!
//! Each agent's tube is a ball `Γ(t) = B(σ(t), ρ(t))`. The centre follows a
//! prescribed-time goal term plus switched repulsion from nearby obstacles and
//! neighbouring tube centres; the neighbour term is weighted by the social
//! interaction function. The radius is the log-sum-exp smooth minimum of
//! `ρ_max`, the obstacle clearances and the socially weighted agent gaps, so it
//! never exceeds any of them.

use crate::scenario::{AgentSpec, ObstacleState, Scenario, Vector};

/// Floor on the repulsion denominators and on the switch distances.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;
/// Upper clamp on the goal time factor `t_c/(t_c − t)`.
pub const TIME_FACTOR_MAX: f64 = 1e6;
/// Centre is snapped onto the target at `t_c` when it is closer than this.
pub const SNAP_TOLERANCE: f64 = 1e-4;

/// Relative tolerance under which two directions count as parallel.
const PARALLEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TubeState {
    pub agent: usize,
    pub sigma: Vector,
    pub rho: f64,
    pub t: f64,
}

/// Public data of one neighbouring agent, captured at the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub sigma: Vector,
    pub rho_min: f64,
    pub rho_max: f64,
    pub social_index: f64,
    pub completion_time: f64,
}

/// Every agent except the owner, all sampled at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSnapshot {
    pub owner: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSnapshot {
    pub fn new(scenario: &Scenario, centers: &[Vector], owner: usize) -> Self {
        let neighbors = scenario
            .agents
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != owner)
            .map(|(l, a)| Neighbor {
                index: l,
                sigma: centers[l].clone(),
                rho_min: a.rho_min,
                rho_max: a.rho_max,
                social_index: a.social_index,
                completion_time: a.completion_time,
            })
            .collect();
        Self { owner, neighbors }
    }
}

/// Social interaction function `φ^{(k,l)}`.
///
/// Before `t_c^{(k)}` it is agent k's share `s_k/(s_k + s_l)` of the avoidance
/// effort; from `t_c^{(k)}` on it is the negated share under a Gaussian decay of
/// width `b`. `b = 0` yields the limit value 0.
pub fn sif(s_k: f64, s_l: f64, t: f64, t_c_k: f64, b: f64) -> f64 {
    let share = s_k / (s_k + s_l);
    if t < t_c_k {
        share
    } else if b == 0.0 {
        0.0
    } else {
        let dt = t - t_c_k;
        -share * (-(dt * dt) / (b * b)).exp()
    }
}

/// Prescribed-time attraction `h1·t_c/(t_c − t)·(η − σ)`, zero from `t_c` on.
pub fn goal_attraction(sigma: &Vector, eta: &Vector, t: f64, t_c: f64, h1: f64) -> Vector {
    if t >= t_c {
        return Vector::zeros(sigma.len());
    }
    let factor = (t_c / (t_c - t)).min(TIME_FACTOR_MAX);
    (eta - sigma) * (h1 * factor)
}

/// A vector orthogonal to `m` with the same norm.
///
/// In the plane this is `m` rotated by 90°. In three dimensions it is along
/// `m × a`, where `a` is the goal direction, or the first coordinate axis not
/// parallel to `m` when the goal direction is. Beyond three dimensions `a` is
/// orthogonalised against `m` instead. The sign is flipped whenever the result
/// points away from the goal.
pub fn null_space_vector(m: &Vector, goal: &Vector) -> Vector {
    let n = m.len();
    let m_norm = m.norm();
    if n < 2 || m_norm == 0.0 {
        return Vector::zeros(n);
    }
    let mut v = match n {
        2 => Vector::from_column_slice(&[-m[1], m[0]]),
        _ => {
            let a = reference_direction(m, goal);
            let dir = if n == 3 {
                cross3(m, &a)
            } else {
                let unit = m / m_norm;
                &a - &unit * unit.dot(&a)
            };
            dir.normalize() * m_norm
        }
    };
    let g_norm = goal.norm();
    if v.dot(goal) < -PARALLEL_TOL * m_norm * g_norm {
        v = -v;
    }
    v
}

fn is_parallel(m: &Vector, a: &Vector) -> bool {
    let (mn, an) = (m.norm(), a.norm());
    if an == 0.0 {
        return true;
    }
    let c = m.dot(a) / (mn * an);
    1.0 - c.abs() <= PARALLEL_TOL
}

fn reference_direction(m: &Vector, goal: &Vector) -> Vector {
    if !is_parallel(m, goal) {
        return goal.clone();
    }
    (0..m.len())
        .map(|i| {
            let mut e = Vector::zeros(m.len());
            e[i] = 1.0;
            e
        })
        .find(|e| !is_parallel(m, e))
        .expect("a non-zero vector is parallel to at most one axis")
}

fn cross3(a: &Vector, b: &Vector) -> Vector {
    Vector::from_column_slice(&[
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Switch value plus radial (`m`) and tangential (`v`) repulsion directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Repulsion {
    pub switch: f64,
    pub m: Vector,
    pub v: Vector,
    /// A denominator fell below [`DENOMINATOR_FLOOR`] and was clamped.
    pub clamped: bool,
}

fn repulsion(diff: Vector, gap: f64, reach: f64, core: f64, goal: &Vector) -> Repulsion {
    let mut clamped = false;
    let switch = if gap <= reach {
        if gap < DENOMINATOR_FLOOR {
            clamped = true;
        }
        1.0 / gap.max(DENOMINATOR_FLOOR) - 1.0 / reach
    } else {
        0.0
    };
    let mut den = core;
    if den < DENOMINATOR_FLOOR {
        den = DENOMINATOR_FLOOR;
        clamped = true;
    }
    let m = diff / (den * den * den);
    let v = null_space_vector(&m, goal);
    Repulsion {
        switch,
        m,
        v,
        clamped,
    }
}

/// Obstacle switch `α_j`, radial push `m_j` and its orthogonal companion `v_j`.
///
/// `goal` is `η − σ` and only orients `v_j`.
pub fn obstacle_terms(
    sigma: &Vector,
    center: &Vector,
    rho_o: f64,
    rho_max: f64,
    rho_min: f64,
    goal: &Vector,
) -> Repulsion {
    let diff = sigma - center;
    let dist = diff.norm();
    repulsion(diff, dist - rho_o, rho_max, dist - (rho_o + rho_min), goal)
}

/// Agent switch `β^{(k,l)}` with reach `ρ_max^{(k)} + ρ_max^{(l)}`, and the
/// repulsion pair `(m̂, v̂)` pushing `σ_k` away from `σ_l`.
pub fn agent_terms(
    sigma_k: &Vector,
    sigma_l: &Vector,
    rho_min_k: f64,
    rho_min_l: f64,
    rho_max_k: f64,
    rho_max_l: f64,
    goal: &Vector,
) -> Repulsion {
    let diff = sigma_k - sigma_l;
    let dist = diff.norm();
    repulsion(
        diff,
        dist,
        rho_max_k + rho_max_l,
        dist - (rho_min_k + rho_min_l),
        goal,
    )
}

/// Which interaction terms enter the centre dynamics. The goal term is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask {
    pub obstacles: bool,
    pub agents: bool,
}

impl TermMask {
    pub const ALL: TermMask = TermMask {
        obstacles: true,
        agents: true,
    };
    pub const GOAL_ONLY: TermMask = TermMask {
        obstacles: false,
        agents: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    Obstacle(usize),
    Agent(usize),
}

/// Centre velocity together with what was active while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterRhs {
    pub velocity: Vector,
    /// Obstacles whose switch `α_j` is non-zero.
    pub active_obstacles: Vec<usize>,
    /// Neighbours whose switch `β` is non-zero.
    pub active_agents: Vec<usize>,
    pub clamps: Vec<Singularity>,
}

/// Centre dynamics of one agent against a frozen neighbour snapshot and
/// obstacle sample.
pub fn center_rhs(
    agent: &AgentSpec,
    sigma: &Vector,
    neighbors: &NeighborSnapshot,
    obstacles: &[ObstacleState],
    t: f64,
    mask: TermMask,
) -> CenterRhs {
    let goal = &agent.target_point - sigma;
    let mut velocity = goal_attraction(
        sigma,
        &agent.target_point,
        t,
        agent.completion_time,
        agent.goal_gain,
    );
    let mut out = CenterRhs {
        velocity: Vector::zeros(0),
        active_obstacles: Vec::new(),
        active_agents: Vec::new(),
        clamps: Vec::new(),
    };

    if mask.obstacles {
        for (j, obs) in obstacles.iter().enumerate() {
            let r = obstacle_terms(sigma, &obs.center, obs.radius, agent.rho_max, agent.rho_min, &goal);
            if r.clamped {
                out.clamps.push(Singularity::Obstacle(j));
            }
            if r.switch != 0.0 {
                let g = agent.obstacle_gains[j];
                velocity += (r.m * g.radial + r.v * g.tangential) * r.switch;
                out.active_obstacles.push(j);
            }
        }
    }

    if mask.agents {
        for nb in &neighbors.neighbors {
            let r = agent_terms(
                sigma,
                &nb.sigma,
                agent.rho_min,
                nb.rho_min,
                agent.rho_max,
                nb.rho_max,
                &goal,
            );
            if r.clamped {
                out.clamps.push(Singularity::Agent(nb.index));
            }
            if r.switch != 0.0 {
                let phi = sif(
                    agent.social_index,
                    nb.social_index,
                    t,
                    agent.completion_time,
                    agent.sif_decay,
                );
                let g = agent.agent_gains[nb.index];
                velocity += (r.m * g.radial + r.v * g.tangential) * (r.switch * phi);
                out.active_agents.push(nb.index);
            }
        }
    }

    out.velocity = velocity;
    out
}

/// Local scale of the repulsion terms acting on one centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stiffness {
    /// Bound on `‖∂σ̇/∂σ‖` contributed by the active repulsion terms, in 1/s.
    pub rate: f64,
    /// Smallest remaining gap `‖σ − o‖ − ρ_o − ρ_min` or
    /// `‖σ_k − σ_l‖ − ρ_min^{(k)} − ρ_min^{(l)}` over the active terms.
    pub gap: f64,
}

/// Stiffness of the switched repulsion at `σ`; zero rate and infinite gap
/// when no switch is on.
pub fn repulsion_stiffness(
    agent: &AgentSpec,
    sigma: &Vector,
    neighbors: &NeighborSnapshot,
    obstacles: &[ObstacleState],
    t: f64,
    mask: TermMask,
) -> Stiffness {
    let mut out = Stiffness {
        rate: 0.0,
        gap: f64::INFINITY,
    };
    // |d/dr (s(r)·r/c³)| with c = r − core offset, for a switch s = 1/gap − 1/reach
    let mut add = |weight: f64, dist: f64, gap: f64, reach: f64, core: f64| {
        if gap > reach || weight == 0.0 {
            return;
        }
        let gap = gap.max(DENOMINATOR_FLOOR);
        let core = core.max(DENOMINATOR_FLOOR);
        let switch = 1.0 / gap - 1.0 / reach;
        let push = dist / core.powi(3);
        out.rate += weight * (switch * push * (1.0 / dist.max(DENOMINATOR_FLOOR) + 3.0 / core) + push / (gap * gap));
        out.gap = out.gap.min(core);
    };
    if mask.obstacles {
        for (j, o) in obstacles.iter().enumerate() {
            let dist = (sigma - &o.center).norm();
            let g = agent.obstacle_gains[j];
            add(
                g.radial + g.tangential,
                dist,
                dist - o.radius,
                agent.rho_max,
                dist - o.radius - agent.rho_min,
            );
        }
    }
    if mask.agents {
        for nb in &neighbors.neighbors {
            let dist = (sigma - &nb.sigma).norm();
            let phi = sif(agent.social_index, nb.social_index, t, agent.completion_time, agent.sif_decay);
            let g = agent.agent_gains[nb.index];
            add(
                (g.radial + g.tangential) * phi.abs(),
                dist,
                dist,
                agent.rho_max + nb.rho_max,
                dist - agent.rho_min - nb.rho_min,
            );
        }
    }
    out
}

/// Signed clearance between a tube centre and an obstacle ball.
pub fn d_prime_obstacle(sigma: &Vector, center: &Vector, rho_o: f64) -> f64 {
    (sigma - center).norm() - rho_o
}

/// Socially weighted gap `ρ_min^{(k)} + (‖σ_k − σ_l‖ − ρ_min^{(k)} − ρ_min^{(l)})·(1 − φ)`.
pub fn d_prime_agent(sigma_k: &Vector, sigma_l: &Vector, rho_min_k: f64, rho_min_l: f64, phi: f64) -> f64 {
    rho_min_k + ((sigma_k - sigma_l).norm() - (rho_min_k + rho_min_l)) * (1.0 - phi)
}

/// Log-sum-exp smooth minimum `−(1/ν)·ln Σ e^{−ν·x}`, shifted by the exact
/// minimum so no exponent overflows. The empty minimum is `+∞`.
pub fn smooth_min(values: &[f64], nu: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return lo;
    }
    let sum: f64 = values.iter().map(|&x| (-nu * (x - lo)).exp()).sum();
    lo - sum.ln() / nu
}

/// Tube radius `−(1/ν)·ln(e^{−ν·ρ_max} + e^{−ν·d1} + e^{−ν·d2})`.
pub fn radius_closed_form(d1: f64, d2: f64, rho_max: f64, nu: f64) -> f64 {
    smooth_min(&[rho_max, d1, d2], nu)
}

/// Radius rate from the differential form of the radius law, given the rates
/// of `d1` and `d2`. Only used to cross-check the closed form.
pub fn radius_rate(d1: f64, d2: f64, d1_dot: f64, d2_dot: f64, rho_max: f64, nu: f64) -> f64 {
    let lo = rho_max.min(d1).min(d2);
    let w = |d: f64| (-nu * (d - lo)).exp();
    let (w1, w2) = (w(d1), w(d2));
    let num = if w1 == 0.0 { 0.0 } else { w1 * d1_dot } + if w2 == 0.0 { 0.0 } else { w2 * d2_dot };
    num / (w(rho_max) + w1 + w2)
}

/// Positive lower bound on the radius once the centre keeps `ρ_min` clear of
/// every obstacle and neighbour.
pub fn radius_lower_bound(rho_min: f64, rho_max: f64, nu: f64) -> f64 {
    smooth_min(&[rho_max, rho_min, rho_min], nu)
}

/// The two smooth minima feeding the radius, and the radius itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusParts {
    pub d1: f64,
    pub d2: f64,
    pub rho: f64,
}

pub fn tube_radius(
    agent: &AgentSpec,
    sigma: &Vector,
    neighbors: &NeighborSnapshot,
    obstacles: &[ObstacleState],
    t: f64,
    nu: f64,
) -> RadiusParts {
    let clearances: Vec<f64> = obstacles
        .iter()
        .map(|o| d_prime_obstacle(sigma, &o.center, o.radius))
        .collect();
    let gaps: Vec<f64> = neighbors
        .neighbors
        .iter()
        .map(|nb| {
            let phi = sif(
                agent.social_index,
                nb.social_index,
                t,
                agent.completion_time,
                agent.sif_decay,
            );
            d_prime_agent(sigma, &nb.sigma, agent.rho_min, nb.rho_min, phi)
        })
        .collect();
    let d1 = smooth_min(&clearances, nu);
    let d2 = smooth_min(&gaps, nu);
    RadiusParts {
        d1,
        d2,
        rho: radius_closed_form(d1, d2, agent.rho_max, nu),
    }
}
