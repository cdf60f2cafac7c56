//! Declarative world model: agents with social indices, time-varying ball
//! obstacles, targets, gains and timing.
//!
//! A [`Scenario`] is immutable once parsed. [`validate_scenario`] turns every
//! separation and ordering assumption the tube construction relies on into a
//! report entry with a signed margin.

mod schema;
mod validate;

use nalgebra::DVector;

use crate::controller::FunnelParams;
use crate::plants::PlantBinding;

pub use schema::{parse_scenario, DEFAULT_DT, DEFAULT_NU, DEFAULT_SIF_DECAY};
pub use validate::{validate_scenario, CheckKind, Severity, ValidationEntry, ValidationReport};

/// A point or direction in the n-dimensional output space.
pub type Vector = DVector<f64>;

/// Repulsion strengths `(h2, h3)` for one obstacle or one neighbouring agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepulsionGains {
    pub radial: f64,
    pub tangential: f64,
}

impl RepulsionGains {
    pub const fn new(radial: f64, tangential: f64) -> Self {
        Self { radial, tangential }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    /// Social awareness index in (0, 1); low is egoistic, high is altruistic.
    pub social_index: f64,
    pub start_point: Vector,
    pub start_radius: f64,
    pub target_point: Vector,
    pub target_radius: f64,
    /// Prescribed completion time `t_c` in seconds.
    pub completion_time: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `h1`, the rate of approach towards the target point.
    pub goal_gain: f64,
    /// One entry per obstacle, in scenario order.
    pub obstacle_gains: Vec<RepulsionGains>,
    /// One entry per agent, in scenario order. The entry at the agent's own
    /// index is never read.
    pub agent_gains: Vec<RepulsionGains>,
    /// Decay width `b` of the social interaction function after `t_c`.
    pub sif_decay: f64,
    pub plant: PlantBinding,
    /// `None` means funnels are sized from the initial tracking errors.
    pub funnels: Option<FunnelParams>,
    /// `κ_1..κ_N`, one per plant stage.
    pub controller_gains: Vec<f64>,
    /// Initial output `y(0)`; defaults to the start point (the initial tube centre).
    pub initial_output: Option<Vector>,
}

impl AgentSpec {
    pub fn initial_output(&self) -> Vector {
        self.initial_output
            .clone()
            .unwrap_or_else(|| self.start_point.clone())
    }
}

/// Centre trajectory of an obstacle. Every primitive is evaluated exactly at
/// any `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    Static {
        center: Vector,
    },
    Linear {
        start: Vector,
        velocity: Vector,
    },
    /// Uniform circular motion in the plane spanned by axes `plane.0` and `plane.1`.
    Circular {
        center: Vector,
        radius: f64,
        angular_speed: f64,
        phase: f64,
        plane: (usize, usize),
    },
    /// Piecewise-linear interpolation between timed waypoints; the first and
    /// last points are held outside the time range.
    Waypoints {
        times: Vec<f64>,
        points: Vec<Vector>,
    },
}

impl Motion {
    pub fn center_at(&self, t: f64) -> Vector {
        match self {
            Motion::Static { center } => center.clone(),
            Motion::Linear { start, velocity } => start + velocity * t,
            Motion::Circular {
                center,
                radius,
                angular_speed,
                phase,
                plane,
            } => {
                let angle = angular_speed * t + phase;
                let mut c = center.clone();
                c[plane.0] += radius * angle.cos();
                c[plane.1] += radius * angle.sin();
                c
            }
            Motion::Waypoints { times, points } => {
                let (i, w) = bracket(times, t);
                if w == 0.0 {
                    points[i].clone()
                } else {
                    points[i].lerp(&points[i + 1], w)
                }
            }
        }
    }
}

/// Obstacle radius over time.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusProfile {
    Constant(f64),
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

impl RadiusProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RadiusProfile::Constant(r) => *r,
            RadiusProfile::PiecewiseLinear { times, values } => {
                let (i, w) = bracket(times, t);
                if w == 0.0 {
                    values[i]
                } else {
                    values[i] + (values[i + 1] - values[i]) * w
                }
            }
        }
    }
}

/// Index of the segment containing `t` and the interpolation weight inside it.
/// `times` is non-empty and strictly increasing.
fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let last = times.len() - 1;
    if t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[last] {
        return (last, 0.0);
    }
    let i = times.partition_point(|&tk| tk <= t) - 1;
    (i, (t - times[i]) / (times[i + 1] - times[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSpec {
    pub id: String,
    pub motion: Motion,
    pub radius: RadiusProfile,
}

impl ObstacleSpec {
    pub fn state_at(&self, t: f64) -> ObstacleState {
        ObstacleState {
            center: self.motion.center_at(t),
            radius: self.radius.at(t),
        }
    }
}

/// An obstacle ball sampled at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub center: Vector,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dimension: usize,
    /// Smoothing parameter `ν` of the smooth minimum.
    pub nu: f64,
    pub horizon: f64,
    /// Integration step used by default and as the sampling grid of the
    /// target-clearance check.
    pub dt: f64,
    /// Base seed for replayable disturbances.
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    pub obstacles: Vec<ObstacleSpec>,
}

impl Scenario {
    pub fn obstacles_at(&self, t: f64) -> Vec<ObstacleState> {
        self.obstacles.iter().map(|o| o.state_at(t)).collect()
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn max_completion_time(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.completion_time)
            .fold(0.0, f64::max)
    }
}
