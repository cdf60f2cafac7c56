use std::fmt;

use serde::Serialize;

use super::{Scenario, Vector};
use crate::tube::{tube_radius, NeighborSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Failing blocks a simulation run.
    Hard,
    /// Reported but does not block.
    Advisory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    SocialIndexRange,
    GoalGainBound,
    RadiusOrdering,
    StartSeparation,
    TargetSeparation,
    StartClearOfObstacles,
    TargetClearOfObstacles,
    InitialOutputInTube,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::SocialIndexRange => "social_index_range",
            CheckKind::GoalGainBound => "goal_gain_bound",
            CheckKind::RadiusOrdering => "radius_ordering",
            CheckKind::StartSeparation => "start_separation",
            CheckKind::TargetSeparation => "target_separation",
            CheckKind::StartClearOfObstacles => "start_clear_of_obstacles",
            CheckKind::TargetClearOfObstacles => "target_clear_of_obstacles",
            CheckKind::InitialOutputInTube => "initial_output_in_tube",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationEntry {
    pub check: CheckKind,
    /// Agent id, or `a/b` for a pair.
    pub subject: String,
    pub passed: bool,
    /// Signed margin; positive means satisfied.
    pub margin: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn hard_failures(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.entries
            .iter()
            .filter(|e| !e.passed && e.severity == Severity::Hard)
    }

    pub fn all_hard_pass(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn find(&self, check: CheckKind, subject: &str) -> Option<&ValidationEntry> {
        self.entries
            .iter()
            .find(|e| e.check == check && e.subject == subject)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let status = match (e.passed, e.severity) {
                (true, _) => "PASS",
                (false, Severity::Hard) => "FAIL",
                (false, Severity::Advisory) => "WARN",
            };
            writeln!(
                f,
                "{status:<4}  {:<26} {:<12} margin {:+.6e}",
                e.check.name(),
                e.subject,
                e.margin
            )?;
        }
        let hard = self.hard_failures().count();
        write!(
            f,
            "{} checks, {} hard failure(s)",
            self.entries.len(),
            hard
        )
    }
}

/// Checks every separation, ordering and containment assumption of the tube
/// construction. Pure: the same scenario always yields the same report.
pub fn validate_scenario(sc: &Scenario) -> ValidationReport {
    let mut entries = Vec::new();
    let mut push = |check, subject: String, margin: f64, passed: bool, severity| {
        entries.push(ValidationEntry {
            check,
            subject,
            passed,
            margin,
            severity,
        })
    };

    for a in &sc.agents {
        let s = a.social_index;
        let margin = s.min(1.0 - s);
        push(CheckKind::SocialIndexRange, a.id.clone(), margin, margin > 0.0, Severity::Hard);

        let margin = a.goal_gain - 1.0 / a.completion_time;
        push(CheckKind::GoalGainBound, a.id.clone(), margin, margin > 0.0, Severity::Advisory);

        let strict = a.rho_max - a.rho_min;
        let cap = a.start_radius.min(a.target_radius) - a.rho_max;
        push(
            CheckKind::RadiusOrdering,
            a.id.clone(),
            strict.min(cap),
            strict > 0.0 && cap >= 0.0,
            Severity::Hard,
        );
    }

    for (k, a) in sc.agents.iter().enumerate() {
        for b in &sc.agents[k + 1..] {
            let pair = format!("{}/{}", a.id, b.id);
            let reach = a.rho_max + b.rho_max;
            let margin = (&a.start_point - &b.start_point).norm() - reach;
            push(CheckKind::StartSeparation, pair.clone(), margin, margin > 0.0, Severity::Hard);
            let margin = (&a.target_point - &b.target_point).norm() - reach;
            push(CheckKind::TargetSeparation, pair, margin, margin > 0.0, Severity::Hard);
        }
    }

    let start_obstacles = sc.obstacles_at(0.0);
    for a in &sc.agents {
        let margin = clearance(&a.start_point, &start_obstacles) - a.start_radius;
        push(
            CheckKind::StartClearOfObstacles,
            a.id.clone(),
            margin,
            margin > 0.0,
            Severity::Hard,
        );

        let mut margin = f64::INFINITY;
        let steps = ((sc.horizon - a.completion_time) / sc.dt).ceil().max(0.0) as usize;
        for i in 0..=steps {
            let t = (a.completion_time + i as f64 * sc.dt).min(sc.horizon.max(a.completion_time));
            margin = margin.min(clearance(&a.target_point, &sc.obstacles_at(t)) - a.target_radius);
        }
        push(
            CheckKind::TargetClearOfObstacles,
            a.id.clone(),
            margin,
            margin > 0.0,
            Severity::Hard,
        );
    }

    let starts: Vec<Vector> = sc.agents.iter().map(|a| a.start_point.clone()).collect();
    for (k, a) in sc.agents.iter().enumerate() {
        let snapshot = NeighborSnapshot::new(sc, &starts, k);
        let rho0 = tube_radius(a, &a.start_point, &snapshot, &start_obstacles, 0.0, sc.nu).rho;
        let margin = rho0 - (a.initial_output() - &a.start_point).norm();
        push(
            CheckKind::InitialOutputInTube,
            a.id.clone(),
            margin,
            margin > 0.0,
            Severity::Hard,
        );
    }

    ValidationReport { entries }
}

/// Smallest signed distance from `p` to any obstacle ball; `+∞` without obstacles.
fn clearance(p: &Vector, obstacles: &[crate::scenario::ObstacleState]) -> f64 {
    obstacles
        .iter()
        .map(|o| (p - &o.center).norm() - o.radius)
        .fold(f64::INFINITY, f64::min)
}
