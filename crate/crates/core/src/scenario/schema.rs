use std::collections::{BTreeMap, HashSet};

use serde::Deserialize;

use super::{AgentSpec, Motion, ObstacleSpec, RadiusProfile, RepulsionGains, Scenario, Vector};
use crate::controller::{FunnelParams, StageFunnel};
use crate::error::{Error, Result};
use crate::plants::{DisturbanceKind, DisturbanceSpec, PlantBinding, PlantModel};

pub const DEFAULT_NU: f64 = 10.0;
pub const DEFAULT_SIF_DECAY: f64 = 0.5;
pub const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_REPULSION: f64 = 1.0;
const DEFAULT_NOISE_HOLD: f64 = 0.01;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    dimension: usize,
    nu: Option<f64>,
    horizon: f64,
    dt: Option<f64>,
    seed: Option<u64>,
    agents: Vec<RawAgent>,
    #[serde(default)]
    obstacles: Vec<RawObstacle>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: String,
    social_index: f64,
    start_point: Vec<f64>,
    start_radius: f64,
    target_point: Vec<f64>,
    target_radius: f64,
    completion_time: f64,
    rho_min: f64,
    rho_max: f64,
    goal_gain: f64,
    obstacle_gains: Option<RawGainTable>,
    agent_gains: Option<RawGainTable>,
    sif_decay: Option<f64>,
    plant: Option<RawPlant>,
    funnels: Option<OneOrMany<RawFunnel>>,
    controller_gains: Option<OneOrMany<f64>>,
    initial_output: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    h2: f64,
    h3: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGainTable {
    h2: f64,
    h3: f64,
    #[serde(default)]
    overrides: BTreeMap<String, RawGains>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    model: String,
    disturbance: Option<RawDisturbance>,
    g_lower_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawDisturbance {
    None,
    Sinusoid {
        bound: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    ClippedNoise {
        bound: f64,
        #[serde(default)]
        seed: u64,
        std: Option<f64>,
        hold: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunnel {
    p: OneOrMany<f64>,
    q: OneOrMany<f64>,
    mu: OneOrMany<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    id: String,
    motion: RawMotion,
    radius: RawRadius,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawMotion {
    Static {
        center: Vec<f64>,
    },
    Linear {
        start: Vec<f64>,
        velocity: Vec<f64>,
    },
    Circular {
        center: Vec<f64>,
        radius: f64,
        angular_speed: f64,
        #[serde(default)]
        phase: f64,
        plane: Option<[usize; 2]>,
    },
    Waypoints {
        points: Vec<RawWaypoint>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaypoint {
    t: f64,
    at: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawRadius {
    Constant(f64),
    Table { times: Vec<f64>, values: Vec<f64> },
}

/// Parses a YAML scenario document and applies defaults.
///
/// Domain errors name the offending field with its path, e.g.
/// `agents[1].social_index`.
pub fn parse_scenario(document: &str) -> Result<Scenario> {
    let raw: RawScenario = serde_yaml::from_str(document)?;
    build(raw)
}

struct Ctx {
    n: usize,
}

impl Ctx {
    fn vector(&self, field: &str, xs: &[f64]) -> Result<Vector> {
        if xs.len() != self.n {
            return Err(Error::Dimension {
                field: field.into(),
                expected: self.n,
                found: xs.len(),
            });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::field(field, "components must be finite"));
        }
        Ok(Vector::from_column_slice(xs))
    }

    fn per_component(&self, field: &str, v: OneOrMany<f64>) -> Result<Vec<f64>> {
        match v {
            OneOrMany::One(x) => Ok(vec![x; self.n]),
            OneOrMany::Many(xs) if xs.len() == self.n => Ok(xs),
            OneOrMany::Many(xs) => Err(Error::Dimension {
                field: field.into(),
                expected: self.n,
                found: xs.len(),
            }),
        }
    }
}

fn positive(field: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::field(field, format!("must be a positive real, got {x}")))
    }
}

fn non_negative(field: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(Error::field(field, format!("must be non-negative, got {x}")))
    }
}

fn build(raw: RawScenario) -> Result<Scenario> {
    if raw.dimension == 0 {
        return Err(Error::field("dimension", "must be at least 1"));
    }
    let ctx = Ctx { n: raw.dimension };
    let nu = positive("nu", raw.nu.unwrap_or(DEFAULT_NU))?;
    let horizon = positive("horizon", raw.horizon)?;
    let dt = positive("dt", raw.dt.unwrap_or(DEFAULT_DT))?;
    if raw.agents.is_empty() {
        return Err(Error::field("agents", "at least one agent is required"));
    }

    let obstacles = raw
        .obstacles
        .into_iter()
        .enumerate()
        .map(|(j, o)| build_obstacle(&ctx, j, o))
        .collect::<Result<Vec<_>>>()?;
    unique_ids("obstacles", obstacles.iter().map(|o| o.id.as_str()))?;

    let agent_ids: Vec<String> = raw.agents.iter().map(|a| a.id.clone()).collect();
    unique_ids("agents", agent_ids.iter().map(String::as_str))?;
    let obstacle_ids: Vec<&str> = obstacles.iter().map(|o| o.id.as_str()).collect();

    let agents = raw
        .agents
        .into_iter()
        .enumerate()
        .map(|(k, a)| build_agent(&ctx, k, a, &agent_ids, &obstacle_ids))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        dimension: raw.dimension,
        nu,
        horizon,
        dt,
        seed: raw.seed.unwrap_or(0),
        agents,
        obstacles,
    })
}

fn unique_ids<'a>(field: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::field(field, format!("duplicate id `{id}`")));
        }
    }
    Ok(())
}

fn gain_table(
    field: &str,
    table: Option<RawGainTable>,
    ids: &[impl AsRef<str>],
) -> Result<Vec<RepulsionGains>> {
    let Some(table) = table else {
        return Ok(vec![RepulsionGains::new(DEFAULT_REPULSION, DEFAULT_REPULSION); ids.len()]);
    };
    let base = RepulsionGains::new(
        positive(&format!("{field}.h2"), table.h2)?,
        positive(&format!("{field}.h3"), table.h3)?,
    );
    let mut gains = vec![base; ids.len()];
    for (key, g) in table.overrides {
        let Some(idx) = ids.iter().position(|id| id.as_ref() == key) else {
            return Err(Error::field(
                format!("{field}.overrides"),
                format!("unknown id `{key}`"),
            ));
        };
        gains[idx] = RepulsionGains::new(
            positive(&format!("{field}.overrides.{key}.h2"), g.h2)?,
            positive(&format!("{field}.overrides.{key}.h3"), g.h3)?,
        );
    }
    Ok(gains)
}

fn build_agent(
    ctx: &Ctx,
    k: usize,
    a: RawAgent,
    agent_ids: &[String],
    obstacle_ids: &[&str],
) -> Result<AgentSpec> {
    let f = |name: &str| format!("agents[{k}].{name}");

    if !(a.social_index > 0.0 && a.social_index < 1.0) {
        return Err(Error::field(f("social_index"), "social_index out of (0,1)"));
    }
    let sif_decay = a.sif_decay.unwrap_or(DEFAULT_SIF_DECAY);
    if !(0.0..=1.0).contains(&sif_decay) {
        return Err(Error::field(f("sif_decay"), "sif_decay out of [0,1]"));
    }

    let plant = build_plant(ctx, &f("plant"), a.plant)?;
    let order = plant.order();

    let controller_gains = match a.controller_gains {
        None => vec![1.0; order],
        Some(OneOrMany::One(g)) => vec![g; order],
        Some(OneOrMany::Many(gs)) if gs.len() == order => gs,
        Some(OneOrMany::Many(gs)) => {
            return Err(Error::Dimension {
                field: f("controller_gains"),
                expected: order,
                found: gs.len(),
            })
        }
    };
    for (z, g) in controller_gains.iter().enumerate() {
        positive(&format!("{}[{z}]", f("controller_gains")), *g)?;
    }

    let funnels = match a.funnels {
        None => None,
        Some(spec) => {
            let raws = match spec {
                OneOrMany::One(r) => {
                    let mut v = Vec::new();
                    v.push(r);
                    // one entry applies to every stage z >= 2
                    while v.len() < order.saturating_sub(1) {
                        let r = &v[0];
                        v.push(RawFunnel {
                            p: clone_one_or_many(&r.p),
                            q: clone_one_or_many(&r.q),
                            mu: clone_one_or_many(&r.mu),
                        });
                    }
                    v.truncate(order.saturating_sub(1));
                    v
                }
                OneOrMany::Many(v) => v,
            };
            if raws.len() != order - 1 {
                return Err(Error::Dimension {
                    field: f("funnels"),
                    expected: order - 1,
                    found: raws.len(),
                });
            }
            let stages = raws
                .into_iter()
                .enumerate()
                .map(|(s, r)| build_funnel(ctx, &format!("{}[{s}]", f("funnels")), r))
                .collect::<Result<Vec<_>>>()?;
            Some(FunnelParams { stages })
        }
    };

    Ok(AgentSpec {
        id: a.id,
        social_index: a.social_index,
        start_point: ctx.vector(&f("start_point"), &a.start_point)?,
        start_radius: positive(&f("start_radius"), a.start_radius)?,
        target_point: ctx.vector(&f("target_point"), &a.target_point)?,
        target_radius: positive(&f("target_radius"), a.target_radius)?,
        completion_time: positive(&f("completion_time"), a.completion_time)?,
        rho_min: positive(&f("rho_min"), a.rho_min)?,
        rho_max: positive(&f("rho_max"), a.rho_max)?,
        goal_gain: positive(&f("goal_gain"), a.goal_gain)?,
        obstacle_gains: gain_table(&f("obstacle_gains"), a.obstacle_gains, obstacle_ids)?,
        agent_gains: gain_table(&f("agent_gains"), a.agent_gains, agent_ids)?,
        sif_decay,
        plant,
        funnels,
        controller_gains,
        initial_output: a
            .initial_output
            .map(|y| ctx.vector(&f("initial_output"), &y))
            .transpose()?,
    })
}

fn clone_one_or_many(v: &OneOrMany<f64>) -> OneOrMany<f64> {
    match v {
        OneOrMany::One(x) => OneOrMany::One(*x),
        OneOrMany::Many(xs) => OneOrMany::Many(xs.clone()),
    }
}

fn build_funnel(ctx: &Ctx, field: &str, r: RawFunnel) -> Result<StageFunnel> {
    let p = ctx.per_component(&format!("{field}.p"), r.p)?;
    let q = ctx.per_component(&format!("{field}.q"), r.q)?;
    let mu = ctx.per_component(&format!("{field}.mu"), r.mu)?;
    for i in 0..ctx.n {
        if !(q[i] > 0.0 && p[i] > q[i] && p[i].is_finite()) {
            return Err(Error::field(field, "funnel needs p > q > 0"));
        }
        non_negative(&format!("{field}.mu"), mu[i])?;
    }
    Ok(StageFunnel { p, q, mu })
}

fn build_plant(ctx: &Ctx, field: &str, raw: Option<RawPlant>) -> Result<PlantBinding> {
    let Some(raw) = raw else {
        return Ok(PlantBinding::new(PlantModel::SingleIntegrator, ctx.n));
    };
    let model = match raw.model.as_str() {
        "single_integrator" => PlantModel::SingleIntegrator,
        "double_integrator" => PlantModel::DoubleIntegrator,
        "nonlinear_test" => PlantModel::NonlinearTest,
        other => {
            return Err(Error::field(
                format!("{field}.model"),
                format!("unknown plant model `{other}`"),
            ))
        }
    };
    let df = format!("{field}.disturbance");
    let disturbance = match raw.disturbance {
        None | Some(RawDisturbance::None) => DisturbanceSpec::none(),
        Some(RawDisturbance::Sinusoid {
            bound,
            frequency,
            phase,
        }) => DisturbanceSpec {
            kind: DisturbanceKind::Sinusoid {
                frequency: non_negative(&format!("{df}.frequency"), frequency)?,
                phase,
            },
            bound: non_negative(&format!("{df}.bound"), bound)?,
            stream: 0,
        },
        Some(RawDisturbance::ClippedNoise {
            bound,
            seed,
            std,
            hold,
        }) => {
            let bound = non_negative(&format!("{df}.bound"), bound)?;
            DisturbanceSpec {
                kind: DisturbanceKind::ClippedNoise {
                    seed,
                    std: non_negative(&format!("{df}.std"), std.unwrap_or(bound))?,
                    hold: positive(&format!("{df}.hold"), hold.unwrap_or(DEFAULT_NOISE_HOLD))?,
                },
                bound,
                stream: 0,
            }
        }
    };
    let g_lower_bound = raw
        .g_lower_bound
        .map(|g| positive(&format!("{field}.g_lower_bound"), g))
        .transpose()?;
    Ok(PlantBinding {
        model,
        n: ctx.n,
        disturbance,
        g_lower_bound,
    })
}

fn build_obstacle(ctx: &Ctx, j: usize, o: RawObstacle) -> Result<ObstacleSpec> {
    let f = |name: &str| format!("obstacles[{j}].{name}");
    let motion = match o.motion {
        RawMotion::Static { center } => Motion::Static {
            center: ctx.vector(&f("motion.center"), &center)?,
        },
        RawMotion::Linear { start, velocity } => Motion::Linear {
            start: ctx.vector(&f("motion.start"), &start)?,
            velocity: ctx.vector(&f("motion.velocity"), &velocity)?,
        },
        RawMotion::Circular {
            center,
            radius,
            angular_speed,
            phase,
            plane,
        } => {
            let plane = plane.unwrap_or([0, 1]);
            if ctx.n < 2 || plane[0] == plane[1] || plane.iter().any(|&a| a >= ctx.n) {
                return Err(Error::field(f("motion.plane"), "needs two distinct axes within the dimension"));
            }
            Motion::Circular {
                center: ctx.vector(&f("motion.center"), &center)?,
                radius: non_negative(&f("motion.radius"), radius)?,
                angular_speed,
                phase,
                plane: (plane[0], plane[1]),
            }
        }
        RawMotion::Waypoints { points } => {
            if points.is_empty() {
                return Err(Error::field(f("motion.points"), "at least one waypoint is required"));
            }
            let times: Vec<f64> = points.iter().map(|p| p.t).collect();
            increasing(&f("motion.points"), &times)?;
            let points = points
                .iter()
                .enumerate()
                .map(|(i, p)| ctx.vector(&f(&format!("motion.points[{i}].at")), &p.at))
                .collect::<Result<Vec<_>>>()?;
            Motion::Waypoints { times, points }
        }
    };
    let radius = match o.radius {
        RawRadius::Constant(r) => RadiusProfile::Constant(non_negative(&f("radius"), r)?),
        RawRadius::Table { times, values } => {
            if times.is_empty() || times.len() != values.len() {
                return Err(Error::field(f("radius"), "times and values must be non-empty and of equal length"));
            }
            increasing(&f("radius.times"), &times)?;
            for r in &values {
                non_negative(&f("radius.values"), *r)?;
            }
            RadiusProfile::PiecewiseLinear { times, values }
        }
    };
    Ok(ObstacleSpec {
        id: o.id,
        motion,
        radius,
    })
}

fn increasing(field: &str, times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::field(field, "times must be finite and strictly increasing"));
    }
    Ok(())
}
