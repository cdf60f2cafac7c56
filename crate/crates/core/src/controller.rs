//! Closed-form, approximation-free tracking law.
//!
//! Stage 1 keeps the output inside the tube ball through the normalized radial
//! error `e1 = ‖x1 − σ‖/ρ`; every later stage keeps `x_z` inside an
//! exponentially shrinking funnel around the reference produced by the stage
//! before it. Only states, the tube and the gains are consumed here: the
//! plant's drift, input gain and disturbance bound stay unknown.

use crate::plants::PlantState;
use crate::scenario::Vector;
use crate::tube::TubeState;

/// Distance kept from the funnel boundary when an error has to be clamped.
pub const CLAMP_MARGIN: f64 = 1e-9;

/// Funnel `γ(t) = (p − q)·e^{−μt} + q` for every component of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFunnel {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub mu: Vec<f64>,
}

impl StageFunnel {
    pub fn uniform(n: usize, p: f64, q: f64, mu: f64) -> Self {
        Self {
            p: vec![p; n],
            q: vec![q; n],
            mu: vec![mu; n],
        }
    }

    pub fn bound(&self, i: usize, t: f64) -> f64 {
        (self.p[i] - self.q[i]) * (-self.mu[i] * t).exp() + self.q[i]
    }
}

/// Funnels for stages `z = 2..=N`; `stages[0]` belongs to `z = 2`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FunnelParams {
    pub stages: Vec<StageFunnel>,
}

/// `γ_{z,i}(t)` for stage `z ≥ 2` and zero-based component `i`.
pub fn funnel_bound(fp: &FunnelParams, z: usize, i: usize, t: f64) -> f64 {
    fp.stages[z - 2].bound(i, t)
}

/// `ε = ln((1 + e)/(1 − e))`, defined on (−1, 1).
pub fn error_transform(e: f64) -> f64 {
    e.ln_1p() - (-e).ln_1p()
}

/// Where an error had to be pulled back inside its funnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClampEvent {
    /// Stage `z` (1-based).
    pub stage: usize,
    /// Component index for stages `z ≥ 2`; stage 1 is a radial error.
    pub component: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub e1: f64,
    pub eps1: f64,
    pub r2: Vector,
    pub clamped: bool,
}

pub fn stage1(x1: &Vector, sigma: &Vector, rho: f64, kappa1: f64) -> Stage1 {
    let offset = x1 - sigma;
    let mut e1 = offset.norm() / rho;
    let clamped = e1.is_nan() || e1 >= 1.0 - CLAMP_MARGIN;
    if clamped {
        e1 = 1.0 - CLAMP_MARGIN;
    }
    let eps1 = error_transform(e1);
    Stage1 {
        e1,
        eps1,
        r2: offset * (-kappa1 * eps1),
        clamped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageZ {
    pub e: Vector,
    pub eps: Vector,
    /// `r_{z+1}`, or the actuator command at the last stage.
    pub next: Vector,
    pub clamped: Vec<usize>,
}

/// One intermediate stage: `next_i = −κ·4·ε_i / (γ_i·(1 − e_i²))`.
pub fn stage_z(x_z: &Vector, r_z: &Vector, fp: &FunnelParams, z: usize, t: f64, kappa: f64) -> StageZ {
    let n = x_z.len();
    let limit = 1.0 - CLAMP_MARGIN;
    let mut clamped = Vec::new();
    let mut e = Vector::zeros(n);
    let mut eps = Vector::zeros(n);
    let mut next = Vector::zeros(n);
    for i in 0..n {
        let gamma = funnel_bound(fp, z, i, t);
        let mut ei = (x_z[i] - r_z[i]) / gamma;
        if ei.is_nan() || ei.abs() >= limit {
            ei = if ei.is_nan() { limit } else { limit.copysign(ei) };
            clamped.push(i);
        }
        e[i] = ei;
        eps[i] = error_transform(ei);
        next[i] = -kappa * 4.0 * eps[i] / (gamma * (1.0 - ei * ei));
    }
    StageZ {
        e,
        eps,
        next,
        clamped,
    }
}

/// Per-agent controller inputs: current plant states, funnels and gains.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRuntime {
    pub state: PlantState,
    pub funnels: FunnelParams,
    /// `κ_1..κ_N`.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFrame {
    pub t: f64,
    /// `r_2..r_{N+1}`; the last entry is the actuator command.
    pub r: Vec<Vector>,
    pub e1: f64,
    pub eps1: f64,
    /// Errors of stages `2..=N`.
    pub e: Vec<Vector>,
    pub eps: Vec<Vector>,
    pub u: Vector,
    pub clamps: Vec<ClampEvent>,
}

pub fn control_step(agent: &AgentRuntime, tube: &TubeState, t: f64) -> ControlFrame {
    let stages = &agent.state.stages;
    let s1 = stage1(&stages[0], &tube.sigma, tube.rho, agent.gains[0]);
    let mut clamps = Vec::new();
    if s1.clamped {
        clamps.push(ClampEvent {
            stage: 1,
            component: None,
        });
    }
    let mut r = vec![s1.r2];
    let mut e = Vec::new();
    let mut eps = Vec::new();
    for z in 2..=stages.len() {
        let sz = stage_z(&stages[z - 1], &r[z - 2], &agent.funnels, z, t, agent.gains[z - 1]);
        clamps.extend(sz.clamped.iter().map(|&i| ClampEvent {
            stage: z,
            component: Some(i),
        }));
        r.push(sz.next);
        e.push(sz.e);
        eps.push(sz.eps);
    }
    let u = r.last().cloned().expect("at least one stage");
    ControlFrame {
        t,
        r,
        e1: s1.e1,
        eps1: s1.eps1,
        e,
        eps,
        u,
        clamps,
    }
}

/// Funnels sized from the initial tracking errors:
/// `p = 1.2·|x_{z,i}(0) − r_{z,i}(0)| + 0.1`, `q = 0.1·p`, `μ = 1`.
pub fn auto_funnels(state: &PlantState, tube: &TubeState, gains: &[f64]) -> FunnelParams {
    let stages = &state.stages;
    let mut fp = FunnelParams::default();
    let mut r = stage1(&stages[0], &tube.sigma, tube.rho, gains[0]).r2;
    for z in 2..=stages.len() {
        let x = &stages[z - 1];
        let p: Vec<f64> = (0..x.len()).map(|i| 1.2 * (x[i] - r[i]).abs() + 0.1).collect();
        fp.stages.push(StageFunnel {
            q: p.iter().map(|p| 0.1 * p).collect(),
            mu: vec![1.0; x.len()],
            p,
        });
        r = stage_z(x, &r, &fp, z, tube.t, gains[z - 1]).next;
    }
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn tube(sigma: Vector, rho: f64) -> TubeState {
        TubeState {
            agent: 0,
            sigma,
            rho,
            t: 0.0,
        }
    }

    #[test]
    fn stage1_at_centre_is_zero() {
        let s = stage1(&v(&[1.0, 2.0]), &v(&[1.0, 2.0]), 0.5, 3.0);
        assert_eq!(s.e1, 0.0);
        assert_eq!(s.eps1, 0.0);
        assert_eq!(s.r2, Vector::zeros(2));
        assert!(!s.clamped);
    }

    #[test]
    fn stage1_transform_inverse() {
        let e = std::f64::consts::E;
        let e1 = (e - 1.0) / (e + 1.0);
        let s = stage1(&v(&[e1 * 2.0, 0.0]), &v(&[0.0, 0.0]), 2.0, 1.0);
        assert!((s.e1 - 0.462_117_157_260_009_76).abs() < 1e-12);
        assert!((s.eps1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stage1_clamps_at_boundary() {
        let s = stage1(&v(&[0.27, 0.0]), &v(&[0.0, 0.0]), 0.27, 1.0);
        assert!(s.clamped);
        assert_eq!(s.e1, 1.0 - CLAMP_MARGIN);
        assert!(s.eps1.is_finite());
    }

    #[test]
    fn funnel_bound_limits() {
        let fp = FunnelParams {
            stages: vec![StageFunnel::uniform(1, 2.0, 0.5, 0.3)],
        };
        assert_eq!(funnel_bound(&fp, 2, 0, 0.0), 2.0);
        assert!((funnel_bound(&fp, 2, 0, 30.0 / 0.3) - 0.5).abs() < 1e-9);
        let flat = FunnelParams {
            stages: vec![StageFunnel::uniform(1, 2.0, 0.5, 0.0)],
        };
        assert_eq!(funnel_bound(&flat, 2, 0, 123.0), 2.0);
    }

    #[test]
    fn stage_z_hand_value() {
        let fp = FunnelParams {
            stages: vec![StageFunnel::uniform(1, 2.0, 1.0, 0.0)],
        };
        let s = stage_z(&v(&[1.0]), &v(&[0.0]), &fp, 2, 0.0, 1.0);
        let expected = -(8.0 / 3.0) * 3f64.ln();
        assert!((s.next[0] - expected).abs() < 1e-12);
        assert!((s.next[0] + 2.929_632_769_781_626).abs() < 1e-9);
        let scaled = stage_z(&v(&[1.0]), &v(&[0.0]), &fp, 2, 0.0, 2.5);
        assert_eq!(scaled.next[0], 2.5 * s.next[0]);
    }

    #[test]
    fn stage_z_zero_error() {
        let fp = FunnelParams {
            stages: vec![StageFunnel::uniform(3, 1.0, 0.1, 1.0)],
        };
        let x = v(&[0.3, -0.2, 0.1]);
        let s = stage_z(&x, &x, &fp, 2, 0.7, 4.0);
        assert_eq!(s.next, Vector::zeros(3));
    }

    #[test]
    fn chain_of_length_one_returns_r2() {
        let agent = AgentRuntime {
            state: PlantState::at_rest(v(&[0.1, 0.0]), 1),
            funnels: FunnelParams::default(),
            gains: vec![2.0],
        };
        let f = control_step(&agent, &tube(v(&[0.0, 0.0]), 0.5), 0.0);
        assert_eq!(f.r.len(), 1);
        assert_eq!(f.u, f.r[0]);
        assert_eq!(f.u, stage1(&v(&[0.1, 0.0]), &v(&[0.0, 0.0]), 0.5, 2.0).r2);
    }

    #[test]
    fn nested_zero_errors_give_zero_input() {
        let agent = AgentRuntime {
            state: PlantState {
                stages: vec![v(&[1.0, 1.0]), v(&[0.0, 0.0])],
            },
            funnels: FunnelParams {
                stages: vec![StageFunnel::uniform(2, 1.0, 0.2, 1.0)],
            },
            gains: vec![1.0, 1.0],
        };
        let f = control_step(&agent, &tube(v(&[1.0, 1.0]), 0.4), 0.0);
        assert_eq!(f.u, Vector::zeros(2));
        assert!(f.clamps.is_empty());
    }

    #[test]
    fn control_step_is_pure() {
        let agent = AgentRuntime {
            state: PlantState {
                stages: vec![v(&[0.1, -0.05, 0.02]), v(&[0.3, 0.1, -0.2])],
            },
            funnels: FunnelParams {
                stages: vec![StageFunnel::uniform(3, 2.0, 0.3, 0.5)],
            },
            gains: vec![1.5, 2.0],
        };
        let t = tube(v(&[0.0, 0.0, 0.0]), 0.3);
        let a = control_step(&agent, &t, 1.25);
        let b = control_step(&agent, &t, 1.25);
        assert_eq!(a, b);
    }

    #[test]
    fn auto_funnels_contain_initial_error() {
        let state = PlantState {
            stages: vec![v(&[0.2, 0.0]), v(&[0.5, -1.0])],
        };
        let t = tube(v(&[0.0, 0.0]), 0.5);
        let gains = [2.0, 1.0];
        let fp = auto_funnels(&state, &t, &gains);
        let r2 = stage1(&state.stages[0], &t.sigma, t.rho, gains[0]).r2;
        for i in 0..2 {
            let p = fp.stages[0].p[i];
            assert!((state.stages[1][i] - r2[i]).abs() <= p);
            assert!((fp.stages[0].q[i] - 0.1 * p).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn transform_is_odd_and_increasing(a in -0.999f64..0.999, b in -0.999f64..0.999) {
            prop_assert!((error_transform(-a) + error_transform(a)).abs() < 1e-12);
            if a < b {
                prop_assert!(error_transform(a) < error_transform(b));
            }
        }

        #[test]
        fn stage1_points_inward(
            x in proptest::collection::vec(-1.0f64..1.0, 3),
            s in proptest::collection::vec(-1.0f64..1.0, 3),
            rho in 0.05f64..2.0,
            kappa in 0.01f64..10.0,
        ) {
            let x = Vector::from_vec(x);
            let s = Vector::from_vec(s);
            let out = stage1(&x, &s, rho, kappa);
            prop_assert!(out.r2.dot(&(x - s)) <= 0.0);
        }
    }
}
