//! Ground-truth agent dynamics in pure-feedback form
//!
//! `ẋ_z = f_z(x̄_z) + g_z(x̄_z)·x_{z+1} + w_z` for `z < N` and the input `u` at
//! stage `N`. The controller never sees anything in this module except the
//! resulting states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scenario::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    /// `ẋ1 = u + w1`.
    SingleIntegrator,
    /// `ẋ1 = x2 + w1`, `ẋ2 = u + w2`.
    DoubleIntegrator,
    /// Second-order chain with bounded smooth drift and state-dependent
    /// positive input gain `diag(1.5 + 0.5·sin(x_{z,i}))`.
    NonlinearTest,
}

impl PlantModel {
    /// Number of stages `N`.
    pub fn order(self) -> usize {
        match self {
            PlantModel::SingleIntegrator => 1,
            PlantModel::DoubleIntegrator | PlantModel::NonlinearTest => 2,
        }
    }

    /// Lower bound on the smallest eigenvalue of the symmetric part of every `g_z`.
    pub fn g_lower_bound(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            PlantModel::SingleIntegrator => "single_integrator",
            PlantModel::DoubleIntegrator => "double_integrator",
            PlantModel::NonlinearTest => "nonlinear_test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    None,
    /// `W·sin(2π·frequency·t + phase)` on every component.
    Sinusoid { frequency: f64, phase: f64 },
    /// Gaussian samples with standard deviation `std`, clipped to `[−W, W]` and
    /// held piecewise constant over windows of `hold` seconds.
    ClippedNoise { seed: u64, std: f64, hold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    /// Per-component amplitude bound `W`.
    pub bound: f64,
    /// Noise stream; the engine sets this per agent so agents draw independent samples.
    pub stream: u64,
}

impl DisturbanceSpec {
    pub fn none() -> Self {
        Self {
            kind: DisturbanceKind::None,
            bound: 0.0,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantBinding {
    pub model: PlantModel,
    pub n: usize,
    pub disturbance: DisturbanceSpec,
    /// Declared `g̲` (metadata only).
    pub g_lower_bound: Option<f64>,
}

impl PlantBinding {
    pub fn new(model: PlantModel, n: usize) -> Self {
        Self {
            model,
            n,
            disturbance: DisturbanceSpec::none(),
            g_lower_bound: None,
        }
    }

    pub fn order(&self) -> usize {
        self.model.order()
    }
}

/// The state stack `x̄_N = (x_1, …, x_N)`; the output is `x_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub stages: Vec<Vector>,
}

impl PlantState {
    /// Output at rest: `x_1 = y0`, every higher stage zero.
    pub fn at_rest(y0: Vector, order: usize) -> Self {
        let n = y0.len();
        let mut stages = vec![y0];
        stages.extend((1..order).map(|_| Vector::zeros(n)));
        Self { stages }
    }

    pub fn output(&self) -> &Vector {
        &self.stages[0]
    }

    pub fn flatten(&self) -> Vector {
        let n = self.stages[0].len();
        Vector::from_iterator(
            n * self.stages.len(),
            self.stages.iter().flat_map(|s| s.iter().copied()),
        )
    }

    pub fn unflatten(flat: &Vector, n: usize) -> Self {
        Self {
            stages: flat
                .as_slice()
                .chunks(n)
                .map(Vector::from_column_slice)
                .collect(),
        }
    }
}

/// Words of keystream reserved per noise window; normal sampling consumes a
/// variable number of words.
const WORDS_PER_WINDOW: u128 = 256;

/// Disturbance `w_z(t)` for stage `z` (1-based). Deterministic in
/// `(spec, z, t)`, and every component lies in `[−W, W]`.
pub fn disturbance(spec: &DisturbanceSpec, z: usize, n: usize, t: f64) -> Vector {
    match spec.kind {
        DisturbanceKind::None => Vector::zeros(n),
        DisturbanceKind::Sinusoid { frequency, phase } => {
            let w = spec.bound * (std::f64::consts::TAU * frequency * t + phase).sin();
            Vector::from_element(n, w)
        }
        DisturbanceKind::ClippedNoise { seed, std, hold } => {
            let window = (t / hold).floor().max(0.0) as u128;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((spec.stream << 8) | z as u64);
            rng.set_word_pos(window * WORDS_PER_WINDOW);
            Vector::from_fn(n, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (g * std).clamp(-spec.bound, spec.bound)
            })
        }
    }
}

/// Stage derivatives of the plant under input `u`.
pub fn plant_rhs(ps: &PlantState, u: &Vector, t: f64, pb: &PlantBinding) -> Result<Vec<Vector>> {
    let order = pb.order();
    if ps.stages.len() != order {
        return Err(Error::Dimension {
            field: "plant.stages".into(),
            expected: order,
            found: ps.stages.len(),
        });
    }
    for (z, x) in ps.stages.iter().enumerate() {
        if x.len() != pb.n {
            return Err(Error::Dimension {
                field: format!("plant.x{}", z + 1),
                expected: pb.n,
                found: x.len(),
            });
        }
    }
    if u.len() != pb.n {
        return Err(Error::Dimension {
            field: "plant.u".into(),
            expected: pb.n,
            found: u.len(),
        });
    }

    let n = pb.n;
    let drive = |z: usize| if z + 1 < order { &ps.stages[z + 1] } else { u };
    let mut out = Vec::with_capacity(order);
    for z in 0..order {
        let w = disturbance(&pb.disturbance, z + 1, n, t);
        let x_next = drive(z);
        let dx = match pb.model {
            PlantModel::SingleIntegrator | PlantModel::DoubleIntegrator => x_next + w,
            PlantModel::NonlinearTest => {
                let x = &ps.stages[z];
                let f = if z == 0 {
                    x.map(|xi| 0.2 * xi.sin())
                } else {
                    let x1 = &ps.stages[0];
                    Vector::from_fn(n, |i, _| 0.3 * x1[i].cos() - 0.5 * x[i].tanh())
                };
                let g = x.map(|xi| 1.5 + 0.5 * xi.sin());
                f + g.component_mul(x_next) + w
            }
        };
        out.push(dx);
    }
    Ok(out)
}
