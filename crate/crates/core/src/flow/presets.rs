use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Flow, FlowParams, FlowState, Formulation};
use crate::error::FlowError;
use crate::field::MetricField;
use crate::geometry::ddbar;
use crate::grid::Grid;

/// Named initial data. The initial metric is always flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `alpha = -lambda omega`, stationary for the flow.
    FlatFixedPoint,
    /// `alpha = 0`; form-level only.
    Exponential,
    /// Frozen metric, `alpha = 1 + amp (cos 2pi x/P + sin 2pi y/P + cos 2pi (x + y)/P)`.
    FrozenHeat {
        #[serde(default = "default_heat_amplitude")]
        amplitude: f64,
    },
    /// Fixed point plus random mean-zero sinusoids with integer wave numbers up to `modes`.
    Perturbed {
        #[serde(default)]
        seed: Option<u64>,
        amplitude: f64,
        modes: usize,
    },
}

fn default_heat_amplitude() -> f64 {
    0.5
}

impl InitialData {
    pub fn name(&self) -> &'static str {
        match self {
            InitialData::FlatFixedPoint => "flat_fixed_point",
            InitialData::Exponential => "exponential",
            InitialData::FrozenHeat { .. } => "frozen_heat",
            InitialData::Perturbed { .. } => "perturbed",
        }
    }

    /// Parse a bare preset name with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "flat_fixed_point" => InitialData::FlatFixedPoint,
            "exponential" => InitialData::Exponential,
            "frozen_heat" => InitialData::FrozenHeat {
                amplitude: default_heat_amplitude(),
            },
            "perturbed" => InitialData::Perturbed {
                seed: None,
                amplitude: 1e-2,
                modes: 2,
            },
            _ => return None,
        })
    }

    pub fn issues(&self, formulation: Formulation) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            InitialData::Exponential | InitialData::FrozenHeat { .. } if formulation == Formulation::Potential => {
                out.push(format!("preset {} is only available for the form-level formulation", self.name()));
            }
            InitialData::Perturbed { amplitude, modes, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    out.push(format!("perturbation amplitude must be nonnegative, got {amplitude}"));
                }
                if *modes == 0 {
                    out.push("perturbation needs at least one mode".into());
                }
            }
            _ => {}
        }
        if let InitialData::FrozenHeat { amplitude } = self {
            if !amplitude.is_finite() {
                out.push(format!("heat amplitude must be finite, got {amplitude}"));
            }
        }
        out
    }
}

/// Random mean-zero trigonometric sum over integer wave vectors in a half space,
/// normalized so its sup is at most 1. Each term is weighted by `weight(|k|^2)`.
fn random_sum(grid: &Grid, seed: u64, modes: usize, weight: impl Fn(f64) -> f64) -> Vec<f64> {
    let dims = grid.real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = modes as i64;
    let side = (2 * m + 1) as usize;
    let mut terms = Vec::new();
    for flat in 0..side.pow(dims as u32) {
        let mut k = [0i64; 4];
        let mut r = flat;
        for a in (0..dims).rev() {
            k[a] = (r % side) as i64 - m;
            r /= side;
        }
        // keep one of each +-k pair
        match k[..dims].iter().find(|&&v| v != 0) {
            Some(&v) if v > 0 => {}
            _ => continue,
        }
        let c: f64 = rng.gen_range(-1.0..1.0);
        let s: f64 = rng.gen_range(-1.0..1.0);
        terms.push((k, c, s));
    }
    let norm: f64 = terms.iter().map(|(_, c, s)| c.abs() + s.abs()).sum();
    let periods = grid.periods().to_vec();
    grid.sample(|x| {
        terms
            .iter()
            .map(|(k, c, s)| {
                let mut theta = 0.0;
                let mut k2 = 0.0;
                for a in 0..dims {
                    let w = 2.0 * PI * k[a] as f64 / periods[a];
                    theta += w * x[a];
                    k2 += w * w;
                }
                weight(k2) * (c * theta.cos() + s * theta.sin())
            })
            .sum::<f64>()
            / norm
    })
}

/// Build the flow problem and its initial state. `seed` is used when the preset
/// does not carry its own. Frozen-heat data switch on `freeze_metric`.
pub fn build(grid: &Grid, params: &FlowParams, init: &InitialData, seed: u64) -> Result<(Flow, FlowState), FlowError> {
    if let Some(msg) = init.issues(params.formulation).into_iter().next() {
        return Err(FlowError::InvalidParams(msg));
    }
    let mut params = params.clone();
    if matches!(init, InitialData::FrozenHeat { .. }) {
        params.freeze_metric = true;
    }
    let len = grid.len();
    let zero = vec![0.0; len];
    match params.formulation {
        Formulation::FormLevelN1 => {
            let base = -params.lambda;
            let alpha = match init {
                InitialData::FlatFixedPoint => vec![base; len],
                InitialData::Exponential => zero.clone(),
                InitialData::FrozenHeat { amplitude } => {
                    let (px, py) = (grid.periods()[0], grid.periods()[1]);
                    grid.sample(|x| {
                        1.0 + amplitude
                            * ((2.0 * PI * x[0] / px).cos()
                                + (2.0 * PI * x[1] / py).sin()
                                + (2.0 * PI * (x[0] / px + x[1] / py)).cos())
                    })
                }
                InitialData::Perturbed {
                    seed: own,
                    amplitude,
                    modes,
                } => random_sum(grid, own.unwrap_or(seed), *modes, |_| 1.0)
                    .into_iter()
                    .map(|v| base + amplitude * v)
                    .collect(),
            };
            let flow = Flow::form_level(grid.clone(), params)?;
            let state = FlowState {
                t: 0.0,
                formulation: Formulation::FormLevelN1,
                u: [vec![1.0; len], alpha],
            };
            Ok((flow, state))
        }
        Formulation::Potential => {
            let omega = MetricField::identity(grid);
            let mut alpha = omega.field().zip_map(omega.field(), |w, _| -params.lambda * w);
            if let InitialData::Perturbed {
                seed: own,
                amplitude,
                modes,
            } = init
            {
                // chi with |d dbar chi| <= amplitude, so alpha stays d dbar-exact plus constant.
                let chi = random_sum(grid, own.unwrap_or(seed), *modes, |k2| 4.0 / k2);
                let chi: Vec<f64> = chi.iter().map(|v| amplitude * v).collect();
                alpha = alpha.zip_map(&ddbar(grid, &chi), |a, b| a + b);
            }
            let flow = Flow::potential(grid.clone(), params, omega, alpha)?;
            let state = FlowState {
                t: 0.0,
                formulation: Formulation::Potential,
                u: [zero.clone(), zero],
            };
            Ok((flow, state))
        }
    }
}
