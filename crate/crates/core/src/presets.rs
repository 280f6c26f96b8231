//! Initial-condition presets. Every preset yields `u0 >= 0` with positive
//! mass and `v0 >= 0`, `w0 >= 0`; all but `constant_steady` (with its default
//! `w0 = 0`) also give `w0 > 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{integrate, Field, Grid};
use crate::stepper::InitialData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// The homogeneous equilibrium `(1, 1, w0)`.
    ConstantSteady {
        #[serde(default)]
        w0: f64,
    },
    /// Gaussian `u0` centered in the domain, `v0 = 0`,
    /// `w0 = 1 + w_modulation * prod cos(pi x_i / L_i)`.
    GaussianBump {
        amplitude: f64,
        width: f64,
        /// Rescales `u0` to this total mass when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass: Option<f64>,
        #[serde(default)]
        w_modulation: f64,
    },
    /// `(1, 1, w_level)` with independent uniform perturbations of relative
    /// size `rho` in `u0` and `w0`.
    PerturbedEquilibrium {
        rho: f64,
        seed: u64,
        #[serde(default = "default_w_level")]
        w_level: f64,
    },
}

fn default_w_level() -> f64 {
    0.5
}

impl Default for Preset {
    fn default() -> Self {
        Preset::GaussianBump {
            amplitude: 2.0,
            width: 0.1,
            mass: None,
            w_modulation: 0.0,
        }
    }
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::ConstantSteady { .. } => "constant_steady",
            Preset::GaussianBump { .. } => "gaussian_bump",
            Preset::PerturbedEquilibrium { .. } => "perturbed_equilibrium",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Preset::ConstantSteady { w0 } => {
                if !(w0 >= 0.0) || !w0.is_finite() {
                    return Err(Error::Domain(format!("w0 must be >= 0, got {w0}")));
                }
            }
            Preset::GaussianBump {
                amplitude,
                width,
                mass,
                w_modulation,
            } => {
                if !(amplitude > 0.0) || !amplitude.is_finite() {
                    return Err(Error::Domain(format!("amplitude must be > 0, got {amplitude}")));
                }
                if !(width > 0.0) || !width.is_finite() {
                    return Err(Error::Domain(format!("width must be > 0, got {width}")));
                }
                if let Some(m) = mass {
                    if !(m > 0.0) || !m.is_finite() {
                        return Err(Error::Domain(format!("mass must be > 0, got {m}")));
                    }
                }
                if !(0.0..1.0).contains(&w_modulation) {
                    return Err(Error::Domain(format!(
                        "w_modulation must lie in [0, 1), got {w_modulation}"
                    )));
                }
            }
            Preset::PerturbedEquilibrium { rho, w_level, .. } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
                }
                if !(w_level > 0.0) || !w_level.is_finite() {
                    return Err(Error::Domain(format!("w_level must be > 0, got {w_level}")));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, g: &Grid) -> Result<InitialData> {
        self.validate()?;
        match *self {
            Preset::ConstantSteady { w0 } => InitialData::new(
                Field::constant(g, 1.0),
                Field::constant(g, 1.0),
                Field::constant(g, w0),
                g,
            ),
            Preset::GaussianBump {
                amplitude,
                width,
                mass,
                w_modulation,
            } => {
                let ext = g.extents();
                let cx = 0.5 * ext[0];
                let cy = if g.dim() == 2 { 0.5 * ext[1] } else { 0.0 };
                let two_s2 = 2.0 * width * width;
                let mut u0 = Field::from_fn(g, |x, y| {
                    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                    amplitude * (-r2 / two_s2).exp()
                });
                if let Some(target) = mass {
                    let current = integrate(&u0, g);
                    u0 = u0.map(|x| x * target / current);
                }
                let w0 = Field::from_fn(g, |x, y| {
                    let mut c = (PI * x / ext[0]).cos();
                    if g.dim() == 2 {
                        c *= (PI * y / ext[1]).cos();
                    }
                    1.0 + w_modulation * c
                });
                InitialData::new(u0, Field::zeros(g), w0, g)
            }
            Preset::PerturbedEquilibrium { rho, seed, w_level } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut u0 = Field::zeros(g);
                let mut w0 = Field::zeros(g);
                for k in 0..g.len() {
                    u0[k] = 1.0 + rho * rng.gen_range(-1.0..=1.0);
                    w0[k] = w_level * (1.0 + rho * rng.gen_range(-1.0..=1.0));
                }
                InitialData::new(u0, Field::constant(g, 1.0), w0, g)
            }
        }
    }
}
