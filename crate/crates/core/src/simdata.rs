//! Seeded simulation models with known dose-response curves.
//!
//! Each row draws, in order, its covariates, the treatment noise `E` and the
//! outcome noise `ε` from one ChaCha8 stream. Uniforms use the generator's
//! `[0, 1)` doubles; normals use the Box–Muller cosine branch,
//! `√(−2 ln(1 − u₁)) cos(2π u₂)`.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimModel {
    /// `Y = T² + T + 1 + 10S + ε`, `T = sin(πS) + E`, `E ~ U[−0.3, 0.3]`.
    #[serde(rename = "single_conf")]
    Single,
    /// `Y = T + 6S₁ + 6S₂ + ε`, `T = 2S₁ + S₂ + E`, `E ~ U[−0.5, 0.5]`.
    #[serde(rename = "linear_conf")]
    Linear,
    /// `Y = T² + T + 10Z + ε`, `T = cos(πZ³) + Z/4 + E`, `Z = 4S₁ + S₂`, `E ~ U[−0.1, 0.1]`.
    #[serde(rename = "nonlinear_conf")]
    Nonlinear,
}

impl SimModel {
    pub const ALL: [SimModel; 3] = [SimModel::Single, SimModel::Linear, SimModel::Nonlinear];

    pub fn name(self) -> &'static str {
        match self {
            SimModel::Single => "single_conf",
            SimModel::Linear => "linear_conf",
            SimModel::Nonlinear => "nonlinear_conf",
        }
    }

    /// Number of covariates.
    pub fn d(self) -> usize {
        match self {
            SimModel::Single => 1,
            SimModel::Linear | SimModel::Nonlinear => 2,
        }
    }

    pub fn truth_m(self, t: f64) -> f64 {
        match self {
            SimModel::Single => t * t + t + 1.0,
            SimModel::Linear => t,
            SimModel::Nonlinear => t * t + t,
        }
    }

    pub fn truth_theta(self, t: f64) -> f64 {
        match self {
            SimModel::Single | SimModel::Nonlinear => 2.0 * t + 1.0,
            SimModel::Linear => 1.0,
        }
    }

    /// Interval that contains every generated treatment value.
    pub fn treatment_support(self) -> (f64, f64) {
        match self {
            SimModel::Single => (-1.3, 1.3),
            SimModel::Linear => (-3.5, 3.5),
            SimModel::Nonlinear => (-2.35, 2.35),
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.d();
        let mut y = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n * d);
        for _ in 0..n {
            let (yi, ti) = match self {
                SimModel::Single => {
                    let s1 = uniform(&mut rng, -1.0, 1.0);
                    let e = uniform(&mut rng, -0.3, 0.3);
                    let eps = normal(&mut rng);
                    s.push(s1);
                    let ti = (PI * s1).sin() + e;
                    (ti * ti + ti + 1.0 + 10.0 * s1 + eps, ti)
                }
                SimModel::Linear => {
                    let s1 = uniform(&mut rng, -1.0, 1.0);
                    let s2 = uniform(&mut rng, -1.0, 1.0);
                    let e = uniform(&mut rng, -0.5, 0.5);
                    let eps = normal(&mut rng);
                    s.extend([s1, s2]);
                    let ti = 2.0 * s1 + s2 + e;
                    (ti + 6.0 * s1 + 6.0 * s2 + eps, ti)
                }
                SimModel::Nonlinear => {
                    let s1 = uniform(&mut rng, -1.0, 1.0);
                    let s2 = uniform(&mut rng, -1.0, 1.0);
                    let e = uniform(&mut rng, -0.1, 0.1);
                    let eps = normal(&mut rng);
                    s.extend([s1, s2]);
                    let z = 4.0 * s1 + s2;
                    let ti = (PI * z * z * z).cos() + z / 4.0 + e;
                    (ti * ti + ti + 10.0 * z + eps, ti)
                }
            };
            y.push(yi);
            t.push(ti);
        }
        Dataset::new(y, t, s, d).expect("simulated data is finite")
    }
}

impl FromStr for SimModel {
    type Err = Error;

    /// Accepts the short names `single`, `linear`, `nonlinear` and the `*_conf` forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single_conf" => Ok(SimModel::Single),
            "linear" | "linear_conf" => Ok(SimModel::Linear),
            "nonlinear" | "nonlinear_conf" => Ok(SimModel::Nonlinear),
            other => Err(Error::InvalidInput(format!("unknown model {other:?}"))),
        }
    }
}

impl std::fmt::Display for SimModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn gen_single_conf(n: usize, seed: u64) -> Dataset {
    SimModel::Single.generate(n, seed)
}

pub fn gen_linear_conf(n: usize, seed: u64) -> Dataset {
    SimModel::Linear.generate(n, seed)
}

pub fn gen_nonlinear_conf(n: usize, seed: u64) -> Dataset {
    SimModel::Nonlinear.generate(n, seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
}
