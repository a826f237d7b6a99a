//! Versioned JSON documents written by the command-line tool.
//!
//! Non-finite numbers (skipped grid points) are written as `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BandMode, BootstrapResult};
use crate::estimators::{CurveEstimate, EstimatorTag};
use crate::params::EstimParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Where each bandwidth came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Given on the command line.
    User,
    /// Rule of thumb.
    Rot,
    /// Normal reference.
    Nr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSource {
    pub h: Source,
    pub b: Source,
    pub hbar: Source,
    pub scale_by_sd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Bands {
    pub alpha: f64,
    pub B: usize,
    pub pointwise_lo: Vec<Option<f64>>,
    pub pointwise_hi: Vec<Option<f64>>,
    pub uniform_lo: Vec<Option<f64>>,
    pub uniform_hi: Vec<Option<f64>>,
    pub uniform_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub estimator: EstimatorTag,
    pub grid: Vec<f64>,
    pub values: Vec<Option<f64>>,
    /// Treatment interval of the trimmed region.
    pub region: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bands: Option<Bands>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dropped_fits: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dropped_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curvature_floored: Option<bool>,
}

/// Output of `estimate`, `derivative` and `bootstrap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub schema_version: u32,
    pub command: String,
    pub n: usize,
    pub d: usize,
    pub seed: Option<u64>,
    pub params: EstimParams,
    pub bandwidth_source: BandwidthSource,
    pub curves: Vec<Curve>,
    pub diagnostics: Diagnostics,
}

/// Output of `bandwidth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub schema_version: u32,
    pub command: String,
    pub n: usize,
    pub d: usize,
    pub h: f64,
    pub b: Vec<f64>,
    pub hbar: f64,
    pub c_h: f64,
    pub c_b: f64,
    pub scale_by_sd: bool,
    pub curvature_floored: bool,
}

/// Output of `bounds`; a `null` pair with `*_empty` set marks an empty bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub schema_version: u32,
    pub command: String,
    pub points: usize,
    pub m_lo: Option<f64>,
    pub m_hi: Option<f64>,
    pub m_empty: bool,
    pub theta_lo: Option<f64>,
    pub theta_hi: Option<f64>,
    pub theta_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub error: ErrorBody,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Curve {
    pub fn from_estimate(c: &CurveEstimate) -> Self {
        Self {
            estimator: c.tag,
            grid: c.grid.clone(),
            values: c.values.iter().map(|&v| finite(v)).collect(),
            region: [c.region.0, c.region.1],
            bands: None,
        }
    }

    pub fn from_bootstrap(r: &BootstrapResult) -> Self {
        let pw = r.band(BandMode::Pointwise);
        let un = r.band(BandMode::Uniform);
        let mut c = Self::from_estimate(&r.base);
        c.bands = Some(Bands {
            alpha: r.alpha,
            B: r.b,
            pointwise_lo: pw.iter().map(|i| finite(i.lo)).collect(),
            pointwise_hi: pw.iter().map(|i| finite(i.hi)).collect(),
            uniform_lo: un.iter().map(|i| finite(i.lo)).collect(),
            uniform_hi: un.iter().map(|i| finite(i.hi)).collect(),
            uniform_halfwidth: r.uniform_halfwidth,
        });
        c
    }
}
