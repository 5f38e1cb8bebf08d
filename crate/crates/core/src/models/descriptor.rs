//! JSON model descriptors.
//!
//! ```json
//! {"family": "randers", "dim": 2,
//!  "params": {"a": [[1, 0], [0, 1]], "b": [0.5, 0]},
//!  "chart": {"kind": "whole"}}
//! ```
//!
//! See `docs/model-descriptor.md` for the full schema.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Chart, FinslerModel, SampleBox};
use crate::error::{FinslerError, Result};
use crate::sampling;

pub const DESCRIPTOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SampleBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
}

/// Chart override. `null` box bounds mean unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChartDescriptor {
    Whole,
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixParams {
    matrix: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandersParams {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrengthParams {
    strength: f64,
}

fn params<T: DeserializeOwned>(family: &str, v: &serde_json::Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| FinslerError::InvalidModel(format!("bad params for family '{family}': {e}")))
}

impl ModelDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FinslerError::InvalidModel(format!("model descriptor: {e}")))
    }

    /// Parses and builds the model in one step.
    pub fn parse_model(text: &str) -> Result<FinslerModel> {
        Self::from_json(text)?.to_model()
    }

    pub fn to_model(&self) -> Result<FinslerModel> {
        if let Some(v) = self.version {
            if v != DESCRIPTOR_VERSION {
                return Err(FinslerError::InvalidModel(format!(
                    "unsupported descriptor version {v} (expected {DESCRIPTOR_VERSION})"
                )));
            }
        }
        let dim = self.dim.unwrap_or(2);
        if dim < 2 {
            return Err(FinslerError::InvalidModel("dimension must be at least 2".into()));
        }
        let fixed_dim = |m: FinslerModel| -> Result<FinslerModel> {
            match self.dim {
                Some(d) if d != m.dim => Err(FinslerError::InvalidModel(format!(
                    "family '{}' is {}-dimensional, descriptor says {d}",
                    self.family, m.dim
                ))),
                _ => Ok(m),
            }
        };
        let mut model = match self.family.as_str() {
            "euclidean" => FinslerModel::euclidean(dim),
            "minkowski-quartic" => FinslerModel::minkowski_quartic(dim),
            "sphere-stereographic" | "s2" => fixed_dim(FinslerModel::sphere_stereographic())?,
            "sphere-polar" | "s2-polar" => fixed_dim(FinslerModel::sphere_polar())?,
            "poincare-disk" | "hyperbolic" => fixed_dim(FinslerModel::poincare_disk())?,
            "flat-torus" => fixed_dim(FinslerModel::flat_torus())?,
            "riemannian-constant" => {
                let p: MatrixParams = params(&self.family, &self.params)?;
                fixed_dim(FinslerModel::constant_riemannian(p.matrix)?)?
            }
            "randers" => {
                let p: RandersParams = params(&self.family, &self.params)?;
                fixed_dim(FinslerModel::flat_randers(p.a, p.b)?)?
            }
            "randers-curved" => {
                let p: StrengthParams = params(&self.family, &self.params)?;
                fixed_dim(FinslerModel::curved_randers(p.strength)?)?
            }
            other => {
                return Err(FinslerError::InvalidModel(format!("unknown model family '{other}'")));
            }
        };
        if let Some(name) = &self.name {
            model.name = name.clone();
        }
        if let Some(chart) = &self.chart {
            model.chart = chart.to_chart(model.dim)?;
        }
        if let Some(s) = &self.sampling {
            if s.lower.len() != model.dim || s.upper.len() != model.dim {
                return Err(FinslerError::InvalidModel("sampling box has wrong dimension".into()));
            }
            if s.lower
                .iter()
                .zip(&s.upper)
                .any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
            {
                return Err(FinslerError::InvalidModel(
                    "sampling box bounds must be finite with lower < upper".into(),
                ));
            }
            model.sampling = s.clone();
        }
        let mut rng = sampling::seeded(0);
        let hits = (0..1000)
            .filter(|_| {
                let x: Vec<f64> = model
                    .sampling
                    .lower
                    .iter()
                    .zip(&model.sampling.upper)
                    .map(|(lo, hi)| sampling::uniform(&mut rng, *lo, *hi))
                    .collect();
                model.in_chart(&x)
            })
            .count();
        if hits == 0 {
            return Err(FinslerError::InvalidModel(
                "sampling box does not meet the chart".into(),
            ));
        }
        Ok(model)
    }
}

impl ChartDescriptor {
    fn to_chart(&self, n: usize) -> Result<Chart> {
        match self {
            ChartDescriptor::Whole => Ok(Chart::Whole),
            ChartDescriptor::Box { lower, upper } => {
                if lower.len() != n || upper.len() != n {
                    return Err(FinslerError::InvalidModel("chart box has wrong dimension".into()));
                }
                let lower: Vec<f64> = lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
                let upper: Vec<f64> = upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
                if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
                    return Err(FinslerError::InvalidModel("chart box needs lower < upper".into()));
                }
                Ok(Chart::Box { lower, upper })
            }
            ChartDescriptor::Ball { center, radius } => {
                if center.len() != n || !(*radius > 0.0) {
                    return Err(FinslerError::InvalidModel(
                        "chart ball needs an n-vector center and radius > 0".into(),
                    ));
                }
                Ok(Chart::Ball {
                    center: center.clone(),
                    radius: *radius,
                })
            }
        }
    }
}
