//! JSON configuration files.
//!
//! ```json
//! {
//!   "model": { "preset": "simb" },
//!   "horizon": 50,
//!   "seed": 42,
//!   "contamination": { "r_ao": 0.1, "r_io": 0.0,
//!                      "dist_ao": { "kind": "cauchy", "location": 0.0, "scale": 0.001 },
//!                      "dist_io": { "kind": "point_mass", "value": [0.0] } },
//!   "filter": { "variant": "rls-io",
//!               "heights": { "kind": "calibrated", "criterion": { "kind": "radius", "r": 0.1 } } },
//!   "scenario": { "name": "simb", "preset": "simb", "n_runs": 10000, "horizon": 50,
//!                 "score_time": 35, "seed": 42 }
//! }
//! ```
//!
//! Instead of a preset, `model` may spell out a linear model. Each of `f`,
//! `z`, `q`, `v` is either one matrix (list of rows) or a list of per-step
//! matrices:
//!
//! ```json
//! { "f": [[1.0]], "z": [[1.0]], "q": [[1.0]], "v": [[1.0]], "a0": [1.0], "q0": [[1.0]] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{HeightChoice, Scenario};
use crate::contamination::{matrix_to_rows, rows_to_matrix, ContaminationSpec};
use crate::error::{Error, Result};
use crate::filter::VariantKind;
use crate::linalg::{Matrix, Vector};
use crate::model::{LinearSsm, MatrixSeq, Model, ModelPreset, StateSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Constant(Vec<Vec<f64>>),
    PerStep(Vec<Vec<Vec<f64>>>),
}

impl MatrixSpec {
    fn to_seq(&self) -> Result<MatrixSeq> {
        Ok(match self {
            MatrixSpec::Constant(rows) => MatrixSeq::Constant(rows_to_matrix(rows)?),
            MatrixSpec::PerStep(steps) => {
                MatrixSeq::PerStep(steps.iter().map(|m| rows_to_matrix(m)).collect::<Result<_>>()?)
            }
        })
    }

    fn from_seq(seq: &MatrixSeq, horizon: usize) -> Result<Self> {
        Ok(match seq {
            MatrixSeq::Constant(m) => MatrixSpec::Constant(matrix_to_rows(m)),
            _ => MatrixSpec::PerStep(
                (1..=horizon)
                    .map(|t| seq.at(t).map(|m| matrix_to_rows(&m)))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub f: MatrixSpec,
    pub z: MatrixSpec,
    pub q: MatrixSpec,
    pub v: MatrixSpec,
    pub a0: Vec<f64>,
    pub q0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset { preset: ModelPreset },
    Linear(LinearSpec),
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelConfig::Preset { preset } => Ok(preset.build()),
            ModelConfig::Linear(s) => {
                let m = LinearSsm::new(
                    s.f.to_seq()?,
                    s.z.to_seq()?,
                    s.q.to_seq()?,
                    s.v.to_seq()?,
                    Vector::from_row_slice(&s.a0),
                    rows_to_matrix(&s.q0)?,
                )
                .map_err(|e| Error::Config(format!("model: {e}")))?;
                Ok(Model::Linear(m))
            }
        }
    }

    /// Explicit form of a model. Time-varying matrices are written out for
    /// `t = 1..=horizon`. Nonlinear presets cannot be written as matrices and
    /// stay in preset form.
    pub fn dump(preset: ModelPreset, horizon: usize) -> Result<Self> {
        match preset.build() {
            Model::Linear(m) => Ok(ModelConfig::Linear(LinearSpec {
                f: MatrixSpec::from_seq(&m.transition, horizon)?,
                z: MatrixSpec::from_seq(&m.observation, horizon)?,
                q: MatrixSpec::from_seq(&m.innovation_cov, horizon)?,
                v: MatrixSpec::from_seq(&m.error_cov, horizon)?,
                a0: m.a0.iter().copied().collect(),
                q0: matrix_to_rows(&m.q0),
            })),
            Model::Nonlinear(_) => Ok(ModelConfig::Preset { preset }),
        }
    }
}

/// Filter settings for the `filter` and `smooth` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub variant: VariantKind,
    #[serde(default)]
    pub heights: HeightChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub contamination: Option<ContaminationSpec>,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
}

impl Config {
    pub fn for_preset(preset: ModelPreset) -> Self {
        Self {
            model: ModelConfig::Preset { preset },
            horizon: None,
            seed: None,
            contamination: None,
            filter: None,
            scenario: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model.build()?;
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if let Some(c) = &self.contamination {
            c.validate().map_err(|e| Error::Config(format!("contamination: {e}")))?;
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        if let Some(f) = &self.filter {
            if let HeightChoice::Fixed { b, .. } = f.heights {
                if b.is_nan() || b <= 0.0 {
                    return Err(Error::Config(format!("clipping height must be positive, got {b}")));
                }
            }
        }
        let _ = model.state_dim();
        Ok(())
    }

    /// Horizon from the config or the preset default.
    pub fn horizon_or_default(&self) -> usize {
        self.horizon.unwrap_or(match &self.model {
            ModelConfig::Preset { preset } => preset.default_horizon(),
            ModelConfig::Linear(_) => 50,
        })
    }
}

/// Largest elementwise difference between two models' matrices over
/// `t = 1..=horizon` (linear models only).
pub fn linear_model_distance(a: &LinearSsm, b: &LinearSsm, horizon: usize) -> Result<f64> {
    let diff = |x: Matrix, y: Matrix| -> f64 {
        if x.shape() != y.shape() {
            f64::INFINITY
        } else {
            (x - y).amax()
        }
    };
    let mut d = diff(a.q0.clone(), b.q0.clone());
    if a.a0.len() != b.a0.len() {
        return Ok(f64::INFINITY);
    }
    d = d.max((&a.a0 - &b.a0).amax());
    for t in 1..=horizon {
        d = d
            .max(diff(a.f(t)?, b.f(t)?))
            .max(diff(a.z(t)?, b.z(t)?))
            .max(diff(a.q(t)?, b.q(t)?))
            .max(diff(a.v(t)?, b.v(t)?));
    }
    Ok(d)
}
