//! JSON run configuration.

use std::path::Path;

use levygreen::geometry::{point, Domain, DomainSpec, Point};
use levygreen::levy_models::{LevyModel, ModelSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Library(#[from] levygreen::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Usage, configuration and I/O problems all exit with status 1.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A point or a list of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl Points {
    pub fn to_points(&self) -> Vec<Point> {
        match self {
            Points::One(p) => vec![point(p)],
            Points::Many(ps) => ps.iter().map(|p| point(p)).collect(),
        }
    }
}

/// Which harness experiment `compare` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Green,
    Moments,
    Poisson,
    PoissonFar,
    Bhp,
    Calka,
    Contraction,
    Potential,
    Domination,
    Occupation,
}

/// Parameters of the convolution-integral check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalkaConfig {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
}

/// Boundary point and radii of a boundary Harnack check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhpConfig {
    pub z: Vec<f64>,
    pub rho: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_bhp_points")]
    pub points: usize,
}

fn default_beta() -> f64 {
    0.5
}

fn default_bhp_points() -> usize {
    6
}

/// Single JSON configuration of a run. Command-line flags override fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sample count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Points>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Points>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Points>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Estimator for `green`/`exit`/`poisson`: `wos`, `path` or `quadrature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doubling: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    /// Lattice size of the occupation experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calka: Option<CalkaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bhp: Option<BhpConfig>,
}

/// Parses JSON, reporting the path of the offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config { path, message: e.into_inner().to_string() }
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text)
}

/// Wraps a library error raised while building a config section so the
/// message names the section as well as the field.
fn in_section(section: &str, e: levygreen::Error) -> CliError {
    match e {
        levygreen::Error::InvalidParameter { field, reason } => {
            CliError::Config { path: format!("{section}.{field}"), message: format!("invalid `{field}`: {reason}") }
        }
        other => CliError::Config { path: section.to_string(), message: other.to_string() },
    }
}

impl RunConfig {
    pub fn domain(&self) -> CliResult<Domain> {
        let spec = self.domain.clone().ok_or_else(|| CliError::Usage("a domain is required".into()))?;
        Domain::from_spec(spec).map_err(|e| in_section("domain", e))
    }

    pub fn model(&self) -> CliResult<LevyModel> {
        let spec = self.model.clone().ok_or_else(|| CliError::Usage("a model is required".into()))?;
        LevyModel::from_spec(spec).map_err(|e| in_section("model", e))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn points(&self, which: &str) -> CliResult<Vec<Point>> {
        let p = match which {
            "x" => &self.x,
            "y" => &self.y,
            _ => &self.z,
        };
        p.as_ref().map(Points::to_points).ok_or_else(|| CliError::Usage(format!("`{which}` points are required")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_names_path() {
        let err = parse_json::<RunConfig>(r#"{"model": {"kind": "stable", "d": 2, "alpah": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
    }

    #[test]
    fn bad_alpha_names_alpha() {
        let cfg: RunConfig = parse_json(r#"{"model": {"kind": "stable", "d": 2, "alpha": 2.5}}"#).unwrap();
        let err = cfg.model().unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn points_accept_one_or_many() {
        let cfg: RunConfig = parse_json(r#"{"x": [0.1, 0.2], "y": [[0.3, 0.0], [0.0, 0.4]]}"#).unwrap();
        assert_eq!(cfg.points("x").unwrap().len(), 1);
        assert_eq!(cfg.points("y").unwrap().len(), 2);
    }
}
