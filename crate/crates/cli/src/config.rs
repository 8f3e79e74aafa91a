//! Run configuration: one TOML file plus `KEY=VALUE` overrides on dotted keys.
//!
//! ```toml
//! [mesh]
//! icosphere_level = 4      # or: path = "surface.off"
//! radius = 1.0
//! center = [0.0, 0.0, 0.0]
//!
//! [params]
//! c0 = -1.0
//! lambda = 0.0
//!
//! [stepping]               # any SteppingPolicy field; angles in radians
//! horizon = inf
//! remesh.enabled = true
//!
//! [diagnostics]
//! frames = true
//! kappa_target = 6.0       # default: 25% of ∫|A|² on the initial surface
//! radius_grid_points = 48
//! frame_area_ratio = 0.5
//!
//! [output]
//! dir = "run"
//! seed = 7
//! ```
//!
//! All lengths share one unit; times are in length⁴.

use std::fs;
use std::path::{Path, PathBuf};

use helfrich_core::flow::SteppingPolicy;
use helfrich_core::geom::FlowParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("override {0:?} is not of the form KEY=VALUE")]
    Override(String),
    #[error("override key {key:?} conflicts with a non-table value at {at:?}")]
    OverridePath { key: String, at: String },
    #[error("invalid config: {0}")]
    Schema(String),
    #[error("mesh section needs exactly one of `path` or `icosphere_level`")]
    MeshSource,
    #[error("mesh file {0} does not exist")]
    MissingMesh(PathBuf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub path: Option<PathBuf>,
    pub icosphere_level: Option<u32>,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub frames: bool,
    pub kappa_target: Option<f64>,
    pub radius_grid_points: usize,
    /// A frame is taken each time the area falls by this factor.
    pub frame_area_ratio: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { frames: true, kappa_target: None, radius_grid_points: 48, frame_area_ratio: 0.5 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub params: FlowParams,
    #[serde(default)]
    pub stepping: SteppingPolicy,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::OverridePath { key: key.to_string(), at: parts[..=i].join(".") })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// The raw configuration table with overrides applied.
pub fn load_table(path: Option<&Path>, overrides: &[String]) -> Result<toml::Table, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.display().to_string(), source })?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Syntax(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

/// `params.c0` / `params.lambda` from a configuration table, if present.
pub fn table_params(table: &toml::Table) -> Result<(Option<f64>, Option<f64>), ConfigError> {
    let Some(params) = table.get("params") else {
        return Ok((None, None));
    };
    let get = |k: &str| -> Result<Option<f64>, ConfigError> {
        match params.get(k) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(ConfigError::Schema(format!("params.{k} must be a number, got {v}"))),
        }
    };
    Ok((get("c0")?, get("lambda")?))
}

impl RunConfig {
    /// Reads `path` (if any), applies the overrides in order and resolves a
    /// relative mesh path against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let table = load_table(path, overrides)?;
        let mut cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Schema(e.to_string()))?;
        if let (Some(mesh), Some(base)) = (&cfg.mesh.path, path.and_then(Path::parent)) {
            if mesh.is_relative() {
                cfg.mesh.path = Some(base.join(mesh));
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        match (&self.mesh.path, self.mesh.icosphere_level) {
            (Some(p), None) if !p.exists() => return Err(ConfigError::MissingMesh(p.clone())),
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(ConfigError::MeshSource),
        }
        FlowParams::new(self.params.c0, self.params.lambda).map_err(|e| ConfigError::Schema(e.to_string()))?;
        self.stepping.validate().map_err(|e| ConfigError::Schema(e.to_string()))?;
        let d = &self.diagnostics;
        if d.radius_grid_points < 2 || !(d.frame_area_ratio > 0.0 && d.frame_area_ratio < 1.0) {
            return Err(ConfigError::Schema(
                "diagnostics need radius_grid_points >= 2 and 0 < frame_area_ratio < 1".into(),
            ));
        }
        if d.kappa_target.is_some_and(|k| !(k > 0.0)) {
            return Err(ConfigError::Schema("kappa_target must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("run.toml");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn overrides_reach_nested_policy_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "[mesh]\nicosphere_level = 2\n[params]\nc0 = 1.0\nlambda = 0.5\n");
        let cfg = RunConfig::load(
            Some(&p),
            &["stepping.horizon=0.5".into(), "stepping.remesh.enabled=false".into(), "params.c0=-1".into()],
        )
        .unwrap();
        assert_eq!(cfg.stepping.horizon, 0.5);
        assert!(!cfg.stepping.remesh.enabled);
        assert_eq!(cfg.params.c0, -1.0);
        assert_eq!(cfg.stepping.dt_init, SteppingPolicy::default().dt_init);
        assert_eq!(cfg.mesh.radius, 1.0);
    }

    #[test]
    fn infinite_horizon_parses() {
        let cfg = RunConfig::load(
            None,
            &["mesh.icosphere_level=1".into(), "params.c0=2".into(), "params.lambda=0".into(), "stepping.horizon=inf".into()],
        )
        .unwrap();
        assert!(cfg.stepping.horizon.is_infinite());
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let base = "[params]\nc0 = 1.0\nlambda = 0.5\n";
        let unknown = write(dir.path(), &format!("[mesh]\nicosphere_level = 2\nbogus = 1\n{base}"));
        assert!(matches!(RunConfig::load(Some(&unknown), &[]), Err(ConfigError::Schema(_))));
        let both = write(dir.path(), &format!("[mesh]\nicosphere_level = 2\npath = \"x.off\"\n{base}"));
        assert!(matches!(RunConfig::load(Some(&both), &[]), Err(ConfigError::MeshSource)));
        let missing = write(dir.path(), &format!("[mesh]\npath = \"nowhere.off\"\n{base}"));
        assert!(matches!(RunConfig::load(Some(&missing), &[]), Err(ConfigError::MissingMesh(_))));
        let neg = write(dir.path(), "[mesh]\nicosphere_level = 2\n[params]\nc0 = 1.0\nlambda = -1.0\n");
        assert!(matches!(RunConfig::load(Some(&neg), &[]), Err(ConfigError::Schema(_))));
        assert!(matches!(RunConfig::load(None, &["novalue".into()]), Err(ConfigError::Override(_))));
    }
}
