//! Checkpoints: the mesh as OFF plus a `key = value` metadata file holding
//! the step-control state, so a restored run continues bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{gradient_norm, FlowError, FlowSink, FlowState, SteppingPolicy};
use crate::geom::{build_cache, FlowParams, GeomError};
use crate::mesh::{read_off, write_off, MeshError};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("checkpoint geometry: {0}")]
    Geometry(#[from] GeomError),
    #[error("malformed checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint was written for parameters {found}, not {expected}")]
    ParamsMismatch { expected: String, found: String },
}

/// SHA-256 of the exact bit patterns of (c0, λ), hex encoded.
pub fn params_hash(params: &FlowParams) -> String {
    let mut h = Sha256::new();
    h.update(params.c0.to_bits().to_le_bytes());
    h.update(params.lambda.to_bits().to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

/// Writes `<stem>.off` and `<stem>.meta` into `dir`.
pub fn checkpoint<T: Real>(state: &FlowState<T>, params: &FlowParams, dir: &Path, stem: &str) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let off = dir.join(format!("{stem}.off"));
    fs::write(&off, write_off(&state.mesh)).map_err(io_err(&off))?;
    let meta = dir.join(format!("{stem}.meta"));
    let f = |x: f64| format!("{x:.16e}");
    let lines = [
        ("t", f(state.t)),
        ("dt", f(state.dt)),
        ("step_index", state.step_index.to_string()),
        ("rejections", state.rejections.to_string()),
        ("initial_energy", f(state.initial_energy)),
        ("initial_area", f(state.initial_area)),
        ("initial_mean_edge", f(state.initial_mean_edge)),
        ("small_gradient_streak", state.small_gradient_streak.to_string()),
        ("remesh_count", state.remesh_count.to_string()),
        ("c0", f(params.c0)),
        ("lambda", f(params.lambda)),
        ("params_hash", params_hash(params)),
    ];
    let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(&meta, text).map_err(io_err(&meta))
}

/// Reads a checkpoint written by [`checkpoint`], refusing it when it was
/// produced for different (c0, λ).
pub fn restore<T: Real>(
    dir: &Path,
    stem: &str,
    params: &FlowParams,
    policy: &SteppingPolicy,
) -> Result<FlowState<T>, CheckpointError> {
    let meta_path = dir.join(format!("{stem}.meta"));
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let mut kv = HashMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::Metadata(format!("line without '=': {line:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| CheckpointError::Metadata(format!("missing key {k}")));
    let num = |k: &str| -> Result<f64, CheckpointError> {
        get(k)?.parse().map_err(|_| CheckpointError::Metadata(format!("{k} is not a number")))
    };
    let int = |k: &str| -> Result<usize, CheckpointError> {
        get(k)?.parse().map_err(|_| CheckpointError::Metadata(format!("{k} is not an integer")))
    };
    let found = get("params_hash")?;
    let expected = params_hash(params);
    if *found != expected {
        let found_desc = match (num("c0"), num("lambda")) {
            (Ok(c0), Ok(l)) => format!("c0={c0}, lambda={l}"),
            _ => found.clone(),
        };
        return Err(CheckpointError::ParamsMismatch {
            expected: format!("c0={}, lambda={}", params.c0, params.lambda),
            found: found_desc,
        });
    }
    let off_path = dir.join(format!("{stem}.off"));
    let mesh = read_off::<T>(&fs::read_to_string(&off_path).map_err(io_err(&off_path))?)?;
    let cache = build_cache(&mesh)?;
    let energy = cache.penalized(params).value();
    let grad = gradient_norm(&mesh, &cache, params, policy.gradient).map_err(|e| match e {
        FlowError::Geometry(g) => CheckpointError::Geometry(g),
        other => CheckpointError::Metadata(other.to_string()),
    })?;
    Ok(FlowState {
        t: num("t")?,
        mesh,
        cache,
        dt: num("dt")?,
        step_index: int("step_index")?,
        rejections: int("rejections")?,
        energy,
        initial_energy: num("initial_energy")?,
        initial_area: num("initial_area")?,
        initial_mean_edge: num("initial_mean_edge")?,
        small_gradient_streak: int("small_gradient_streak")?,
        gradient_norm: grad,
        remesh_count: int("remesh_count")?,
        solver: None,
    })
}

/// Writes `ckpt_<step>` checkpoints into a directory at the policy cadence.
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl CheckpointSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), written: Vec::new() }
    }

    pub fn stem(step_index: usize) -> String {
        format!("ckpt_{step_index:06}")
    }
}

impl<T: Real> FlowSink<T> for CheckpointSink {
    fn checkpoint(&mut self, state: &FlowState<T>, params: &FlowParams) -> Result<(), FlowError> {
        let stem = Self::stem(state.step_index);
        checkpoint(state, params, &self.dir, &stem)?;
        self.written.push(stem);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{continue_flow, run_flow, RecordCollector};
    use crate::mesh::make_icosphere;
    use crate::vec3::Vec3;

    #[test]
    fn restored_run_matches_uninterrupted_run() {
        let params = FlowParams::new(-1.0, 0.0).unwrap();
        let mesh = make_icosphere::<f64>(2, 1.0, Vec3::zero()).unwrap();
        let policy = SteppingPolicy { max_steps: 40, checkpoint_every: 20, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut ck = CheckpointSink::new(dir.path());
        let (full, _) = run_flow(mesh, &params, &policy, &mut [&mut ck]).unwrap();
        assert_eq!(ck.written, vec!["ckpt_000020", "ckpt_000040"]);

        let state: FlowState<f64> = restore(dir.path(), "ckpt_000020", &params, &policy).unwrap();
        let resume = SteppingPolicy { max_steps: 20, checkpoint_every: 0, ..policy.clone() };
        let mut rc = RecordCollector::default();
        let (tail, _) = continue_flow(state, &params, &resume, &mut [&mut rc]).unwrap();
        assert_eq!(rc.records.len(), 20);
        for (a, b) in full.final_state.mesh.vertices().iter().zip(tail.final_state.mesh.vertices()) {
            assert!((*a - *b).norm() <= 1e-12);
        }
        assert_eq!(full.records.last().unwrap(), rc.records.last().unwrap());
    }

    #[test]
    fn restore_refuses_other_parameters() {
        let params = FlowParams::new(1.0, 0.5).unwrap();
        let policy = SteppingPolicy::default();
        let state = FlowState::new(make_icosphere::<f64>(1, 1.0, Vec3::zero()).unwrap(), &params, &policy).unwrap();
        let dir = tempfile::tempdir().unwrap();
        checkpoint(&state, &params, dir.path(), "s").unwrap();
        let other = FlowParams::new(1.0, 0.25).unwrap();
        let err = restore::<f64>(dir.path(), "s", &other, &policy).unwrap_err();
        assert!(matches!(err, CheckpointError::ParamsMismatch { .. }));
        assert!(restore::<f64>(dir.path(), "s", &params, &policy).is_ok());
    }

    #[test]
    fn zero_cadence_writes_nothing() {
        let params = FlowParams::new(-1.0, 0.0).unwrap();
        let policy = SteppingPolicy { max_steps: 5, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut ck = CheckpointSink::new(dir.path().join("ck"));
        run_flow(make_icosphere::<f64>(1, 1.0, Vec3::zero()).unwrap(), &params, &policy, &mut [&mut ck]).unwrap();
        assert!(ck.written.is_empty());
        assert!(!dir.path().join("ck").exists());
    }
}
