//! Curvature concentration, blow-up frames under parabolic rescaling,
//! singularity classification and runtime monitors.

mod kappa;
mod sphere_fit;

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowError, FlowSink, FlowState};
use crate::geom::{build_cache, FlowParams, GeomError};
use crate::mesh::{write_off, TriangleMesh};
use crate::ode::theory_bounds;
use crate::scalar::Real;
use crate::vec3::Vec3;

pub use kappa::{default_radius_grid, kappa, kappa_profile, select_blowup_radius, KappaProfile, KappaValue};
pub use sphere_fit::{fit_sphere, SphereFit};

/// Radii in the grid used for blow-up radius selection.
pub const RADIUS_GRID_POINTS: usize = 48;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("ball radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("radius grid must be strictly increasing")]
    RadiiNotIncreasing,
    #[error("kappa decreased from {previous} to {value} at r = {r}")]
    KappaNotMonotone { r: f64, value: f64, previous: f64 },
    #[error("kappa target {target} outside (0, {total})")]
    TargetOutOfRange { target: f64, total: f64 },
    #[error("radius grid reaches kappa {reached} only, below target {target}")]
    GridTooShort { target: f64, reached: f64 },
    #[error("rescaled energy {rescaled} differs from {original} (relative {relative:e})")]
    EnergyIdentity { original: f64, rescaled: f64, relative: f64 },
    #[error("classification needs at least 3 frames, got {0}")]
    TooFewFrames(usize),
    #[error("sphere fit failed on frame {0}")]
    SphereFit(usize),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Rescaled snapshot (f(t_j) − x_j)/r_j together with its flow parameters.
#[derive(Clone, Debug)]
pub struct BlowUpFrame {
    pub t: f64,
    pub radius: f64,
    pub center: [f64; 3],
    pub mesh: TriangleMesh<f64>,
    pub params: FlowParams,
    /// A(f(t_j)) before rescaling.
    pub area: f64,
    /// H_{c0,λ}(f(t_j)); equals H_{r c0, r²λ} of the rescaled mesh.
    pub energy: f64,
}

/// Blow-up frame at radius `r` about `center` with the energy identity checked.
pub fn rescale_frame<T: Real>(
    mesh: &TriangleMesh<T>,
    params: &FlowParams,
    t: f64,
    radius: f64,
    center: [f64; 3],
) -> Result<BlowUpFrame, DiagError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DiagError::InvalidRadius(radius));
    }
    let m = mesh.cast::<f64>();
    let x = Vec3::new(center[0], center[1], center[2]);
    let scaled = m.with_positions(m.vertices().iter().map(|&v| (v - x) / radius).collect());
    let rescaled_params = params.rescaled(radius);
    let c0 = build_cache(&m)?;
    let c1 = build_cache(&scaled)?;
    let original = c0.penalized(params);
    let rescaled = c1.penalized(&rescaled_params);
    let relative = (original - rescaled).abs() / original.abs().max(f64::MIN_POSITIVE);
    if relative > 1e-12 && (original - rescaled).abs() > 1e-14 {
        return Err(DiagError::EnergyIdentity { original, rescaled, relative });
    }
    Ok(BlowUpFrame { t, radius, center, mesh: scaled, params: rescaled_params, area: c0.area, energy: original })
}

/// Picks r_j from the κ profile and x_j as the κ-argmax center at r_j.
pub fn extract_blowup_frame<T: Real>(
    state: &FlowState<T>,
    params: &FlowParams,
    kappa_target: f64,
) -> Result<BlowUpFrame, DiagError> {
    extract_blowup_frame_on_grid(state, params, kappa_target, RADIUS_GRID_POINTS)
}

/// [`extract_blowup_frame`] with a radius grid of `grid_points` log-spaced radii.
pub fn extract_blowup_frame_on_grid<T: Real>(
    state: &FlowState<T>,
    params: &FlowParams,
    kappa_target: f64,
    grid_points: usize,
) -> Result<BlowUpFrame, DiagError> {
    let radii = default_radius_grid(&state.mesh, grid_points);
    let profile = kappa_profile(&state.mesh, &state.cache, &radii, state.t)?;
    let r = select_blowup_radius(&profile, kappa_target)?;
    let center = kappa(&state.mesh, &state.cache, r)?.center;
    rescale_frame(&state.mesh, params, state.t, r, center)
}

/// Writes `<NNNN>.off` and a `<NNNN>.meta` sidecar.
pub fn write_frame(frame: &BlowUpFrame, dir: &Path, index: usize) -> Result<(), DiagError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| DiagError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let off = dir.join(format!("{index:04}.off"));
    fs::write(&off, write_off(&frame.mesh)).map_err(io(&off))?;
    let meta = dir.join(format!("{index:04}.meta"));
    let [x, y, z] = frame.center;
    let text = format!(
        "t = {:.16e}\nr = {:.16e}\ncenter = {x:.16e} {y:.16e} {z:.16e}\nc0 = {:.16e}\nlambda = {:.16e}\narea = {:.16e}\nenergy = {:.16e}\n",
        frame.t, frame.radius, frame.params.c0, frame.params.lambda, frame.area, frame.energy
    );
    fs::write(&meta, text).map_err(io(&meta))
}

/// Flow sink emitting a blow-up frame each time the area drops by the
/// cadence factor (one half by default).
pub struct FrameRecorder {
    pub params: FlowParams,
    pub kappa_target: f64,
    pub frames: Vec<BlowUpFrame>,
    pub dir: Option<PathBuf>,
    pub grid_points: usize,
    pub area_cadence: f64,
    next_area: Option<f64>,
}

impl FrameRecorder {
    pub fn new(params: FlowParams, kappa_target: f64, dir: Option<PathBuf>) -> Self {
        Self {
            params,
            kappa_target,
            frames: Vec::new(),
            dir,
            grid_points: RADIUS_GRID_POINTS,
            area_cadence: 0.5,
            next_area: None,
        }
    }

    /// κ target of 25% of ∫|A|²dμ on the initial surface.
    pub fn default_target<T: Real>(initial: &TriangleMesh<T>) -> Result<f64, DiagError> {
        Ok(0.25 * build_cache(initial)?.asq_integral.value())
    }
}

impl<T: Real> FlowSink<T> for FrameRecorder {
    fn accepted(&mut self, state: &FlowState<T>) -> Result<(), FlowError> {
        let area = state.area();
        let cadence = self.area_cadence;
        let threshold = *self.next_area.get_or_insert(cadence * state.initial_area);
        if area > threshold {
            return Ok(());
        }
        let mut next = threshold;
        while next >= area {
            next *= cadence;
        }
        self.next_area = Some(next);
        let frame = extract_blowup_frame_on_grid(state, &self.params, self.kappa_target, self.grid_points)
            .map_err(|e| FlowError::Sink(e.to_string()))?;
        if let Some(dir) = &self.dir {
            write_frame(&frame, dir, self.frames.len()).map_err(|e| FlowError::Sink(e.to_string()))?;
        }
        self.frames.push(frame);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    RoundShrinker,
    NonRoundConcentration,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationThresholds {
    /// Largest last-frame sphere-fit residual for a round verdict.
    pub fit_residual: f64,
    /// |W − 4π| ≤ band·4π at the last frame.
    pub willmore_band: f64,
    /// Frames whose |W − 4π| must be non-increasing, up to `trend_slack`·4π.
    pub trend_frames: usize,
    pub trend_slack: f64,
    /// r_last/r_first must fall below this for the frames to count as a
    /// concentrating sequence.
    pub shrink_ratio: f64,
}

impl Default for ClassificationThresholds {
    fn default() -> Self {
        Self { fit_residual: 0.02, willmore_band: 0.05, trend_frames: 3, trend_slack: 2e-3, shrink_ratio: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityClassification {
    pub verdict: Verdict,
    pub fit_residuals: Vec<f64>,
    pub last_fit_residual: f64,
    /// W of each frame (scale invariant).
    pub willmore: Vec<f64>,
    /// H_{c0,λ} of each rescaled frame.
    pub helfrich: Vec<f64>,
    pub willmore_trend_ok: bool,
    pub radius_ratio: f64,
}

pub fn classify_singularity(frames: &[BlowUpFrame]) -> Result<SingularityClassification, DiagError> {
    classify_singularity_with(frames, &ClassificationThresholds::default())
}

pub fn classify_singularity_with(
    frames: &[BlowUpFrame],
    th: &ClassificationThresholds,
) -> Result<SingularityClassification, DiagError> {
    if frames.len() < 3 {
        return Err(DiagError::TooFewFrames(frames.len()));
    }
    let mut fit_residuals = Vec::with_capacity(frames.len());
    let mut willmore = Vec::with_capacity(frames.len());
    let mut helfrich = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        fit_residuals.push(fit_sphere(f.mesh.vertices()).ok_or(DiagError::SphereFit(i))?.residual);
        let c = build_cache(&f.mesh)?;
        willmore.push(c.willmore);
        helfrich.push(c.penalized(&f.params));
    }
    let four_pi = 4.0 * PI;
    let dist: Vec<f64> = willmore.iter().map(|w| (w - four_pi).abs()).collect();
    let tail = &dist[dist.len().saturating_sub(th.trend_frames.max(2))..];
    let willmore_trend_ok = tail.windows(2).all(|w| w[1] <= w[0] + th.trend_slack * four_pi);
    let last_fit_residual = *fit_residuals.last().unwrap();
    let radius_ratio = frames.last().unwrap().radius / frames[0].radius;
    let verdict = if !(radius_ratio < th.shrink_ratio) {
        Verdict::None
    } else if last_fit_residual < th.fit_residual
        && *dist.last().unwrap() <= th.willmore_band * four_pi
        && willmore_trend_ok
    {
        Verdict::RoundShrinker
    } else {
        Verdict::NonRoundConcentration
    };
    Ok(SingularityClassification {
        verdict,
        fit_residuals,
        last_fit_residual,
        willmore,
        helfrich,
        willmore_trend_ok,
        radius_ratio,
    })
}

/// Per-sample checks of the hypotheses behind the long-time results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub mean_curvature_integral: f64,
    pub mean_curvature_positive: bool,
    pub w0: f64,
    pub initial_energy: f64,
    /// 2λ/(c0²+2λ)·8π, absent for λ = 0.
    pub energy_threshold: Option<f64>,
    /// Whether H_{c0,λ}(f₀) lies at or below the threshold.
    pub below_threshold: Option<bool>,
    /// Upper bound on the singular time for c0 < 0.
    pub t_bound: Option<f64>,
    /// t_bound − t.
    pub remaining_budget: Option<f64>,
}

pub fn hypothesis_monitors<T: Real>(state: &FlowState<T>, params: &FlowParams) -> MonitorRecord {
    let c = &state.cache;
    let int_h = c.integrate(&c.mean_curvature).value();
    let e0 = state.initial_energy;
    let bounds = theory_bounds(params, Some(e0)).ok();
    let threshold = bounds.as_ref().and_then(|b| b.en_threshold).filter(|_| params.lambda > 0.0);
    let t_bound = bounds.as_ref().and_then(|b| b.t_bound);
    MonitorRecord {
        t: state.t,
        mean_curvature_integral: int_h,
        mean_curvature_positive: int_h > 0.0,
        w0: c.w0.value(),
        initial_energy: e0,
        energy_threshold: threshold,
        below_threshold: threshold.map(|th| e0 <= th),
        t_bound,
        remaining_budget: t_bound.map(|tb| tb - state.t),
    }
}
