//! Time integration of ∂t f = ξν with energy-monotone step control.
//!
//! In semi-implicit mode the normal displacement φ of a step solves
//! (M + dt·L M⁻¹ L) φ = dt·M ξ with the operators frozen at the start of the
//! step, so the fourth-order part of the velocity is implicit and the
//! remaining terms are explicit. Constants are in the kernel of L, which
//! leaves the uniform (radial) mode of a sphere untouched by the implicit
//! operator.

mod checkpoint;
mod run;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{build_cache, exact_flow_velocity, flow_velocity, FlowParams, GeomError, GeometryCache};
use crate::mesh::{MeshError, RemeshParams, TriangleMesh};
use crate::scalar::Real;
use crate::vec3::Vec3;

pub use checkpoint::{checkpoint, params_hash, restore, CheckpointSink, CheckpointError};
pub use run::{
    continue_flow, run_flow, FlowSink, RecordCollector, StepEnergyMonitor, TerminationEvidence, TerminationReason, TerminationReport, TimeSeriesRecord,
    Trajectory, TIME_SERIES_COLUMNS,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("step solve failed: {0}")]
    Solver(String),
    #[error("invalid stepping policy: {0}")]
    Policy(String),
    #[error("remeshing failed: {0}")]
    Remesh(MeshError),
    #[error("output sink failed: {0}")]
    Sink(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Explicit,
    SemiImplicit,
}

/// Source of the normal speed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// ξ assembled from the curvature formula.
    StrongForm,
    /// ξ from the exact gradient of the discrete energy.
    DiscreteExact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemeshPolicy {
    pub enabled: bool,
    /// Absolute target edge. `None` follows the surface size: the initial
    /// mean edge times √(A/A₀).
    pub target_edge: Option<f64>,
    /// Remesh when the mean edge leaves [target/drift, target·drift].
    pub drift_factor: f64,
    /// Remesh when the smallest angle drops below this (radians).
    pub min_angle: f64,
    /// Below this fraction of the initial area the target shrinks like √A.
    pub small_area_fraction: f64,
    pub check_every: usize,
}

impl Default for RemeshPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            target_edge: None,
            drift_factor: 2.0,
            min_angle: 35f64.to_radians(),
            small_area_fraction: 1e-3,
            check_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteppingPolicy {
    pub mode: StepMode,
    pub gradient: GradientMode,
    pub dt_init: f64,
    /// Hard upper bound on dt (absolute time units).
    pub dt_max: f64,
    /// Explicit mode: dt ≤ c_dt·h_min⁴.
    pub dt_cfl_coefficient: f64,
    /// Largest normal displacement per step as a fraction of h_min.
    pub displacement_fraction: f64,
    /// dt ≤ ζ/(sup|A|²·(sup|A|² + c0² + |λ|)) for the explicit lower-order terms.
    pub reaction_cfl: f64,
    pub dt_growth: f64,
    pub dt_shrink: f64,
    /// dt below dt_collapse_factor·h_min⁴ ends the run.
    pub dt_collapse_factor: f64,
    /// Accepted steps may raise H_{c0,λ} by at most this fraction of its initial value.
    pub energy_tolerance: f64,
    pub max_steps: usize,
    pub horizon: f64,
    /// Convergence: √(Σξ²a) below this for `convergence_window` consecutive steps.
    pub gradient_tolerance: f64,
    pub convergence_window: usize,
    /// Collapse: A(f) below this fraction of A(f₀).
    pub area_floor: f64,
    /// Blow-up: sup|A|²·A(f) above this while dt collapses.
    pub blowup_threshold: f64,
    pub remesh: RemeshPolicy,
    /// Write a checkpoint every this many accepted steps (0 = never).
    pub checkpoint_every: usize,
}

impl Default for SteppingPolicy {
    fn default() -> Self {
        Self {
            mode: StepMode::SemiImplicit,
            gradient: GradientMode::StrongForm,
            dt_init: 1e-4,
            dt_max: f64::INFINITY,
            dt_cfl_coefficient: 0.02,
            displacement_fraction: 0.1,
            reaction_cfl: 0.5,
            dt_growth: 1.5,
            dt_shrink: 0.5,
            dt_collapse_factor: 1e-6,
            energy_tolerance: 1e-10,
            max_steps: 100_000,
            horizon: f64::INFINITY,
            gradient_tolerance: 1e-3,
            convergence_window: 50,
            area_floor: 1e-4,
            blowup_threshold: 1e6,
            remesh: RemeshPolicy::default(),
            checkpoint_every: 0,
        }
    }
}

impl SteppingPolicy {
    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = [
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("dt_cfl_coefficient", self.dt_cfl_coefficient),
            ("displacement_fraction", self.displacement_fraction),
            ("reaction_cfl", self.reaction_cfl),
            ("dt_collapse_factor", self.dt_collapse_factor),
            ("horizon", self.horizon),
            ("area_floor", self.area_floor),
            ("blowup_threshold", self.blowup_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(FlowError::Policy(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.energy_tolerance >= 0.0 && self.gradient_tolerance >= 0.0) {
            return Err(FlowError::Policy("tolerances must be non-negative".into()));
        }
        if !(self.dt_shrink > 0.0 && self.dt_shrink < 1.0 && self.dt_growth > 1.0) {
            return Err(FlowError::Policy(format!(
                "need 0 < shrink < 1 < growth, got {} and {}",
                self.dt_shrink, self.dt_growth
            )));
        }
        if self.convergence_window == 0 {
            return Err(FlowError::Policy("convergence_window must be positive".into()));
        }
        Ok(())
    }
}

/// The evolving surface together with the step-control state.
#[derive(Clone, Debug)]
pub struct FlowState<T> {
    pub t: f64,
    pub mesh: TriangleMesh<T>,
    pub cache: GeometryCache<T>,
    /// Controller step size (before the per-step caps).
    pub dt: f64,
    pub step_index: usize,
    pub rejections: usize,
    /// H_{c0,λ} of the current mesh.
    pub energy: f64,
    pub initial_energy: f64,
    pub initial_area: f64,
    pub initial_mean_edge: f64,
    /// Consecutive accepted steps with gradient norm below tolerance.
    pub small_gradient_streak: usize,
    pub gradient_norm: f64,
    pub remesh_count: usize,
    /// Factorization structure reused between steps.
    pub solver: Option<StepSolver>,
}

impl<T: Real> FlowState<T> {
    pub fn new(mesh: TriangleMesh<T>, params: &FlowParams, policy: &SteppingPolicy) -> Result<Self, FlowError> {
        let cache = build_cache(&mesh)?;
        let energy = cache.penalized(params).value();
        let gradient_norm = gradient_norm(&mesh, &cache, params, policy.gradient)?;
        Ok(Self {
            t: 0.0,
            initial_mean_edge: mesh.quality_report().mean_edge,
            initial_area: cache.area.value(),
            cache,
            mesh,
            dt: policy.dt_init,
            step_index: 0,
            rejections: 0,
            energy,
            initial_energy: energy,
            small_gradient_streak: 0,
            gradient_norm,
            remesh_count: 0,
            solver: None,
        })
    }

    pub fn area(&self) -> f64 {
        self.cache.area.value()
    }

    /// Mean distance of the vertices from their centroid.
    pub fn mean_radius(&self) -> f64 {
        let c = self.mesh.centroid();
        let n = self.mesh.n_vertices() as f64;
        self.mesh.vertices().iter().map(|&v| (v - c).norm().value()).sum::<f64>() / n
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Accepted { dt: f64, energy_change: f64 },
    /// The state is unchanged apart from dt and the rejection count.
    Rejected { dt: f64, reason: RejectReason },
    /// dt fell below the collapse floor; the state is unchanged.
    DtCollapse { dt: f64, floor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RejectReason {
    EnergyIncrease(f64),
    InvalidGeometry,
}

pub(crate) fn velocity<T: Real>(
    mesh: &TriangleMesh<T>,
    cache: &GeometryCache<T>,
    params: &FlowParams,
    mode: GradientMode,
) -> Result<Vec<T>, FlowError> {
    Ok(match mode {
        GradientMode::StrongForm => flow_velocity(cache, params).values,
        GradientMode::DiscreteExact => {
            let m = mesh.cast::<f64>();
            let c = build_cache(&m)?;
            exact_flow_velocity(&m, &c, params)?.values.into_iter().map(T::cst).collect()
        }
    })
}

fn gradient_norm<T: Real>(
    mesh: &TriangleMesh<T>,
    cache: &GeometryCache<T>,
    params: &FlowParams,
    mode: GradientMode,
) -> Result<f64, FlowError> {
    let xi = velocity(mesh, cache, params, mode)?;
    Ok(crate::geom::velocity_l2_norm(cache, &xi).value())
}

pub fn min_edge_length<T: Real>(mesh: &TriangleMesh<T>) -> f64 {
    mesh.faces()
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k], f[(k + 1) % 3])))
        .map(|(a, b)| (mesh.vertices()[a] - mesh.vertices()[b]).norm().value())
        .fold(f64::INFINITY, f64::min)
}

/// Step size after applying the stability and displacement caps.
pub fn capped_dt<T: Real>(state: &FlowState<T>, xi: &[T], params: &FlowParams, policy: &SteppingPolicy) -> f64 {
    let h = min_edge_length(&state.mesh);
    let max_xi = xi.iter().map(|x| x.abs().value()).fold(0.0, f64::max);
    let sup = state.cache.max_asq.value();
    let mut dt = state.dt.min(policy.dt_max);
    if max_xi > 0.0 {
        dt = dt.min(policy.displacement_fraction * h / max_xi);
    }
    let stiffness = sup * (sup + params.c0 * params.c0 + params.lambda.abs());
    if stiffness > 0.0 {
        dt = dt.min(policy.reaction_cfl / stiffness);
    }
    if policy.mode == StepMode::Explicit {
        dt = dt.min(policy.dt_cfl_coefficient * h.powi(4));
    }
    if policy.horizon.is_finite() {
        dt = dt.min(policy.horizon - state.t);
    }
    dt
}

/// Sparse Cholesky solver for M + dt·L M⁻¹ L. The pattern (the two-ring of
/// every vertex) and its symbolic factorization depend only on connectivity
/// and are reused until the faces change.
#[derive(Clone, Debug)]
pub struct StepSolver {
    faces: Vec<[usize; 3]>,
    pattern: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLlt<usize>,
}

fn full_row<T: Real>(cache: &GeometryCache<T>, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let lap = &cache.laplacian;
    std::iter::once((i, lap.diagonal(i).value())).chain(lap.row(i).map(|(j, w)| (j, w.value())))
}

impl StepSolver {
    pub fn new<T: Real>(mesh: &TriangleMesh<T>, cache: &GeometryCache<T>) -> Result<Self, FlowError> {
        let n = mesh.n_vertices();
        let mut mark = vec![usize::MAX; n];
        let mut col_ptr = vec![0usize];
        let mut row_idx = Vec::new();
        for i in 0..n {
            let start = row_idx.len();
            for (k, _) in full_row(cache, i) {
                for (j, _) in full_row(cache, k) {
                    if j <= i && mark[j] != i {
                        mark[j] = i;
                        row_idx.push(j);
                    }
                }
            }
            row_idx[start..].sort_unstable();
            col_ptr.push(row_idx.len());
        }
        let pattern = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic =
            SymbolicLlt::try_new(pattern.as_ref(), Side::Upper).map_err(|e| FlowError::Solver(format!("{e:?}")))?;
        Ok(Self { faces: mesh.faces().to_vec(), pattern, symbolic })
    }

    pub fn matches<T: Real>(&self, mesh: &TriangleMesh<T>) -> bool {
        self.faces == mesh.faces()
    }

    /// Upper-triangle values of M + dt·L M⁻¹ L in pattern order.
    fn values<T: Real>(&self, cache: &GeometryCache<T>, dt: f64) -> Vec<f64> {
        let a: Vec<f64> = cache.vertex_area.iter().map(|x| x.value()).collect();
        let n = a.len();
        let mut acc = vec![0.0; n];
        let mut val = Vec::with_capacity(self.pattern.row_idx().len());
        for i in 0..n {
            for (k, lik) in full_row(cache, i) {
                for (j, lkj) in full_row(cache, k) {
                    if j <= i {
                        acc[j] += dt * lik * lkj / a[k];
                    }
                }
            }
            acc[i] += a[i];
            for j in self.pattern.row_idx_of_col(i) {
                val.push(acc[j]);
                acc[j] = 0.0;
            }
        }
        val
    }

    /// Solves (M + dt·L M⁻¹ L) φ = dt·M ξ.
    pub fn solve<T: Real>(&self, cache: &GeometryCache<T>, xi: &[T], dt: f64) -> Result<Vec<T>, FlowError> {
        let n = xi.len();
        let val = self.values(cache, dt);
        let mat = SparseColMatRef::new(self.pattern.as_ref(), &val);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Upper)
            .map_err(|e| FlowError::Solver(format!("{e:?}")))?;
        let rhs = Col::<f64>::from_fn(n, |i| dt * cache.vertex_area[i].value() * xi[i].value());
        let phi = llt.solve(&rhs);
        if (0..n).any(|i| !phi[i].is_finite()) {
            return Err(FlowError::Solver("non-finite solution".into()));
        }
        Ok((0..n).map(|i| T::cst(phi[i])).collect())
    }
}

/// Normal displacement φ of one step of length dt.
pub fn normal_displacement<T: Real>(
    mesh: &TriangleMesh<T>,
    cache: &GeometryCache<T>,
    xi: &[T],
    dt: f64,
    mode: StepMode,
    solver: &mut Option<StepSolver>,
) -> Result<Vec<T>, FlowError> {
    match mode {
        StepMode::Explicit => Ok(xi.iter().map(|&x| T::cst(dt) * x).collect()),
        StepMode::SemiImplicit => {
            if !solver.as_ref().is_some_and(|s| s.matches(mesh)) {
                *solver = Some(StepSolver::new(mesh, cache)?);
            }
            solver.as_ref().expect("solver initialised").solve(cache, xi, dt)
        }
    }
}

/// Attempts one step. On acceptance the state advances; otherwise only dt
/// and the rejection counter change.
pub fn step<T: Real>(state: &mut FlowState<T>, params: &FlowParams, policy: &SteppingPolicy) -> Result<StepOutcome, FlowError> {
    let xi = velocity(&state.mesh, &state.cache, params, policy.gradient)?;
    let dt = capped_dt(state, &xi, params, policy);
    let h = min_edge_length(&state.mesh);
    let floor = policy.dt_collapse_factor * h.powi(4);
    if dt < floor && !(policy.horizon - state.t <= dt) {
        return Ok(StepOutcome::DtCollapse { dt, floor });
    }
    let phi = normal_displacement(&state.mesh, &state.cache, &xi, dt, policy.mode, &mut state.solver)?;
    let moved: Vec<Vec3<T>> = state
        .mesh
        .vertices()
        .iter()
        .zip(&state.cache.normal)
        .zip(&phi)
        .map(|((&v, &n), &p)| v + n * p)
        .collect();
    let candidate = state.mesh.with_positions(moved);
    let cache = match build_cache(&candidate) {
        Ok(c) if c.area.is_finite() && c.area > T::zero() => c,
        _ => {
            state.dt = dt * policy.dt_shrink;
            state.rejections += 1;
            return Ok(StepOutcome::Rejected { dt, reason: RejectReason::InvalidGeometry });
        }
    };
    let energy = cache.penalized(params).value();
    let change = energy - state.energy;
    if !energy.is_finite() || change > policy.energy_tolerance * state.initial_energy {
        state.dt = dt * policy.dt_shrink;
        state.rejections += 1;
        return Ok(StepOutcome::Rejected { dt, reason: RejectReason::EnergyIncrease(change) });
    }
    state.mesh = candidate;
    state.cache = cache;
    state.t += dt;
    state.step_index += 1;
    state.energy = energy;
    state.dt = (dt * policy.dt_growth).max(state.dt).min(policy.dt_max);
    state.gradient_norm = gradient_norm(&state.mesh, &state.cache, params, policy.gradient)?;
    if state.gradient_norm < policy.gradient_tolerance {
        state.small_gradient_streak += 1;
    } else {
        state.small_gradient_streak = 0;
    }
    Ok(StepOutcome::Accepted { dt, energy_change: change })
}

/// Remeshes when the edge-length drift or the angle floor is breached.
/// Returns whether the mesh changed.
pub fn maybe_remesh<T: Real>(state: &mut FlowState<T>, params: &FlowParams, policy: &SteppingPolicy) -> Result<bool, FlowError> {
    let rp = &policy.remesh;
    if !rp.enabled || rp.check_every == 0 || state.step_index % rp.check_every != 0 {
        return Ok(false);
    }
    let ratio = state.area() / state.initial_area;
    let target = match rp.target_edge {
        Some(base) if ratio < rp.small_area_fraction => base * (ratio / rp.small_area_fraction).sqrt(),
        Some(base) => base,
        None => state.initial_mean_edge * ratio.sqrt(),
    };
    let q = state.mesh.quality_report();
    let drifted = q.mean_edge > rp.drift_factor * target || q.mean_edge < target / rp.drift_factor;
    if !drifted && q.min_angle >= rp.min_angle {
        return Ok(false);
    }
    let mesh = crate::mesh::remesh(&state.mesh, &RemeshParams::new(target)).map_err(FlowError::Remesh)?;
    state.cache = build_cache(&mesh)?;
    state.mesh = mesh;
    state.energy = state.cache.penalized(params).value();
    state.remesh_count += 1;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    fn sphere(level: u32, r: f64) -> TriangleMesh<f64> {
        make_icosphere(level, r, Vec3::zero()).unwrap()
    }

    #[test]
    fn explicit_step_shrinks_sphere_at_rate_three() {
        let params = FlowParams::new(-1.0, 0.0).unwrap();
        let policy = SteppingPolicy {
            mode: StepMode::Explicit,
            dt_init: 1e-5,
            dt_cfl_coefficient: 1e6,
            ..Default::default()
        };
        let mut s = FlowState::new(sphere(4, 1.0), &params, &policy).unwrap();
        let r0 = s.mean_radius();
        let out = step(&mut s, &params, &policy).unwrap();
        assert!(matches!(out, StepOutcome::Accepted { dt, .. } if dt == 1e-5), "{out:?}");
        let dr = r0 - s.mean_radius();
        assert!((dr - 3e-5).abs() < 0.02 * 3e-5, "radius change {dr:e}");
    }

    #[test]
    fn inflated_dt_is_rejected_and_state_kept() {
        let params = FlowParams::new(2.0, 0.0).unwrap();
        let m = sphere(3, 1.0);
        let bumped = m.with_positions(m.vertices().iter().map(|v| *v * (1.0 + 0.02 * (5.0 * v.x).sin())).collect());
        let policy = SteppingPolicy {
            mode: StepMode::Explicit,
            dt_init: 1e-2,
            dt_cfl_coefficient: 1e9,
            displacement_fraction: 1e9,
            reaction_cfl: 1e9,
            ..Default::default()
        };
        let mut s = FlowState::new(bumped, &params, &policy).unwrap();
        let before = s.mesh.vertices().to_vec();
        let out = step(&mut s, &params, &policy).unwrap();
        assert!(matches!(out, StepOutcome::Rejected { .. }), "{out:?}");
        assert_eq!(s.mesh.vertices(), &before[..]);
        assert_eq!(s.dt, 1e-2 * policy.dt_shrink);
        assert_eq!((s.rejections, s.step_index, s.t), (1, 0, 0.0));
    }

    #[test]
    fn semi_implicit_step_preserves_radial_rate() {
        let params = FlowParams::new(-1.0, 0.0).unwrap();
        let policy = SteppingPolicy { dt_init: 1e-4, ..Default::default() };
        let mut s = FlowState::new(sphere(4, 1.0), &params, &policy).unwrap();
        let r0 = s.mean_radius();
        let StepOutcome::Accepted { dt, .. } = step(&mut s, &params, &policy).unwrap() else { panic!() };
        let rate = (r0 - s.mean_radius()) / dt;
        assert!((rate - 3.0).abs() < 0.06, "rate {rate}");
    }

    #[test]
    fn step_matrix_matches_operator() {
        let m = sphere(2, 1.3);
        let c = build_cache(&m).unwrap();
        let dt = 0.01;
        let n = m.n_vertices();
        let solver = StepSolver::new(&m, &c).unwrap();
        let val = solver.values(&c, dt);
        let mut dense = vec![vec![0.0; n]; n];
        let mut pos = 0;
        for col in 0..n {
            for row in solver.pattern.row_idx_of_col(col) {
                dense[row][col] = val[pos];
                dense[col][row] = val[pos];
                pos += 1;
            }
        }
        let u: Vec<f64> = m.vertices().iter().map(|v| (2.0 * v.x).sin() + v.y * v.z).collect();
        let lu: Vec<f64> = c.laplacian.apply(&u).iter().zip(&c.vertex_area).map(|(l, a)| l / a).collect();
        let llu = c.laplacian.apply(&lu);
        for i in 0..n {
            let direct = c.vertex_area[i] * u[i] + dt * llu[i];
            let assembled: f64 = (0..n).map(|j| dense[i][j] * u[j]).sum();
            assert!((direct - assembled).abs() < 1e-12, "{i}: {direct} vs {assembled}");
        }
        let phi = solver.solve(&c, &u, dt).unwrap();
        for i in 0..n {
            let back: f64 = (0..n).map(|j| dense[i][j] * phi[j]).sum();
            assert!((back - dt * c.vertex_area[i] * u[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(SteppingPolicy::default().validate().is_ok());
        let bad = SteppingPolicy { dt_shrink: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SteppingPolicy { dt_init: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
