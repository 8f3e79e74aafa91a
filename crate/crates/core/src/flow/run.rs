use serde::{Deserialize, Serialize};

use super::{maybe_remesh, step, FlowError, FlowState, StepOutcome, SteppingPolicy};
use crate::geom::FlowParams;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

pub const TIME_SERIES_COLUMNS: [&str; 13] = [
    "t",
    "dt",
    "area",
    "volume",
    "willmore",
    "w0",
    "helfrich",
    "penalized",
    "mean_curvature_integral",
    "max_asq",
    "gradient_norm",
    "clamp_mass",
    "step_rejections",
];

/// One row of the time series, written after every accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub dt: f64,
    pub area: f64,
    pub volume: f64,
    pub willmore: f64,
    pub w0: f64,
    pub helfrich: f64,
    pub penalized: f64,
    pub mean_curvature_integral: f64,
    pub max_asq: f64,
    pub gradient_norm: f64,
    pub clamp_mass: f64,
    /// Cumulative rejected steps.
    pub step_rejections: usize,
}

impl TimeSeriesRecord {
    pub fn from_state<T: Real>(state: &FlowState<T>, params: &FlowParams, dt: f64) -> Self {
        let c = &state.cache;
        Self {
            t: state.t,
            dt,
            area: c.area.value(),
            volume: c.volume.value(),
            willmore: c.willmore.value(),
            w0: c.w0.value(),
            helfrich: c.helfrich(params).value(),
            penalized: state.energy,
            mean_curvature_integral: c.integrate(&c.mean_curvature).value(),
            max_asq: c.max_asq.value(),
            gradient_norm: state.gradient_norm,
            clamp_mass: c.clamp_mass.value(),
            step_rejections: state.rejections,
        }
    }

    /// Values in [`TIME_SERIES_COLUMNS`] order.
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.dt,
            self.area,
            self.volume,
            self.willmore,
            self.w0,
            self.helfrich,
            self.penalized,
            self.mean_curvature_integral,
            self.max_asq,
            self.gradient_norm,
            self.clamp_mass,
            self.step_rejections as f64,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    SingularAreaCollapse,
    SingularCurvatureBlowup,
    DtCollapse,
    HorizonReached,
    StepBudget,
}

impl TerminationReason {
    pub fn is_singular(self) -> bool {
        matches!(self, Self::SingularAreaCollapse | Self::SingularCurvatureBlowup)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::SingularAreaCollapse => "singular_area_collapse",
            Self::SingularCurvatureBlowup => "singular_curvature_blowup",
            Self::DtCollapse => "dt_collapse",
            Self::HorizonReached => "horizon_reached",
            Self::StepBudget => "step_budget",
        }
    }
}

/// Quantities that justify the termination reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationEvidence {
    pub gradient_norm: f64,
    pub small_gradient_streak: usize,
    /// A(f_T)/A(f₀).
    pub area_ratio: f64,
    pub max_asq: f64,
    /// sup|A|²·A(f), invariant under rescaling.
    pub scale_invariant_curvature: f64,
    pub last_dt: f64,
    pub dt_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub final_time: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub remesh_count: usize,
    pub final_record: TimeSeriesRecord,
    pub evidence: TerminationEvidence,
}

pub struct Trajectory<T> {
    pub records: Vec<TimeSeriesRecord>,
    pub final_state: FlowState<T>,
}

/// Observer of a running flow. All hooks default to no-ops.
pub trait FlowSink<T> {
    fn record(&mut self, _record: &TimeSeriesRecord) -> Result<(), FlowError> {
        Ok(())
    }

    /// Called with the state after the initial record and every accepted step.
    fn accepted(&mut self, _state: &FlowState<T>) -> Result<(), FlowError> {
        Ok(())
    }

    /// Called after the mesh has been replaced by a remeshed one.
    fn remeshed(&mut self, _state: &FlowState<T>) -> Result<(), FlowError> {
        Ok(())
    }

    /// Called at the checkpoint cadence of the stepping policy.
    fn checkpoint(&mut self, _state: &FlowState<T>, _params: &FlowParams) -> Result<(), FlowError> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Default)]
pub struct RecordCollector {
    pub records: Vec<TimeSeriesRecord>,
}

impl<T> FlowSink<T> for RecordCollector {
    fn record(&mut self, record: &TimeSeriesRecord) -> Result<(), FlowError> {
        self.records.push(*record);
        Ok(())
    }
}

/// Tracks the energy change of every accepted step relative to E0,
/// measured from the energy the step started from (after any remesh).
#[derive(Clone, Debug, Default)]
pub struct StepEnergyMonitor {
    reference: Option<f64>,
    initial: Option<f64>,
    /// Largest (E_after − E_before)/|E0| over accepted steps.
    pub worst_step_increase: f64,
    pub accepted_steps: usize,
    /// (E_after − E_before)/|E0| of each remesh.
    pub remesh_jumps: Vec<f64>,
}

impl StepEnergyMonitor {
    pub fn new() -> Self {
        Self { worst_step_increase: f64::NEG_INFINITY, ..Default::default() }
    }
}

impl<T> FlowSink<T> for StepEnergyMonitor {
    fn accepted(&mut self, state: &FlowState<T>) -> Result<(), FlowError> {
        let e0 = *self.initial.get_or_insert(state.initial_energy.abs());
        if let Some(before) = self.reference {
            self.worst_step_increase = self.worst_step_increase.max((state.energy - before) / e0);
            self.accepted_steps += 1;
        }
        self.reference = Some(state.energy);
        Ok(())
    }

    fn remeshed(&mut self, state: &FlowState<T>) -> Result<(), FlowError> {
        if let (Some(before), Some(e0)) = (self.reference, self.initial) {
            self.remesh_jumps.push((state.energy - before) / e0);
        }
        self.reference = Some(state.energy);
        Ok(())
    }
}

/// Runs the flow from `mesh` until one of the termination conditions holds.
pub fn run_flow<T: Real>(
    mesh: TriangleMesh<T>,
    params: &FlowParams,
    policy: &SteppingPolicy,
    sinks: &mut [&mut dyn FlowSink<T>],
) -> Result<(Trajectory<T>, TerminationReport), FlowError> {
    policy.validate()?;
    let state = FlowState::new(mesh, params, policy)?;
    continue_flow(state, params, policy, sinks)
}

/// Runs the flow from an existing state, e.g. one restored from a checkpoint.
/// The initial record is emitted only when the state is at step zero.
pub fn continue_flow<T: Real>(
    mut state: FlowState<T>,
    params: &FlowParams,
    policy: &SteppingPolicy,
    sinks: &mut [&mut dyn FlowSink<T>],
) -> Result<(Trajectory<T>, TerminationReport), FlowError> {
    policy.validate()?;
    let mut records = Vec::new();
    let mut last_dt = 0.0;
    let emit = |state: &FlowState<T>, dt: f64, records: &mut Vec<TimeSeriesRecord>, sinks: &mut [&mut dyn FlowSink<T>]| {
        let rec = TimeSeriesRecord::from_state(state, params, dt);
        records.push(rec);
        for s in sinks.iter_mut() {
            s.record(&rec)?;
            s.accepted(state)?;
        }
        Ok::<_, FlowError>(())
    };
    if state.step_index == 0 {
        emit(&state, 0.0, &mut records, sinks)?;
    }
    let mut attempts = 0usize;
    let mut dt_floor = None;
    let reason = loop {
        if let Some(r) = stop_reason(&state, policy) {
            break r;
        }
        if attempts >= policy.max_steps {
            break TerminationReason::StepBudget;
        }
        attempts += 1;
        match step(&mut state, params, policy)? {
            StepOutcome::Accepted { dt, .. } => {
                last_dt = dt;
                emit(&state, dt, &mut records, sinks)?;
                if policy.checkpoint_every > 0 && state.step_index % policy.checkpoint_every == 0 {
                    for s in sinks.iter_mut() {
                        s.checkpoint(&state, params)?;
                    }
                }
                if maybe_remesh(&mut state, params, policy)? {
                    for s in sinks.iter_mut() {
                        s.remeshed(&state)?;
                    }
                }
            }
            StepOutcome::Rejected { .. } => {}
            StepOutcome::DtCollapse { dt, floor } => {
                last_dt = dt;
                dt_floor = Some(floor);
                let scale_free = state.cache.max_asq.value() * state.area();
                break if scale_free > policy.blowup_threshold {
                    TerminationReason::SingularCurvatureBlowup
                } else {
                    TerminationReason::DtCollapse
                };
            }
        }
    };
    let final_record = TimeSeriesRecord::from_state(&state, params, last_dt);
    let report = TerminationReport {
        reason,
        final_time: state.t,
        accepted_steps: state.step_index,
        rejected_steps: state.rejections,
        remesh_count: state.remesh_count,
        final_record,
        evidence: TerminationEvidence {
            gradient_norm: state.gradient_norm,
            small_gradient_streak: state.small_gradient_streak,
            area_ratio: state.area() / state.initial_area,
            max_asq: state.cache.max_asq.value(),
            scale_invariant_curvature: state.cache.max_asq.value() * state.area(),
            last_dt,
            dt_floor,
        },
    };
    Ok((Trajectory { records, final_state: state }, report))
}

fn stop_reason<T: Real>(state: &FlowState<T>, policy: &SteppingPolicy) -> Option<TerminationReason> {
    if state.area() < policy.area_floor * state.initial_area {
        Some(TerminationReason::SingularAreaCollapse)
    } else if state.small_gradient_streak >= policy.convergence_window {
        Some(TerminationReason::Converged)
    } else if policy.horizon.is_finite() && policy.horizon - state.t <= 1e-12 * policy.horizon {
        Some(TerminationReason::HorizonReached)
    } else {
        None
    }
}
