//! Self-checks runnable from the command line: exact discrete identities,
//! variation orders, rescaling, the sphere ODE and the two sphere scenarios.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{classify_singularity, DiagError, FrameRecorder, Verdict};
use crate::flow::{
    run_flow, FlowError, FlowSink, FlowState, RecordCollector, StepEnergyMonitor, SteppingPolicy,
    TerminationReason,
};
use crate::geom::{
    build_cache, exact_directional_derivative, first_variation_check, functional_value, FlowParams, Functional,
    GeomError,
};
use crate::mesh::{make_icosphere, tetrahedron, torus, MeshError, TriangleMesh};
use crate::ode::{extinction_time_closed_form, integrate_sphere_ode, sphere_energy, sphere_radius_at, theory_bounds};
use crate::ode::{OdeError, OdeTerminal};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identities,
    Gradients,
    Rescaling,
    OdeOracle,
    Shrinker,
    Equilibrium,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Self::Identities, Self::Gradients, Self::Rescaling, Self::OdeOracle, Self::Shrinker, Self::Equilibrium];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identities => "identities",
            Self::Gradients => "gradients",
            Self::Rescaling => "rescaling",
            Self::OdeOracle => "ode_oracle",
            Self::Shrinker => "shrinker",
            Self::Equilibrium => "equilibrium",
        }
    }
}

impl FromStr for Suite {
    type Err = ValidateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| ValidateError::UnknownSuite(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    /// Coarser meshes and fewer samples; tolerances widen where noted.
    pub fast: bool,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { fast: false, seed: 20240501 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance, detail: String::new() }
    }

    fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value: f64::NAN, tolerance: f64::NAN, detail: detail.into() }
    }

    fn with(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport, ValidateError> {
    let checks = match suite {
        Suite::Identities => identities(opts)?,
        Suite::Gradients => gradients(opts)?,
        Suite::Rescaling => rescaling(opts)?,
        Suite::OdeOracle => ode_oracle(opts)?,
        Suite::Shrinker => shrinker(opts)?,
        Suite::Equilibrium => equilibrium(opts)?,
    };
    Ok(SuiteReport { suite, passed: checks.iter().all(|c| c.passed), checks })
}

fn unit_sphere(level: u32) -> Result<TriangleMesh<f64>, MeshError> {
    make_icosphere(level, 1.0, Vec3::zero())
}

/// Icosphere with smooth random radial bumps.
pub fn random_blob(rng: &mut ChaCha8Rng, level: u32) -> Result<TriangleMesh<f64>, MeshError> {
    let m = unit_sphere(level)?;
    let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-0.15..0.15));
    let k: [f64; 3] = std::array::from_fn(|_| rng.gen_range(1.0..3.0));
    let shift = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let verts = m
        .vertices()
        .iter()
        .map(|v| {
            let s = 1.0 + a[0] * (k[0] * v.x).sin() + a[1] * (k[1] * v.y).cos() * v.z + a[2] * (k[2] * v.z).sin()
                + a[3] * v.x * v.y;
            *v * s + shift
        })
        .collect();
    Ok(m.with_positions(verts))
}

/// Smooth random direction field on the vertices.
pub fn random_direction(rng: &mut ChaCha8Rng, mesh: &TriangleMesh<f64>) -> Vec<f64> {
    let a: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    mesh.vertices()
        .iter()
        .map(|v| {
            a[0] + a[1] * v.x + a[2] * v.y * v.z + a[3] * (2.0 * v.z).sin() + a[4] * v.x * v.x + a[5] * (v.x + v.y).cos()
        })
        .collect()
}

fn identities(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let mut checks = Vec::new();
    let max_level = if opts.fast { 4 } else { 5 };
    let mut meshes = vec![("tetrahedron".to_string(), tetrahedron::<f64>())];
    for level in 0..=max_level {
        meshes.push((format!("icosphere({level})"), unit_sphere(level)?));
    }
    meshes.push(("torus".to_string(), torus(1.0, 0.35, 48, 24)?));
    for (name, m) in &meshes {
        let c = build_cache(m)?;
        let chi = m.euler_characteristic() as f64;
        checks.push(Check::at_most(
            format!("gauss_bonnet {name}"),
            (c.total_gauss_curvature() - 2.0 * PI * chi).abs(),
            1e-10,
        ));
        let split = (0..c.n_vertices())
            .map(|i| {
                let h = c.mean_curvature[i];
                (c.asq[i] - (c.a0sq[i] + 0.5 * h * h)).abs() / c.asq[i].abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        checks.push(Check::at_most(format!("asq_split {name}"), split, 1e-14));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = random_blob(&mut rng, 3)?;
        let params = FlowParams::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.0..2.0))?;
        let e = build_cache(&m)?.penalized(&params);
        let center = m.centroid();
        for r in [0.5, 1.0, 2.0, 5.0] {
            let verts = m.vertices().iter().map(|&v| (v - center) / r).collect();
            let scaled = m.with_positions(verts);
            let er = build_cache(&scaled)?.penalized(&params.rescaled(r));
            worst = worst.max((er - e).abs() / e.abs());
        }
    }
    checks.push(Check::at_most("rescaled_energy_identity", worst, 1e-12).with("20 meshes, r in {0.5, 1, 2, 5}"));
    Ok(checks)
}

/// Central-difference rounding bound for a functional of size `value` at step `h`.
fn rounding_bound(value: f64, derivative: f64, h: f64) -> f64 {
    4.0 * f64::EPSILON * (value.abs() / h + derivative.abs())
}

fn gradients(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let level = if opts.fast { 3 } else { 4 };
    let m = unit_sphere(level)?;
    let c = build_cache(&m)?;
    let params = FlowParams::new(1.0, 0.5)?;
    let scale = m.bbox_diagonal();
    let steps = [1e-3, 1e-4, 1e-5];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    for sample in 0..5 {
        let phi = random_direction(&mut rng, &m);
        for (functional, agreement) in
            [(Functional::Area, 1e-10), (Functional::Volume, 5e-3), (Functional::Helfrich, 5e-3)]
        {
            let exact = exact_directional_derivative(&m, &params, &phi, functional)?;
            let value = functional_value(&m, &c, &params, functional);
            let mut errors = Vec::new();
            let mut analytic = 0.0;
            for s in steps {
                let v = first_variation_check(&m, &params, &phi, functional, Some(s * scale))?;
                analytic = v.analytic;
                errors.push((v.finite_difference - exact).abs());
            }
            let name = format!("{functional:?} phi#{sample}").to_lowercase();
            checks.push(
                Check::at_most(format!("{name} analytic"), (analytic - exact).abs() / exact.abs(), agreement)
                    .with(format!("analytic {analytic:.6e}, discrete {exact:.6e}")),
            );
            // e(h/10) ≤ (e(h) + rounding(h))/100 + rounding(h/10)
            let mut worst: f64 = 0.0;
            for k in 0..2 {
                let (h0, h1) = (steps[k] * scale, steps[k + 1] * scale);
                let bound =
                    (errors[k] + rounding_bound(value, exact, h0)) / 100.0 + rounding_bound(value, exact, h1);
                worst = worst.max(errors[k + 1] / bound);
            }
            checks.push(Check::at_most(format!("{name} fd_order"), worst, 1.0).with(format!(
                "|fd - exact| = {:.2e}, {:.2e}, {:.2e}",
                errors[0], errors[1], errors[2]
            )));
        }
    }
    Ok(checks)
}

/// Mean radius and time after every accepted step.
struct RadiusTrace(Vec<(f64, f64, f64)>);

impl FlowSink<f64> for RadiusTrace {
    fn accepted(&mut self, state: &FlowState<f64>) -> Result<(), FlowError> {
        self.0.push((state.t, state.mean_radius(), state.dt));
        Ok(())
    }
}

fn rescaling(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let level = if opts.fast { 3 } else { 4 };
    let m = unit_sphere(level)?;
    let params = FlowParams::new(-1.0, 0.0)?;
    let horizon = 0.1;
    let base = SteppingPolicy { horizon, ..Default::default() };
    let r: f64 = 2.0;
    let twin = SteppingPolicy { horizon: horizon / r.powi(4), dt_init: base.dt_init / r.powi(4), ..base.clone() };
    let mut a = RadiusTrace(Vec::new());
    let mut b = RadiusTrace(Vec::new());
    run_flow(m.clone(), &params, &base, &mut [&mut a])?;
    run_flow(m.scaled(1.0 / r), &params.rescaled(r), &twin, &mut [&mut b])?;
    let mut checks = vec![Check::flag(
        "matched step count",
        a.0.len() == b.0.len(),
        format!("{} vs {}", a.0.len(), b.0.len()),
    )];
    let n = a.0.len().min(b.0.len());
    let mut worst_r: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for k in 1..=10 {
        let i = (k * (n - 1)) / 10;
        let (x, y) = (a.0[i], b.0[i]);
        worst_r = worst_r.max((r * y.1 - x.1).abs() / x.1);
        worst_t = worst_t.max((r.powi(4) * y.0 - x.0).abs() / x.0.max(f64::MIN_POSITIVE));
    }
    checks.push(Check::at_most("back-scaled radius", worst_r, 1e-6).with("10 checkpoints"));
    checks.push(Check::at_most("back-scaled time", worst_t, 1e-12));
    Ok(checks)
}

fn ode_oracle(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples: Vec<(f64, f64, f64)> = (0..50)
        .map(|_| (rng.gen_range(0.1..3.0), rng.gen_range(-3.0..-0.1), rng.gen_range(0.0..2.0)))
        .collect();
    let results: Vec<Result<f64, ValidateError>> = samples
        .par_iter()
        .map(|&(r0, c0, lambda)| {
            let p = FlowParams::new(c0, lambda)?;
            let closed = extinction_time_closed_form(r0, &p).ok_or(OdeError::Invalid("no extinction".into()))?;
            let sol = integrate_sphere_ode(r0, &p, f64::INFINITY, 1e-10)?;
            match sol.terminal {
                OdeTerminal::Extinct { time } => Ok((time - closed).abs() / closed),
                other => Err(OdeError::Invalid(format!("expected extinction, got {other:?}")).into()),
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(vec![Check::at_most("extinction time closed form vs integration", worst, 1e-8).with("50 random cases")])
}

fn shrinker(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let (level, tol) = if opts.fast { (3, 0.15) } else { (4, 0.10) };
    let m = unit_sphere(level)?;
    let params = FlowParams::new(-1.0, 0.0)?;
    let mut frames = FrameRecorder::new(params, FrameRecorder::default_target(&m)?, None);
    let mut rc = RecordCollector::default();
    let mut energy = StepEnergyMonitor::new();
    let (_, report) = run_flow(m, &params, &SteppingPolicy::default(), &mut [&mut frames, &mut rc, &mut energy])?;
    let expected = extinction_time_closed_form(1.0, &params).ok_or(OdeError::Invalid("no extinction".into()))?;
    let e0 = rc.records[0].penalized;
    let bound = theory_bounds(&params, Some(e0))?.t_bound.unwrap_or(f64::INFINITY);
    let mut checks = vec![
        Check::flag(
            "singular_area_collapse",
            report.reason == TerminationReason::SingularAreaCollapse,
            report.reason.as_str(),
        ),
        Check::at_most("extinction time", (report.final_time - expected).abs() / expected, tol)
            .with(format!("T = {:.6}, closed form {expected:.6}", report.final_time)),
        Check::flag("below T_bound", report.final_time < bound, format!("T_bound = {bound:.3}")),
        Check::at_most("energy increase / E0", energy.worst_step_increase, 1e-10)
            .with(format!("{} accepted steps, {} remeshes", energy.accepted_steps, energy.remesh_jumps.len())),
    ];
    match classify_singularity(&frames.frames) {
        Ok(c) => {
            checks.push(Check::flag("round_shrinker", c.verdict == Verdict::RoundShrinker, format!("{:?}", c.verdict)));
            let w = *c.willmore.last().unwrap_or(&f64::NAN);
            checks.push(Check::at_most("last-frame W vs 4pi", (w - 4.0 * PI).abs() / (4.0 * PI), 0.05));
        }
        Err(e) => checks.push(Check::flag("round_shrinker", false, e.to_string())),
    }
    Ok(checks)
}

fn equilibrium(opts: &SuiteOptions) -> Result<Vec<Check>, ValidateError> {
    let level = if opts.fast { 3 } else { 4 };
    let params = FlowParams::new(1.0, 0.5)?;
    let runs: Vec<Result<Vec<Check>, ValidateError>> = [0.6, 1.5]
        .par_iter()
        .map(|&r0| {
            let m = make_icosphere::<f64>(level, r0, Vec3::zero())?;
            let mut rc = RecordCollector::default();
            let mut energy = StepEnergyMonitor::new();
            let (traj, report) = run_flow(m, &params, &SteppingPolicy::default(), &mut [&mut rc, &mut energy])?;
            let times: Vec<f64> = rc.records.iter().map(|r| r.t).collect();
            let radii = sphere_radius_at(r0, &params, &times, 1e-10)?;
            let energy_dev = rc
                .records
                .iter()
                .zip(&radii)
                .map(|(rec, &r)| {
                    let e = sphere_energy(r, &params);
                    (rec.penalized - e).abs() / e
                })
                .fold(0.0, f64::max);
            let e0 = rc.records[0].penalized;
            let willmore_excess = rc.records.iter().map(|r| r.willmore - 2.0 * e0).fold(f64::NEG_INFINITY, f64::max);
            let tag = format!("r0={r0}");
            Ok(vec![
                Check::flag(format!("{tag} converged"), report.reason == TerminationReason::Converged, report.reason.as_str()),
                Check::at_most(format!("{tag} final radius"), (traj.final_state.mean_radius() - 1.0).abs(), 0.02),
                Check::at_most(format!("{tag} final W0"), report.final_record.w0, 1e-3),
                Check::at_most(format!("{tag} energy vs sphere ODE"), energy_dev, 0.03),
                Check::at_most(format!("{tag} energy increase / E0"), energy.worst_step_increase, 1e-10),
                Check::at_most(format!("{tag} W - 2 E0"), willmore_excess, 1e-6),
            ])
        })
        .collect();
    let mut checks = Vec::new();
    for r in runs {
        checks.extend(r?);
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn fast_identities_and_ode_pass() {
        let opts = SuiteOptions { fast: true, ..Default::default() };
        for s in [Suite::Identities, Suite::OdeOracle] {
            let r = run_suite(s, &opts).unwrap();
            assert!(r.passed, "{:#?}", r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        }
    }
}
