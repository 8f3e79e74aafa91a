use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use helfrich_core::diagnostics::{
    classify_singularity, hypothesis_monitors, rescale_frame, write_frame, DiagError, FrameRecorder, MonitorRecord,
    SingularityClassification,
};
use helfrich_core::flow::{
    run_flow, CheckpointSink, FlowError, FlowSink, RecordCollector, StepEnergyMonitor, TerminationReason,
    TerminationReport,
};
use helfrich_core::geom::{
    build_cache, gauss_bonnet_residual, mean_curvature_integral, willmore_bound_residual, FlowParams,
};
use helfrich_core::mesh::{load_mesh, make_icosphere, save_mesh, tetrahedron, torus, MeshError};
use helfrich_core::ode::{
    equilibrium_radius, extinction_time_closed_form, integrate_sphere_ode, sphere_energy, theory_bounds, OdeTerminal,
    TheoryBounds,
};
use helfrich_core::validate::{run_suite, Suite, SuiteOptions};
use helfrich_core::{Mesh, Vec3};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_table, table_params, ConfigError, MeshConfig, RunConfig};
use crate::output::{fmt_f64, CsvSeries, Progress};
use crate::{Cli, Command, Failure, GlobalArgs, OnOff, Outcome, ParamArgs};

const DEFAULT_OUT: &str = "helfrich-out";

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Flow => flow(g),
        Command::Ode { params, r0, horizon, rtol } => ode(g, params, *r0, *horizon, *rtol),
        Command::Energy { mesh, params } => energy(g, mesh, params),
        Command::Rescale { mesh, r, x, params } => rescale(g, mesh, *r, x, params),
        Command::Validate { suite, fast, seed } => validate(g, suite, *fast, *seed),
    }
}

fn config_failure(e: &ConfigError) -> Failure {
    match e {
        ConfigError::Read { .. } | ConfigError::MissingMesh(_) => Failure::Io,
        _ => Failure::Config,
    }
}

fn mesh_failure(e: &MeshError) -> Failure {
    match e {
        MeshError::Io { .. } => Failure::Io,
        MeshError::UnknownFormat(_) | MeshError::InvalidParameter(_) | MeshError::TooManySubdivisions { .. } => {
            Failure::Config
        }
        _ => Failure::MeshInvalid,
    }
}

fn flow_failure(e: &FlowError) -> Failure {
    match e {
        FlowError::Geometry(_) => Failure::MeshInvalid,
        FlowError::Mesh(m) => mesh_failure(m),
        FlowError::Solver(_) | FlowError::Remesh(_) => Failure::Solver,
        FlowError::Policy(_) => Failure::Config,
        FlowError::Sink(_) | FlowError::Checkpoint(_) => Failure::Io,
    }
}

fn fail(f: Failure, e: impl Into<anyhow::Error>) -> anyhow::Error {
    e.into().context(f)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).context(Failure::Io)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context(Failure::Io)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())).context(Failure::Io)
}

/// A mesh file, or a generator: `icosphere:LEVEL[:RADIUS]`, `torus:R:r`, `tetrahedron`.
fn mesh_from_arg(arg: &str) -> Result<Mesh> {
    let path = Path::new(arg);
    if path.exists() || !(arg.contains(':') || arg == "tetrahedron") {
        let m = load_mesh::<f64>(path, None).map_err(|e| fail(mesh_failure(&e), e))?;
        return m.orient_for_positive_volume().map_err(|e| fail(Failure::MeshInvalid, e));
    }
    let parts: Vec<&str> = arg.split(':').collect();
    let num = |i: usize, default: Option<f64>| -> Result<f64> {
        match (parts.get(i), default) {
            (Some(s), _) => s.parse::<f64>().map_err(|_| fail(Failure::Config, anyhow::anyhow!("bad number {s:?} in {arg:?}"))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(fail(Failure::Config, anyhow::anyhow!("generator {arg:?} is missing arguments"))),
        }
    };
    let mesh = match parts[0] {
        "icosphere" => {
            let level = num(1, None)?;
            if level.fract() != 0.0 || level < 0.0 {
                return Err(fail(Failure::Config, anyhow::anyhow!("icosphere level must be a whole number")));
            }
            make_icosphere(level as u32, num(2, Some(1.0))?, Vec3::zero())
        }
        "torus" => torus(num(1, None)?, num(2, None)?, 64, 32),
        "tetrahedron" => Ok(tetrahedron()),
        other => return Err(fail(Failure::Config, anyhow::anyhow!("unknown mesh generator {other:?}"))),
    };
    mesh.map_err(|e| fail(mesh_failure(&e), e))
}

fn mesh_from_config(m: &MeshConfig) -> Result<Mesh> {
    let c = Vec3::new(m.center[0], m.center[1], m.center[2]);
    match (&m.path, m.icosphere_level) {
        (Some(p), _) => {
            let mesh = load_mesh::<f64>(p, None).map_err(|e| fail(mesh_failure(&e), e))?;
            mesh.orient_for_positive_volume().map_err(|e| fail(Failure::MeshInvalid, e))
        }
        (None, Some(level)) => make_icosphere(level, m.radius, c).map_err(|e| fail(mesh_failure(&e), e)),
        (None, None) => Err(fail(Failure::Config, ConfigError::MeshSource)),
    }
}

/// Command-line values first, then `params.*` from the configuration.
fn resolve_params(g: &GlobalArgs, args: &ParamArgs, defaults: Option<(f64, f64)>) -> Result<FlowParams> {
    let table = load_table(g.config.as_deref(), &g.overrides).map_err(|e| fail(config_failure(&e), e))?;
    let (c0_cfg, lambda_cfg) = table_params(&table).map_err(|e| fail(Failure::Config, e))?;
    let c0 = args.c0.or(c0_cfg).or(defaults.map(|d| d.0));
    let lambda = args.lambda.or(lambda_cfg).or(defaults.map(|d| d.1));
    match (c0, lambda) {
        (Some(c0), Some(lambda)) => FlowParams::new(c0, lambda).map_err(|e| fail(Failure::Config, e)),
        _ => Err(fail(Failure::Config, anyhow::anyhow!("both --c0 and --lambda (or params.* in --config) are required"))),
    }
}

#[derive(Serialize)]
struct SurfaceInfo {
    vertices: usize,
    faces: usize,
    genus: i64,
    area: f64,
    volume: f64,
    mean_radius: f64,
    willmore: f64,
    w0: f64,
    energy: f64,
}

#[derive(Serialize)]
struct ThresholdComparison {
    e0: f64,
    en_threshold: Option<f64>,
    e0_below_threshold: Option<bool>,
    final_time: f64,
    t_bound: Option<f64>,
    final_time_below_t_bound: Option<bool>,
    willmore_ctrl_factor: Option<f64>,
    /// max_t W(f(t)) − factor·E0 over the recorded series.
    willmore_ctrl_margin: Option<f64>,
}

#[derive(Serialize)]
struct EnergyMonotonicity {
    worst_step_increase_over_e0: f64,
    accepted_steps: usize,
    remesh_jumps_over_e0: Vec<f64>,
}

#[derive(Serialize)]
struct SphereReference {
    initial_mean_radius: f64,
    r_star: Option<f64>,
    closed_form_extinction_time: Option<f64>,
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    config: &'a RunConfig,
    termination: &'a TerminationReport,
    initial: SurfaceInfo,
    #[serde(rename = "final")]
    final_surface: SurfaceInfo,
    theory_bounds: Option<TheoryBounds>,
    theory_bounds_error: Option<String>,
    thresholds: ThresholdComparison,
    energy_monotonicity: EnergyMonotonicity,
    sphere_reference: SphereReference,
    classification: Option<SingularityClassification>,
    classification_error: Option<String>,
    frames_written: usize,
    monitors: MonitorRecord,
    checkpoints: Vec<String>,
}

fn surface_info(mesh: &Mesh, params: &FlowParams) -> Result<SurfaceInfo> {
    let c = build_cache(mesh).map_err(|e| fail(Failure::MeshInvalid, e))?;
    let centroid = mesh.centroid();
    let mean_radius =
        mesh.vertices().iter().map(|v| (*v - centroid).norm()).sum::<f64>() / mesh.n_vertices() as f64;
    Ok(SurfaceInfo {
        vertices: mesh.n_vertices(),
        faces: mesh.n_faces(),
        genus: mesh.genus(),
        area: c.area,
        volume: c.volume,
        mean_radius,
        willmore: c.willmore,
        w0: c.w0,
        energy: c.penalized(params),
    })
}

fn flow(g: &GlobalArgs) -> Result<Outcome> {
    let cfg = RunConfig::load(g.config.as_deref(), &g.overrides).map_err(|e| fail(config_failure(&e), e))?;
    let out = g.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    ensure_dir(&out)?;
    let params = cfg.params;
    let mesh = mesh_from_config(&cfg.mesh)?;
    let initial = surface_info(&mesh, &params)?;
    let frames_on = g.frames.map(|f| f == OnOff::On).unwrap_or(cfg.diagnostics.frames);

    let mut csv = CsvSeries::create(&out.join("series.csv")).context("creating series.csv").context(Failure::Io)?;
    let mut energy = StepEnergyMonitor::new();
    let mut records = RecordCollector::default();
    let mut progress = Progress { every: 500 };
    let kappa_target = match cfg.diagnostics.kappa_target {
        Some(k) => k,
        None => FrameRecorder::default_target(&mesh).map_err(|e| fail(Failure::MeshInvalid, e))?,
    };
    let mut frames = FrameRecorder::new(params, kappa_target, None);
    frames.grid_points = cfg.diagnostics.radius_grid_points;
    frames.area_cadence = cfg.diagnostics.frame_area_ratio;
    let mut checkpoints = CheckpointSink::new(out.join("checkpoints"));

    let mut sinks: Vec<&mut dyn FlowSink<f64>> = vec![&mut csv, &mut energy, &mut records];
    if !g.quiet {
        sinks.push(&mut progress);
    }
    if frames_on {
        sinks.push(&mut frames);
    }
    if cfg.stepping.checkpoint_every > 0 {
        sinks.push(&mut checkpoints);
    }
    let (traj, report) = run_flow(mesh, &params, &cfg.stepping, &mut sinks).map_err(|e| fail(flow_failure(&e), e))?;
    drop(sinks);
    csv.finish().context("writing series.csv").context(Failure::Io)?;

    let mut frames_written = 0;
    let (mut classification, mut classification_error) = (None, None);
    if frames_on && report.reason.is_singular() {
        let dir = out.join("frames");
        ensure_dir(&dir)?;
        for (i, f) in frames.frames.iter().enumerate() {
            write_frame(f, &dir, i).map_err(|e| fail(Failure::Io, e))?;
            frames_written += 1;
        }
        match classify_singularity(&frames.frames) {
            Ok(c) => classification = Some(c),
            Err(e) => classification_error = Some(e.to_string()),
        }
    }

    let e0 = initial.energy;
    let (bounds, bounds_error) = match theory_bounds(&params, Some(e0)) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let t_bound = bounds.and_then(|b| b.t_bound);
    let factor = bounds.and_then(|b| b.willmore_ctrl_factor);
    let en_threshold = bounds.and_then(|b| b.en_threshold);
    let max_w = records.records.iter().map(|r| r.willmore).fold(f64::NEG_INFINITY, f64::max);
    let summary = FlowSummary {
        config: &cfg,
        termination: &report,
        final_surface: surface_info(&traj.final_state.mesh, &params)?,
        theory_bounds: bounds,
        theory_bounds_error: bounds_error,
        thresholds: ThresholdComparison {
            e0,
            en_threshold,
            e0_below_threshold: en_threshold.map(|th| e0 < th),
            final_time: report.final_time,
            t_bound,
            final_time_below_t_bound: t_bound.map(|tb| report.final_time < tb),
            willmore_ctrl_factor: factor,
            willmore_ctrl_margin: factor.map(|f| max_w - f * e0),
        },
        energy_monotonicity: EnergyMonotonicity {
            worst_step_increase_over_e0: energy.worst_step_increase,
            accepted_steps: energy.accepted_steps,
            remesh_jumps_over_e0: energy.remesh_jumps.clone(),
        },
        sphere_reference: SphereReference {
            initial_mean_radius: initial.mean_radius,
            r_star: equilibrium_radius(&params),
            closed_form_extinction_time: extinction_time_closed_form(initial.mean_radius, &params),
        },
        initial,
        classification,
        classification_error,
        frames_written,
        monitors: hypothesis_monitors(&traj.final_state, &params),
        checkpoints: checkpoints.written.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if !g.quiet {
        println!(
            "{}: t = {:.6e}, {} accepted / {} rejected steps, final mean radius {:.6}",
            report.reason.as_str(),
            report.final_time,
            report.accepted_steps,
            report.rejected_steps,
            summary.final_surface.mean_radius
        );
        if let Some(c) = &summary.classification {
            println!("classification: {:?}", c.verdict);
        }
        println!("outputs in {}", out.display());
    }
    match report.reason {
        r if r.is_singular() => Ok(Outcome::Singular),
        TerminationReason::DtCollapse => Err(fail(
            Failure::Solver,
            anyhow::anyhow!("time step collapsed below the stability floor without a curvature blow-up"),
        )),
        _ => Ok(Outcome::Clean),
    }
}

fn ode(g: &GlobalArgs, args: &ParamArgs, r0: f64, horizon: f64, rtol: f64) -> Result<Outcome> {
    let params = resolve_params(g, args, None)?;
    if !(rtol > 0.0 && horizon > 0.0) {
        return Err(fail(Failure::Config, anyhow::anyhow!("rtol and horizon must be positive")));
    }
    let sol = integrate_sphere_ode(r0, &params, horizon, rtol).map_err(|e| fail(Failure::Config, e))?;
    let e0 = sphere_energy(r0, &params);
    let bounds = theory_bounds(&params, Some(e0));
    let summary = json!({
        "params": params,
        "r0": r0,
        "horizon": horizon,
        "rtol": rtol,
        "terminal": sol.terminal,
        "final_time": sol.times.last(),
        "final_radius": sol.radii.last(),
        "extinction_time": match sol.terminal { OdeTerminal::Extinct { time } => Some(time), _ => None },
        "closed_form_extinction_time": extinction_time_closed_form(r0, &params),
        "r_star": equilibrium_radius(&params),
        "initial_energy": e0,
        "t_bound": bounds.as_ref().ok().and_then(|b| b.t_bound),
        "theory_bounds": bounds.as_ref().ok(),
        "theory_bounds_error": bounds.as_ref().err().map(|e| e.to_string()),
    });
    if let Some(out) = &g.out {
        ensure_dir(out)?;
        let mut csv = String::from("t,r\n");
        for (t, r) in sol.times.iter().zip(&sol.radii) {
            csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*r)));
        }
        fs::write(out.join("ode.csv"), csv).context("writing ode.csv").context(Failure::Io)?;
        write_json(&out.join("summary.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).context(Failure::Io)?);
    Ok(Outcome::Clean)
}

fn energy(g: &GlobalArgs, mesh_arg: &str, args: &ParamArgs) -> Result<Outcome> {
    let params = resolve_params(g, args, Some((0.0, 0.0)))?;
    let mesh = mesh_from_arg(mesh_arg)?;
    let c = build_cache(&mesh).map_err(|e| fail(Failure::MeshInvalid, e))?;
    let genus = mesh.genus();
    let chi = mesh.euler_characteristic();
    let two_pi_chi = 2.0 * std::f64::consts::PI * chi as f64;
    let angle_defect_total: f64 = c.angle_defect.iter().sum();
    let bounds = theory_bounds(&params, Some(c.penalized(&params)));
    let report = json!({
        "mesh": mesh_arg,
        "params": params,
        "vertices": mesh.n_vertices(),
        "faces": mesh.n_faces(),
        "euler_characteristic": chi,
        "genus": genus,
        "area": c.area,
        "volume": c.volume,
        "willmore": c.willmore,
        "w0": c.w0,
        "asq_integral": c.asq_integral,
        "helfrich": c.helfrich(&params),
        "penalized": c.penalized(&params),
        "mean_curvature_integral": mean_curvature_integral(&c),
        "max_asq": c.max_asq,
        "clamp_mass": c.clamp_mass,
        "gauss_bonnet": {
            "angle_defect_total": angle_defect_total,
            "total_gauss_curvature": c.total_gauss_curvature(),
            "two_pi_chi": two_pi_chi,
            "residual": c.total_gauss_curvature() - two_pi_chi,
            "willmore_identity_residual": gauss_bonnet_residual(&c, genus),
        },
        "willmore_bound_residual": willmore_bound_residual(&c, &params).ok(),
        "theory_bounds": bounds.as_ref().ok(),
        "theory_bounds_error": bounds.as_ref().err().map(|e| e.to_string()),
    });
    if let Some(out) = &g.out {
        ensure_dir(out)?;
        write_json(&out.join("energy.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).context(Failure::Io)?);
    Ok(Outcome::Clean)
}

fn rescale(g: &GlobalArgs, mesh_arg: &str, r: f64, x: &[f64], args: &ParamArgs) -> Result<Outcome> {
    let params = resolve_params(g, args, None)?;
    let mesh = mesh_from_arg(mesh_arg)?;
    let center = [x[0], x[1], x[2]];
    let frame = rescale_frame(&mesh, &params, 0.0, r, center).map_err(|e| match e {
        DiagError::InvalidRadius(_) => fail(Failure::Config, e),
        DiagError::EnergyIdentity { .. } => fail(Failure::ValidationFailed, e),
        other => fail(Failure::MeshInvalid, other),
    })?;
    let rescaled_energy = build_cache(&frame.mesh).map_err(|e| fail(Failure::MeshInvalid, e))?.penalized(&frame.params);
    let report = json!({
        "r": r,
        "center": center,
        "params": params,
        "rescaled_params": frame.params,
        "energy": frame.energy,
        "rescaled_energy": rescaled_energy,
        "relative_difference": (rescaled_energy - frame.energy).abs() / frame.energy.abs().max(f64::MIN_POSITIVE),
        "identity_holds": true,
    });
    if let Some(out) = &g.out {
        ensure_dir(out)?;
        save_mesh(&frame.mesh, &out.join("rescaled.off")).map_err(|e| fail(Failure::Io, e))?;
        write_json(&out.join("rescale.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).context(Failure::Io)?);
    Ok(Outcome::Clean)
}

fn validate(g: &GlobalArgs, names: &[String], fast: bool, seed: Option<u64>) -> Result<Outcome> {
    let mut suites = Vec::new();
    for name in names {
        if name == "all" {
            suites.extend(Suite::ALL);
        } else {
            suites.push(name.parse::<Suite>().map_err(|e| fail(Failure::Config, e))?);
        }
    }
    let opts = SuiteOptions { fast, seed: seed.unwrap_or(SuiteOptions::default().seed) };
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_suite(suite, &opts).map_err(|e| fail(Failure::Solver, e))?;
        for c in &report.checks {
            if !g.quiet || !c.passed {
                let value = if c.value.is_nan() { String::new() } else { format!(" {:.3e} <= {:.1e}", c.value, c.tolerance) };
                let detail = if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) };
                println!("{} {}/{}{value}{detail}", if c.passed { "PASS" } else { "FAIL" }, suite.as_str(), c.name);
            }
        }
        reports.push(report);
    }
    if let Some(out) = &g.out {
        ensure_dir(out)?;
        write_json(&out.join("validate.json"), &reports)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Err(fail(Failure::ValidationFailed, anyhow::anyhow!("failing suites: {}", failed.join(", "))))
    }
}
