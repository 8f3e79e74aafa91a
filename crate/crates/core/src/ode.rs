//! Round-sphere reference solutions.
//!
//! A sphere of radius r moves under the (c0, λ)-flow by
//! r′ = (c0/r)(2/r − c0) − 2λ/r = −(κr − 2c0)/r² with κ = c0² + 2λ.
//! For c0 < 0 it shrinks to a point in finite time; for c0 > 0 it tends to
//! r* = 2c0/κ.

use serde::Serialize;
use thiserror::Error;

use crate::geom::FlowParams;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("initial energy {e0} does not exceed 4π, which a c0 < 0 embedded sphere requires")]
    EnergyBelowFourPi { e0: f64 },
}

pub fn sphere_ode_rhs(r: f64, params: &FlowParams) -> Result<f64, OdeError> {
    if !(r > 0.0) {
        return Err(OdeError::NonPositiveRadius(r));
    }
    Ok(rhs(r, params))
}

#[inline]
fn rhs(r: f64, p: &FlowParams) -> f64 {
    (p.c0 / r) * (2.0 / r - p.c0) - 2.0 * p.lambda / r
}

/// H_{c0,λ} of the round sphere of radius r: π(2 − c0r)² + 2πλr².
pub fn sphere_energy(r: f64, params: &FlowParams) -> f64 {
    let pi = std::f64::consts::PI;
    pi * (2.0 - params.c0 * r).powi(2) + 2.0 * pi * params.lambda * r * r
}

/// Attracting radius 2c0/(c0² + 2λ), defined for c0 > 0.
pub fn equilibrium_radius(params: &FlowParams) -> Option<f64> {
    (params.c0 > 0.0).then(|| 2.0 * params.c0 / params.kappa())
}

/// u²/2 − u + ln(1 + u) = ∫₀ᵘ s²/(1 + s) ds.
fn g(u: f64) -> f64 {
    if u < 0.05 {
        // Alternating tail Σ_{n≥3} (−1)^{n+1} uⁿ/n; the leading terms cancel in closed form.
        let mut sum = 0.0;
        let mut pow = u * u * u;
        for n in 3..40 {
            let term = pow / n as f64;
            sum += if n % 2 == 1 { term } else { -term };
            pow *= u;
        }
        sum
    } else {
        0.5 * u * u - u + u.ln_1p()
    }
}

/// Time for a sphere of radius r0 to shrink to a point, or `None` when it
/// never does (c0 > 0, or c0 = λ = 0).
pub fn extinction_time_closed_form(r0: f64, params: &FlowParams) -> Option<f64> {
    if !(r0 > 0.0) {
        return None;
    }
    let kappa = params.kappa();
    if params.c0 > 0.0 || kappa <= 0.0 {
        return None;
    }
    if params.c0 == 0.0 {
        return Some(r0 * r0 / (2.0 * kappa));
    }
    let a = -2.0 * params.c0;
    let u = kappa * r0 / a;
    Some(a * a / (kappa * kappa * kappa) * g(u))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OdeTerminal {
    EquilibriumReached { r_star: f64, time: f64 },
    Extinct { time: f64 },
    Horizon,
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereOdeSolution {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub terminal: OdeTerminal,
}

/// Dormand–Prince 5(4) tableau (the ODE is autonomous, so the nodes are unused).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One step of size h: (fifth-order value, error estimate). `None` if a
/// stage leaves r > 0.
fn dopri_step(r: f64, h: f64, p: &FlowParams) -> Option<(f64, f64)> {
    let mut k = [0.0; 7];
    for s in 0..7 {
        let y = r + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
        if !(y > 0.0) {
            return None;
        }
        k[s] = rhs(y, p);
    }
    let y5 = r + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
    let y4 = r + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
    Some((y5, (y5 - y4).abs()))
}

/// Adaptive integration of the sphere ODE from r0 up to `horizon`, stopping
/// early at extinction or on reaching |r − r*| < rtol·r*.
///
/// Below 1e−3·r0 the remaining time to extinction is taken from the
/// closed-form antiderivative.
pub fn integrate_sphere_ode(r0: f64, params: &FlowParams, horizon: f64, rtol: f64) -> Result<SphereOdeSolution, OdeError> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(OdeError::NonPositiveRadius(r0));
    }
    if !(horizon >= 0.0) || !(rtol > 0.0 && rtol < 1e-2) {
        return Err(OdeError::Invalid(format!("horizon {horizon}, rtol {rtol}")));
    }
    let r_star = equilibrium_radius(params);
    let at_equilibrium = |r: f64| r_star.is_some_and(|rs| (r - rs).abs() < rtol * rs);
    let mut times = vec![0.0];
    let mut radii = vec![r0];
    if at_equilibrium(r0) {
        return Ok(SphereOdeSolution {
            times,
            radii,
            terminal: OdeTerminal::EquilibriumReached { r_star: r_star.unwrap(), time: 0.0 },
        });
    }
    let r0_rate = rhs(r0, params);
    if r0_rate == 0.0 {
        return Ok(SphereOdeSolution { times, radii, terminal: OdeTerminal::Horizon });
    }
    let switch = 1e-3 * r0;
    let (mut t, mut r) = (0.0, r0);
    let mut h = (1e-3 * r0 / r0_rate.abs()).min(horizon.max(f64::MIN_POSITIVE));
    while t < horizon {
        h = h.min(horizon - t);
        let Some((y, err)) = dopri_step(r, h, params) else {
            h *= 0.25;
            continue;
        };
        let scale = rtol * r.max(y.abs());
        let ratio = err / scale;
        if ratio > 1.0 {
            h *= (0.9 * ratio.powf(-0.2)).max(0.2);
            continue;
        }
        if y < switch {
            // Localize r = switch by bisection on the step length.
            let (mut lo, mut hi) = (0.0, h);
            let mut r_sw = r;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                match dopri_step(r, mid, params) {
                    Some((ym, _)) if ym >= switch => {
                        lo = mid;
                        r_sw = ym;
                    }
                    _ => hi = mid,
                }
                if hi - lo <= 1e-15 * (t + hi) {
                    break;
                }
            }
            let t_sw = t + lo;
            let tail = extinction_time_closed_form(r_sw, params).expect("shrinking phase has an extinction time");
            times.push(t_sw);
            radii.push(r_sw);
            let time = t_sw + tail;
            if time <= horizon {
                times.push(time);
                radii.push(0.0);
                return Ok(SphereOdeSolution { times, radii, terminal: OdeTerminal::Extinct { time } });
            }
            return Ok(SphereOdeSolution { times, radii, terminal: OdeTerminal::Horizon });
        }
        t += h;
        r = y;
        times.push(t);
        radii.push(r);
        if at_equilibrium(r) {
            return Ok(SphereOdeSolution {
                times,
                radii,
                terminal: OdeTerminal::EquilibriumReached { r_star: r_star.unwrap(), time: t },
            });
        }
        h *= (0.9 * ratio.max(1e-10).powf(-0.2)).min(5.0);
    }
    Ok(SphereOdeSolution { times, radii, terminal: OdeTerminal::Horizon })
}

/// Radius of the sphere solution at each requested (sorted) time; zero
/// after extinction.
pub fn sphere_radius_at(r0: f64, params: &FlowParams, times: &[f64], rtol: f64) -> Result<Vec<f64>, OdeError> {
    if !(r0 > 0.0) {
        return Err(OdeError::NonPositiveRadius(r0));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::Invalid("output times must be sorted".into()));
    }
    let extinction = extinction_time_closed_form(r0, params);
    let r_star = equilibrium_radius(params);
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut r) = (0.0, r0);
    let mut h = (1e-3 * r0 / rhs(r0, params).abs().max(1e-300)).max(1e-300);
    for &target in times {
        if extinction.is_some_and(|te| target >= te) || r == 0.0 {
            r = 0.0;
            out.push(0.0);
            continue;
        }
        while t < target {
            if rhs(r, params) == 0.0 || r_star.is_some_and(|rs| (r - rs).abs() <= 1e-15 * rs) {
                t = target;
                break;
            }
            let step = h.min(target - t);
            match dopri_step(r, step, params) {
                Some((y, err)) if err <= rtol * r.max(y.abs()) => {
                    t += step;
                    r = y;
                    let ratio = err / (rtol * r.max(y.abs()));
                    if step == h {
                        h *= (0.9 * ratio.max(1e-10).powf(-0.2)).min(5.0);
                    }
                }
                Some((_, err)) => h = step * (0.9 * (err / (rtol * r)).powf(-0.2)).max(0.2),
                None => h = step * 0.25,
            }
            if h < 1e-300 {
                return Err(OdeError::Invalid("step size underflow near extinction".into()));
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Explicit constants derived from the energy bounds; fields that are not
/// defined for the given parameters are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TheoryBounds {
    pub r_star: Option<f64>,
    /// Upper bound on the extinction time for c0 < 0:
    /// 4(E0² − (4π)²)/(π²(2λ + c0²)²).
    pub t_bound: Option<f64>,
    /// Energy threshold 2λ/(c0² + 2λ)·8π below which the flow exists for all time.
    pub en_threshold: Option<f64>,
    pub beta_upper: Option<f64>,
    /// (2λ + c0²)/(2λ), the factor in W ≤ factor·H_{c0,λ}.
    pub willmore_ctrl_factor: Option<f64>,
}

pub fn theory_bounds(params: &FlowParams, e0: Option<f64>) -> Result<TheoryBounds, OdeError> {
    let pi = std::f64::consts::PI;
    let kappa = params.kappa();
    let mut b = TheoryBounds { r_star: equilibrium_radius(params), ..Default::default() };
    if kappa > 0.0 {
        b.en_threshold = Some(2.0 * params.lambda / kappa * 8.0 * pi);
        b.beta_upper = Some(2.0 * params.lambda / kappa * 4.0 * pi);
    }
    if params.lambda > 0.0 {
        b.willmore_ctrl_factor = Some(kappa / (2.0 * params.lambda));
    }
    if params.c0 < 0.0 {
        if let Some(e0) = e0 {
            if e0 <= 4.0 * pi {
                return Err(OdeError::EnergyBelowFourPi { e0 });
            }
            b.t_bound = Some(4.0 * (e0 * e0 - 16.0 * pi * pi) / (pi * pi * kappa * kappa));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(c0: f64, lambda: f64) -> FlowParams {
        FlowParams::new(c0, lambda).unwrap()
    }

    /// Independent oracle: composite Simpson on ∫₀^{r0} r²/(κr − 2c0) dr.
    fn simpson_extinction(r0: f64, params: &FlowParams) -> f64 {
        let n = 20_000;
        let h = r0 / n as f64;
        let f = |r: f64| r * r / (params.kappa() * r - 2.0 * params.c0);
        let mut s = f(0.0) + f(r0);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(sphere_ode_rhs(1.0, &p(2.0, 0.0)).unwrap(), 0.0);
        assert_eq!(sphere_ode_rhs(1.0, &p(-1.0, 0.0)).unwrap(), -3.0);
        assert_eq!(sphere_ode_rhs(1.0, &p(1.0, 0.5)).unwrap(), 0.0);
        assert!(sphere_ode_rhs(0.0, &p(1.0, 0.0)).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let t1 = extinction_time_closed_form(1.0, &p(-1.0, 0.0)).unwrap();
        assert!((t1 - (-1.5 + 4.0 * 1.5f64.ln())).abs() < 1e-15);
        assert!((t1 - 0.121860).abs() < 1e-6);
        let t2 = extinction_time_closed_form(1.0, &p(-2.0, 0.0)).unwrap();
        assert!((t2 - 0.25 * (-0.5 + 2f64.ln())).abs() < 1e-15);
        assert!(extinction_time_closed_form(1.0, &p(1.0, 0.5)).is_none());
        assert!(extinction_time_closed_form(1.0, &p(0.0, 0.0)).is_none());
        assert!((extinction_time_closed_form(2.0, &p(0.0, 0.5)).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for (r0, c0, lambda) in [(1.0, -1.0, 0.0), (0.3, -2.5, 1.7), (2.9, -0.1, 0.01), (1.0, -0.1, 2.0)] {
            let pp = p(c0, lambda);
            let a = extinction_time_closed_form(r0, &pp).unwrap();
            let b = simpson_extinction(r0, &pp);
            assert!((a - b).abs() < 1e-10 * b, "({r0}, {c0}, {lambda}): {a} vs {b}");
        }
    }

    #[test]
    fn small_u_series_is_continuous() {
        let u = 0.05 * (1.0 - 1e-12);
        let closed = 0.5 * u * u - u + f64::ln_1p(u);
        assert!((g(u) - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn integrator_examples() {
        let s = integrate_sphere_ode(1.0, &p(-1.0, 0.0), 1.0, 1e-10).unwrap();
        let OdeTerminal::Extinct { time } = s.terminal else { panic!("{:?}", s.terminal) };
        assert!((time - 0.121860).abs() < 1e-6);
        let s = integrate_sphere_ode(1.5, &p(1.0, 0.5), 100.0, 1e-10).unwrap();
        assert!(matches!(s.terminal, OdeTerminal::EquilibriumReached { r_star, .. } if r_star == 1.0));
        assert!(s.radii.windows(2).all(|w| w[1] <= w[0]));
        let s = integrate_sphere_ode(1.0, &p(2.0, 0.0), 1.0, 1e-10).unwrap();
        assert!(matches!(s.terminal, OdeTerminal::EquilibriumReached { .. }));
        let s = integrate_sphere_ode(1.0, &p(0.0, 0.0), 1.0, 1e-10).unwrap();
        assert_eq!(s.terminal, OdeTerminal::Horizon);
    }

    #[test]
    fn energy_examples_and_critical_radius() {
        assert!((sphere_energy(1.0, &p(1.0, 0.5)) - 2.0 * PI).abs() < 1e-14);
        assert_eq!(sphere_energy(1.0, &p(2.0, 0.0)), 0.0);
        assert!((sphere_energy(1.0, &p(-1.0, 0.0)) - 9.0 * PI).abs() < 1e-13);
        for c0 in [0.2, 1.0, 3.0] {
            for lambda in [0.1, 0.5, 2.0] {
                let pp = p(c0, lambda);
                let rs = equilibrium_radius(&pp).unwrap();
                let e = sphere_energy(rs, &pp);
                let expect = 2.0 * lambda / pp.kappa() * 4.0 * PI;
                assert!((e - expect).abs() < 1e-10 * expect);
                let d = 1e-6 * rs;
                let slope = (sphere_energy(rs + d, &pp) - sphere_energy(rs - d, &pp)) / (2.0 * d);
                assert!(slope.abs() < 1e-7 * expect / rs);
            }
        }
    }

    #[test]
    fn bounds_examples() {
        let b = theory_bounds(&p(-1.0, 0.0), Some(9.0 * PI)).unwrap();
        assert!((b.t_bound.unwrap() - 260.0).abs() < 1e-10);
        assert!(b.willmore_ctrl_factor.is_none());
        let b = theory_bounds(&p(1.0, 0.5), None).unwrap();
        assert!((b.en_threshold.unwrap() - 4.0 * PI).abs() < 1e-14);
        assert!((b.beta_upper.unwrap() - 2.0 * PI).abs() < 1e-14);
        assert_eq!(b.willmore_ctrl_factor, Some(2.0));
        assert_eq!(b.r_star, Some(1.0));
        let b = theory_bounds(&p(1.0, 0.0), Some(50.0)).unwrap();
        assert_eq!(b.en_threshold, Some(0.0));
        assert!(theory_bounds(&p(-1.0, 0.0), Some(4.0 * PI)).is_err());
    }

    #[test]
    fn dense_radius_matches_events() {
        let pp = p(-1.0, 0.0);
        let te = extinction_time_closed_form(1.0, &pp).unwrap();
        let r = sphere_radius_at(1.0, &pp, &[0.0, 0.05, 0.1, te + 1e-9], 1e-10).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[1] > r[2] && r[2] > 0.0);
        assert_eq!(r[3], 0.0);
        // Remaining extinction time from r(0.1) must close the budget.
        let rest = extinction_time_closed_form(r[2], &pp).unwrap();
        assert!((0.1 + rest - te).abs() < 1e-9);
    }
}
