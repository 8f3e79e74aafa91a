//! First variations: the continuum formulas evaluated on the mesh, central
//! finite differences, and exact derivatives of the discrete energies
//! obtained with dual numbers.

use rayon::prelude::*;

use super::{build_cache, face_terms, helfrich_gradient, FlowParams, GeomError, GeometryCache, Unit, VertexField};
use crate::dual::{Dual, Dual64};
use crate::mesh::{Topology, TriangleMesh};
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    Area,
    Volume,
    Helfrich,
    Penalized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    /// Absolute displacement scale ε of the perturbation f ± εφν.
    pub step: f64,
}

impl VariationCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.analytic - self.finite_difference).abs()
    }
}

pub fn functional_value<T: Real>(
    mesh: &TriangleMesh<T>,
    cache: &GeometryCache<T>,
    params: &FlowParams,
    functional: Functional,
) -> T {
    match functional {
        Functional::Area => cache.area,
        Functional::Volume => mesh.signed_volume(),
        Functional::Helfrich => cache.helfrich(params),
        Functional::Penalized => cache.penalized(params),
    }
}

/// Continuum first variation in direction φν, evaluated with the discrete
/// curvatures: area −∫Hφ, volume −∫φ, Helfrich ∫∇H_{c0}φ, penalized adds
/// −½λ∫Hφ.
pub fn analytic_variation(cache: &GeometryCache<f64>, params: &FlowParams, phi: &[f64], functional: Functional) -> f64 {
    let h = &cache.mean_curvature;
    let integrand: Vec<f64> = match functional {
        Functional::Area => (0..phi.len()).map(|i| -h[i] * phi[i]).collect(),
        Functional::Volume => phi.iter().map(|p| -p).collect(),
        Functional::Helfrich => helfrich_gradient(cache, params).iter().zip(phi).map(|(g, p)| g * p).collect(),
        Functional::Penalized => helfrich_gradient(cache, params)
            .iter()
            .zip(phi)
            .zip(h)
            .map(|((g, p), h)| (g - 0.5 * params.lambda * h) * p)
            .collect(),
    };
    cache.integrate(&integrand)
}

fn check_direction(mesh: &TriangleMesh<f64>, phi: &[f64]) -> Result<(), GeomError> {
    if phi.len() != mesh.n_vertices() {
        return Err(GeomError::FieldLength { expected: mesh.n_vertices(), got: phi.len() });
    }
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(GeomError::NonFiniteDirection);
    }
    Ok(())
}

fn displaced(mesh: &TriangleMesh<f64>, normal: &[Vec3<f64>], phi: &[f64], eps: f64) -> TriangleMesh<f64> {
    let verts = mesh.vertices().iter().zip(normal).zip(phi).map(|((&v, &n), &p)| v + n * (eps * p)).collect();
    mesh.with_positions(verts)
}

/// Compares the analytic first variation with a central difference of the
/// discrete functional along f + εφν. `step` defaults to 1e−5 of the
/// bounding-box diagonal.
pub fn first_variation_check(
    mesh: &TriangleMesh<f64>,
    params: &FlowParams,
    phi: &[f64],
    functional: Functional,
    step: Option<f64>,
) -> Result<VariationCheck, GeomError> {
    check_direction(mesh, phi)?;
    let scale = mesh.bbox_diagonal();
    let step = step.unwrap_or(1e-5 * scale);
    if !(step > 1e-13 * scale) {
        return Err(GeomError::FdStepUnderflow { step, scale });
    }
    let cache = build_cache(mesh)?;
    let value = |eps: f64| -> Result<f64, GeomError> {
        let m = displaced(mesh, &cache.normal, phi, eps);
        let c = build_cache(&m)?;
        Ok(functional_value(&m, &c, params, functional))
    };
    let finite_difference = (value(step)? - value(-step)?) / (2.0 * step);
    Ok(VariationCheck { analytic: analytic_variation(&cache, params, phi, functional), finite_difference, step })
}

/// d/dε of the discrete functional at ε = 0 along f + εφν, exact up to
/// rounding (forward-mode dual arithmetic through the whole assembly).
pub fn exact_directional_derivative(
    mesh: &TriangleMesh<f64>,
    params: &FlowParams,
    phi: &[f64],
    functional: Functional,
) -> Result<f64, GeomError> {
    check_direction(mesh, phi)?;
    let cache = build_cache(mesh)?;
    let verts = mesh
        .vertices()
        .iter()
        .zip(&cache.normal)
        .zip(phi)
        .map(|((v, n), &p)| {
            Vec3::new(Dual::new(v.x, n.x * p), Dual::new(v.y, n.y * p), Dual::new(v.z, n.z * p))
        })
        .collect();
    let dm: TriangleMesh<Dual64> = mesh.cast::<Dual64>().with_positions(verts);
    let dc = build_cache(&dm)?;
    Ok(functional_value(&dm, &dc, params, functional).eps)
}

/// Contribution of vertex `j` to H_{c0,λ}: ¼(H_j − c0)²a_j + ½λa_j, from its
/// one-ring alone.
fn local_energy<T: Real>(
    faces: &[[usize; 3]],
    topo: &Topology,
    j: usize,
    pos: &impl Fn(usize) -> Vec3<T>,
    params: &FlowParams,
) -> Option<T> {
    let half = T::cst(0.5);
    let mut a = T::zero();
    let mut lap = Vec3::zero();
    let mut nsum = Vec3::zero();
    for &f in topo.vertex_faces(j) {
        let face = faces[f];
        let k0 = face.iter().position(|&v| v == j)?;
        let (k1, k2) = ((k0 + 1) % 3, (k0 + 2) % 3);
        let p = face.map(pos);
        let t = face_terms(p)?;
        a += t.mixed[k0];
        nsum += t.cross;
        lap += (p[k1] - p[k0]) * (half * t.cot[k2]) + (p[k2] - p[k0]) * (half * t.cot[k1]);
    }
    let h = lap.dot(nsum.normalized()) / a;
    let dh = h - T::cst(params.c0);
    Some(T::cst(0.25) * dh * dh * a + T::cst(0.5 * params.lambda) * a)
}

/// ∂H_{c0,λ}/∂p_i for every vertex: the exact gradient of the discrete
/// penalized energy with respect to vertex positions.
pub fn discrete_energy_gradient(mesh: &TriangleMesh<f64>, params: &FlowParams) -> Result<Vec<Vec3<f64>>, GeomError> {
    let topo = mesh.topology();
    let faces = mesh.faces();
    let verts = mesh.vertices();
    (0..mesh.n_vertices())
        .into_par_iter()
        .map(|i| {
            let mut grad = [0.0; 3];
            for (d, g) in grad.iter_mut().enumerate() {
                let pos = |v: usize| {
                    let p = verts[v];
                    let mut q = Vec3::new(Dual::constant(p.x), Dual::constant(p.y), Dual::constant(p.z));
                    if v == i {
                        match d {
                            0 => q.x.eps = 1.0,
                            1 => q.y.eps = 1.0,
                            _ => q.z.eps = 1.0,
                        }
                    }
                    q
                };
                let mut sum = 0.0;
                for j in std::iter::once(i).chain(topo.neighbors(i).iter().copied()) {
                    let e = local_energy(faces, &topo, j, &pos, params).ok_or_else(|| {
                        GeomError::DegenerateFace { face: topo.vertex_faces(j)[0] }
                    })?;
                    sum += e.eps;
                }
                *g = sum;
            }
            Ok(Vec3::new(grad[0], grad[1], grad[2]))
        })
        .collect()
}

/// Normal speed from the exact discrete gradient: ξ_i = −2⟨∂E/∂p_i, ν_i⟩/a_i.
pub fn exact_flow_velocity(
    mesh: &TriangleMesh<f64>,
    cache: &GeometryCache<f64>,
    params: &FlowParams,
) -> Result<VertexField<f64>, GeomError> {
    let grad = discrete_energy_gradient(mesh, params)?;
    let values = (0..mesh.n_vertices()).map(|i| -2.0 * grad[i].dot(cache.normal[i]) / cache.vertex_area[i]).collect();
    Ok(VertexField::new(values, Unit::InverseLengthCubed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;
    use std::f64::consts::PI;

    fn bumpy(level: u32) -> TriangleMesh<f64> {
        let m = make_icosphere::<f64>(level, 1.0, Vec3::zero()).unwrap();
        m.with_positions(m.vertices().iter().map(|v| *v * (1.0 + 0.04 * (2.0 * v.x + v.z).cos())).collect())
    }

    #[test]
    fn sphere_examples() {
        let m = make_icosphere::<f64>(4, 1.0, Vec3::zero()).unwrap();
        let one = vec![1.0; m.n_vertices()];
        let p = FlowParams::new(2.0, 0.0).unwrap();
        let vol = first_variation_check(&m, &p, &one, Functional::Volume, None).unwrap();
        assert!((vol.analytic + 4.0 * PI).abs() < 0.02 * 4.0 * PI);
        assert!(vol.discrepancy() / vol.analytic.abs() < 1e-3, "{vol:?}");
        let area = first_variation_check(&m, &p, &one, Functional::Area, None).unwrap();
        assert!((area.analytic + 8.0 * PI).abs() < 0.02 * 8.0 * PI);
        let hel = first_variation_check(&m, &p, &one, Functional::Helfrich, None).unwrap();
        assert!(hel.analytic.abs() < 0.05, "{hel:?}");
    }

    #[test]
    fn area_variation_is_exact_for_the_discrete_area() {
        let m = bumpy(3);
        let phi: Vec<f64> = m.vertices().iter().map(|v| v.y + 0.3 * v.x * v.z).collect();
        let p = FlowParams::new(0.0, 0.0).unwrap();
        let exact = exact_directional_derivative(&m, &p, &phi, Functional::Area).unwrap();
        let c = build_cache(&m).unwrap();
        let analytic = analytic_variation(&c, &p, &phi, Functional::Area);
        assert!((exact - analytic).abs() < 1e-10 * analytic.abs().max(1.0), "{exact} vs {analytic}");
    }

    #[test]
    fn finite_differences_approach_dual_derivative_quadratically() {
        let m = bumpy(3);
        let phi: Vec<f64> = m.vertices().iter().map(|v| 1.0 + (v.x * 2.0).sin() + v.z).collect();
        let p = FlowParams::new(-1.0, 0.4).unwrap();
        for functional in [Functional::Volume, Functional::Penalized] {
            let exact = exact_directional_derivative(&m, &p, &phi, functional).unwrap();
            let e1 = (first_variation_check(&m, &p, &phi, functional, Some(1e-2)).unwrap().finite_difference - exact).abs();
            let e2 = (first_variation_check(&m, &p, &phi, functional, Some(1e-3)).unwrap().finite_difference - exact).abs();
            // The volume is cubic in the step, so its error may already sit at rounding level.
            assert!(e2 < e1 / 50.0 || e2 < 1e-12 * exact.abs(), "{functional:?}: {e1:e} -> {e2:e}");
        }
    }

    #[test]
    fn local_gradient_matches_global_directional_derivative() {
        let m = bumpy(2);
        let p = FlowParams::new(0.8, 0.3).unwrap();
        let phi: Vec<f64> = m.vertices().iter().map(|v| 1.0 + v.x * v.y).collect();
        let c = build_cache(&m).unwrap();
        let grad = discrete_energy_gradient(&m, &p).unwrap();
        let via_grad: f64 = (0..m.n_vertices()).map(|i| phi[i] * grad[i].dot(c.normal[i])).sum();
        let exact = exact_directional_derivative(&m, &p, &phi, Functional::Penalized).unwrap();
        assert!((via_grad - exact).abs() < 1e-9 * exact.abs().max(1.0), "{via_grad} vs {exact}");
    }

    #[test]
    fn rejects_bad_directions() {
        let m = make_icosphere::<f64>(1, 1.0, Vec3::zero()).unwrap();
        let p = FlowParams::new(0.0, 0.0).unwrap();
        assert!(first_variation_check(&m, &p, &[1.0], Functional::Area, None).is_err());
        let one = vec![1.0; m.n_vertices()];
        assert!(matches!(
            first_variation_check(&m, &p, &one, Functional::Area, Some(1e-20)),
            Err(GeomError::FdStepUnderflow { .. })
        ));
    }
}
