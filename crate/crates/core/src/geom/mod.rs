//! Discrete curvature, energies and the flow velocity.
//!
//! Conventions: ν is the area-weighted vertex normal of the mesh winding
//! (inward on positively oriented spheres), `H_i = ⟨(Δf)_i, ν_i⟩` with the
//! cotan Laplace–Beltrami operator and mixed Voronoi areas, so H = 2/r > 0
//! on a sphere of radius r. K is the angle defect per unit vertex area.

mod laplacian;
mod variation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshError, TriangleMesh};
use crate::scalar::{compensated_sum, Real};
use crate::vec3::Vec3;

pub use laplacian::CotanLaplacian;
pub use variation::{
    analytic_variation, discrete_energy_gradient, exact_directional_derivative, exact_flow_velocity,
    first_variation_check, functional_value, Functional, VariationCheck,
};

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("cotangent weight overflow: face {face} is degenerate")]
    DegenerateFace { face: usize },
    #[error("non-finite {quantity} at vertex {vertex}")]
    NonFinite { quantity: &'static str, vertex: usize },
    #[error("lambda = {0} is negative; construct with FlowParams::allowing_negative_lambda to override")]
    NegativeLambda(f64),
    #[error("parameters must be finite (c0 = {c0}, lambda = {lambda})")]
    NonFiniteParams { c0: f64, lambda: f64 },
    #[error("the Willmore bound needs lambda > 0, got {0}")]
    LambdaNotPositive(f64),
    #[error("direction field has {got} entries for {expected} vertices")]
    FieldLength { expected: usize, got: usize },
    #[error("direction field is not finite")]
    NonFiniteDirection,
    #[error("finite-difference step {step:e} underflows the mesh scale {scale:e}")]
    FdStepUnderflow { step: f64, scale: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Spontaneous curvature `c0` (1/length) and area penalty `lambda`
/// (1/length²) of H_{c0,λ} = ¼∫(H − c0)²dμ + ½λA.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub c0: f64,
    pub lambda: f64,
}

impl FlowParams {
    pub fn new(c0: f64, lambda: f64) -> Result<Self, GeomError> {
        let p = Self::allowing_negative_lambda(c0, lambda)?;
        if lambda < 0.0 {
            return Err(GeomError::NegativeLambda(lambda));
        }
        Ok(p)
    }

    /// Skips the λ ≥ 0 check; finiteness is still enforced.
    pub fn allowing_negative_lambda(c0: f64, lambda: f64) -> Result<Self, GeomError> {
        if !(c0.is_finite() && lambda.is_finite()) {
            return Err(GeomError::NonFiniteParams { c0, lambda });
        }
        Ok(Self { c0, lambda })
    }

    /// Parameters of the flow rescaled by `f ↦ f / r`: (r·c0, r²·λ).
    pub fn rescaled(&self, r: f64) -> Self {
        Self { c0: r * self.c0, lambda: r * r * self.lambda }
    }

    /// c0² + 2λ.
    pub fn kappa(&self) -> f64 {
        self.c0 * self.c0 + 2.0 * self.lambda
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Unit {
    Dimensionless,
    Length,
    LengthSquared,
    InverseLength,
    InverseLengthSquared,
    InverseLengthCubed,
}

/// One value per vertex with its physical unit.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexField<T> {
    pub values: Vec<T>,
    pub unit: Unit,
}

impl<T: Real> VertexField<T> {
    pub fn new(values: Vec<T>, unit: Unit) -> Self {
        Self { values, unit }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<usize> for VertexField<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// Per-face stencil data shared by the global assembly and the local
/// one-ring evaluations.
pub(crate) struct FaceTerms<T> {
    /// Cotangent of the interior angle at each corner.
    pub cot: [T; 3],
    pub angle: [T; 3],
    /// Winding normal scaled by twice the area.
    pub cross: Vec3<T>,
    pub area: T,
    /// Mixed Voronoi share of each corner; the three shares sum to `area`.
    pub mixed: [T; 3],
}

pub(crate) fn face_terms<T: Real>(p: [Vec3<T>; 3]) -> Option<FaceTerms<T>> {
    let cross = (p[1] - p[0]).cross(p[2] - p[0]);
    let twice = cross.norm();
    if !(twice > T::zero()) || !twice.is_finite() {
        return None;
    }
    let mut cot = [T::zero(); 3];
    let mut angle = [T::zero(); 3];
    let mut obtuse = None;
    for k in 0..3 {
        let u = p[(k + 1) % 3] - p[k];
        let w = p[(k + 2) % 3] - p[k];
        let d = u.dot(w);
        cot[k] = d / twice;
        angle[k] = twice.atan2(d);
        if d < T::zero() {
            obtuse = Some(k);
        }
    }
    if cot.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let area = twice * T::cst(0.5);
    let mixed = match obtuse {
        None => {
            let eighth = T::cst(0.125);
            std::array::from_fn(|k| {
                let (j, l) = ((k + 1) % 3, (k + 2) % 3);
                eighth * ((p[k] - p[j]).norm_squared() * cot[l] + (p[k] - p[l]).norm_squared() * cot[j])
            })
        }
        Some(o) => {
            let quarter = area * T::cst(0.25);
            std::array::from_fn(|k| if k == o { area * T::cst(0.5) } else { quarter })
        }
    };
    Some(FaceTerms { cot, angle, cross, area, mixed })
}

/// Per-vertex curvature quantities of a mesh plus the global energies that
/// do not depend on (c0, λ).
#[derive(Clone, Debug)]
pub struct GeometryCache<T> {
    /// Mixed Voronoi area a_i.
    pub vertex_area: Vec<T>,
    pub normal: Vec<Vec3<T>>,
    pub mean_curvature: Vec<T>,
    pub gauss_curvature: Vec<T>,
    /// 2π minus the corner angles at the vertex.
    pub angle_defect: Vec<T>,
    /// |A⁰|² = max(½H² − 2K, 0).
    pub a0sq: Vec<T>,
    /// |A|² = |A⁰|² + ½H².
    pub asq: Vec<T>,
    pub laplacian: CotanLaplacian<T>,
    pub area: T,
    pub volume: T,
    pub willmore: T,
    /// ∫|A⁰|²dμ.
    pub w0: T,
    /// ∫|A|²dμ.
    pub asq_integral: T,
    /// Σ max(2K − ½H², 0)·a_i, the mass removed by the umbilic clamp.
    pub clamp_mass: T,
    pub max_asq: T,
    pub euler_characteristic: i64,
}

pub fn build_cache<T: Real>(mesh: &TriangleMesh<T>) -> Result<GeometryCache<T>, GeomError> {
    let n = mesh.n_vertices();
    let topo = mesh.topology();
    let mut cot = Vec::with_capacity(mesh.n_faces());
    let mut vertex_area = vec![T::zero(); n];
    let mut angle_sum = vec![T::zero(); n];
    let mut normal_sum = vec![Vec3::zero(); n];
    let mut face_area = Vec::with_capacity(mesh.n_faces());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let t = face_terms(mesh.face_corners(fi)).ok_or(GeomError::DegenerateFace { face: fi })?;
        for k in 0..3 {
            vertex_area[f[k]] += t.mixed[k];
            angle_sum[f[k]] += t.angle[k];
            normal_sum[f[k]] += t.cross;
        }
        face_area.push(t.area);
        cot.push(t.cot);
    }
    let laplacian = CotanLaplacian::assemble(&topo, &cot, n);
    let lap_f = laplacian.apply_vec3(mesh.vertices());

    let two_pi = T::cst(std::f64::consts::TAU);
    let half = T::cst(0.5);
    let two = T::cst(2.0);
    let mut normal = Vec::with_capacity(n);
    let mut mean_curvature = Vec::with_capacity(n);
    let mut gauss_curvature = Vec::with_capacity(n);
    let mut angle_defect = Vec::with_capacity(n);
    let mut a0sq = Vec::with_capacity(n);
    let mut asq = Vec::with_capacity(n);
    let mut clamp = Vec::with_capacity(n);
    for i in 0..n {
        let a = vertex_area[i];
        let nu = normal_sum[i].normalized();
        let h = lap_f[i].dot(nu) / a;
        let defect = two_pi - angle_sum[i];
        let k = defect / a;
        if !h.is_finite() {
            return Err(GeomError::NonFinite { quantity: "mean curvature", vertex: i });
        }
        if !k.is_finite() {
            return Err(GeomError::NonFinite { quantity: "Gauss curvature", vertex: i });
        }
        let raw = half * h * h - two * k;
        let trace_free = raw.max(T::zero());
        clamp.push((-raw).max(T::zero()) * a);
        normal.push(nu);
        mean_curvature.push(h);
        gauss_curvature.push(k);
        angle_defect.push(defect);
        a0sq.push(trace_free);
        asq.push(trace_free + half * h * h);
    }
    let weighted = |f: &[T]| compensated_sum(f.iter().zip(&vertex_area).map(|(&x, &a)| x * a));
    let h2: Vec<T> = mean_curvature.iter().map(|&h| h * h).collect();
    let willmore = weighted(&h2) * T::cst(0.25);
    let w0 = weighted(&a0sq);
    let asq_integral = weighted(&asq);
    let max_asq = asq.iter().copied().fold(T::zero(), T::max);
    Ok(GeometryCache {
        area: compensated_sum(face_area),
        volume: mesh.signed_volume(),
        willmore,
        w0,
        asq_integral,
        clamp_mass: compensated_sum(clamp),
        max_asq,
        euler_characteristic: mesh.euler_characteristic(),
        vertex_area,
        normal,
        mean_curvature,
        gauss_curvature,
        angle_defect,
        a0sq,
        asq,
        laplacian,
    })
}

impl<T: Real> GeometryCache<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertex_area.len()
    }

    /// Σ u_i a_i, compensated.
    pub fn integrate(&self, u: &[T]) -> T {
        compensated_sum(u.iter().zip(&self.vertex_area).map(|(&x, &a)| x * a))
    }

    /// Δu = M⁻¹ L u.
    pub fn laplace(&self, u: &[T]) -> Vec<T> {
        self.laplacian.apply(u).into_iter().zip(&self.vertex_area).map(|(l, &a)| l / a).collect()
    }

    /// Σ K_i a_i, which equals 2πχ up to rounding.
    pub fn total_gauss_curvature(&self) -> T {
        compensated_sum(self.gauss_curvature.iter().zip(&self.vertex_area).map(|(&k, &a)| k * a))
    }

    pub fn helfrich(&self, params: &FlowParams) -> T {
        let c0 = T::cst(params.c0);
        let terms: Vec<T> = self.mean_curvature.iter().map(|&h| (h - c0) * (h - c0)).collect();
        self.integrate(&terms) * T::cst(0.25)
    }

    pub fn penalized(&self, params: &FlowParams) -> T {
        self.helfrich(params) + T::cst(0.5 * params.lambda) * self.area
    }
}

pub fn area<T: Real>(cache: &GeometryCache<T>) -> T {
    cache.area
}

pub fn signed_volume<T: Real>(mesh: &TriangleMesh<T>) -> T {
    mesh.signed_volume()
}

/// W = ¼Σ H_i² a_i.
pub fn willmore_energy<T: Real>(cache: &GeometryCache<T>) -> T {
    cache.willmore
}

/// H_{c0} = ¼Σ (H_i − c0)² a_i.
pub fn helfrich_energy<T: Real>(cache: &GeometryCache<T>, params: &FlowParams) -> T {
    cache.helfrich(params)
}

/// H_{c0,λ} = H_{c0} + ½λA.
pub fn penalized_energy<T: Real>(cache: &GeometryCache<T>, params: &FlowParams) -> T {
    cache.penalized(params)
}

/// Σ H_i a_i.
pub fn mean_curvature_integral<T: Real>(cache: &GeometryCache<T>) -> T {
    cache.integrate(&cache.mean_curvature)
}

/// Largest deviation from the two Gauss–Bonnet consequences
/// ∫|A⁰|² = 2W − 8π(1 − g) and ∫|A|² = 4(W − 2π) + 8πg.
pub fn gauss_bonnet_residual<T: Real>(cache: &GeometryCache<T>, genus: i64) -> T {
    let pi = T::PI();
    let g = T::cst(genus as f64);
    let eight_pi = T::cst(8.0) * pi;
    let w = cache.willmore;
    let r0 = (cache.w0 - (T::cst(2.0) * w - eight_pi * (T::one() - g))).abs();
    let r1 = (cache.asq_integral - (T::cst(4.0) * (w - T::cst(2.0) * pi) + eight_pi * g)).abs();
    r0.max(r1)
}

/// ((2λ + c0²)/(2λ))·H_{c0,λ} − W, non-negative for every immersion.
pub fn willmore_bound_residual<T: Real>(cache: &GeometryCache<T>, params: &FlowParams) -> Result<T, GeomError> {
    if !(params.lambda > 0.0) {
        return Err(GeomError::LambdaNotPositive(params.lambda));
    }
    let factor = T::cst(params.kappa() / (2.0 * params.lambda));
    Ok(factor * cache.penalized(params) - cache.willmore)
}

/// ∇H_{c0} per unit area: ½[ΔH + |A⁰|²(H − c0) + ½c0 H(H − c0)].
pub fn helfrich_gradient<T: Real>(cache: &GeometryCache<T>, params: &FlowParams) -> Vec<T> {
    let c0 = T::cst(params.c0);
    let half = T::cst(0.5);
    let lap_h = cache.laplace(&cache.mean_curvature);
    (0..cache.n_vertices())
        .map(|i| {
            let h = cache.mean_curvature[i];
            half * (lap_h[i] + cache.a0sq[i] * (h - c0) + half * c0 * h * (h - c0))
        })
        .collect()
}

/// Normal speed ξ of the (c0, λ)-flow, ∂t f = ξν:
/// ξ = −(ΔH + |A⁰|²H − c0(|A⁰|² − ½H²) − (λ + ½c0²)H).
pub fn flow_velocity<T: Real>(cache: &GeometryCache<T>, params: &FlowParams) -> VertexField<T> {
    let c0 = T::cst(params.c0);
    let half = T::cst(0.5);
    let shift = T::cst(params.lambda + 0.5 * params.c0 * params.c0);
    let lap_h = cache.laplace(&cache.mean_curvature);
    let values = (0..cache.n_vertices())
        .map(|i| {
            let h = cache.mean_curvature[i];
            let a0 = cache.a0sq[i];
            -(lap_h[i] + a0 * h - c0 * (a0 - half * h * h) - shift * h)
        })
        .collect();
    VertexField::new(values, Unit::InverseLengthCubed)
}

/// √(Σ ξ_i² a_i), the L² norm of ∂t f.
pub fn velocity_l2_norm<T: Real>(cache: &GeometryCache<T>, xi: &[T]) -> T {
    let sq: Vec<T> = xi.iter().map(|&x| x * x).collect();
    cache.integrate(&sq).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual64;
    use crate::mesh::{make_icosphere, tetrahedron, torus};
    use std::f64::consts::PI;

    fn sphere(level: u32, r: f64) -> TriangleMesh<f64> {
        make_icosphere(level, r, Vec3::zero()).unwrap()
    }

    #[test]
    fn unit_sphere_mean_curvature_converges_to_two() {
        let mut prev = f64::INFINITY;
        // Level 1 is special: its vertices are all equivalent up to rounding.
        for level in 2..=4 {
            let c = build_cache(&sphere(level, 1.0)).unwrap();
            let err = c.mean_curvature.iter().map(|h| (h - 2.0).abs()).fold(0.0, f64::max) / 2.0;
            assert!(err < prev, "level {level}: {err} !< {prev}");
            prev = err;
        }
        assert!(prev <= 0.02, "level 4 relative error {prev}");
    }

    #[test]
    fn sphere_is_nearly_umbilic() {
        let c = build_cache(&sphere(4, 1.0)).unwrap();
        let max = c.a0sq.iter().copied().fold(0.0, f64::max);
        assert!(max < 0.05, "max |A0|^2 {max}");
        assert!(c.w0 < 0.05);
    }

    #[test]
    fn tetrahedron_gauss_bonnet_is_exact() {
        let c = build_cache(&tetrahedron::<f64>()).unwrap();
        assert!((c.total_gauss_curvature() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn torus_gauss_bonnet_is_zero() {
        let c = build_cache(&torus::<f64>(2.0, 0.7, 30, 14).unwrap()).unwrap();
        assert!(c.total_gauss_curvature().abs() < 1e-10);
    }

    #[test]
    fn vertex_areas_partition_total_area() {
        for m in [sphere(3, 1.3), tetrahedron(), torus(2.0, 0.5, 24, 9).unwrap()] {
            let c = build_cache(&m).unwrap();
            let sum = compensated_sum(c.vertex_area.iter().copied());
            assert!((sum - c.area).abs() <= 1e-12 * c.area);
        }
    }

    #[test]
    fn sphere_area_and_volume() {
        let c = build_cache(&sphere(5, 1.0)).unwrap();
        assert!((c.area - 4.0 * PI).abs() / (4.0 * PI) < 1e-3);
        assert!((c.volume - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 3e-3);
    }

    #[test]
    fn sphere_energies() {
        let c = build_cache(&sphere(4, 1.0)).unwrap();
        assert!((c.willmore - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        let p = FlowParams::new(1.0, 0.5).unwrap();
        assert!((c.penalized(&p) - 2.0 * PI).abs() / (2.0 * PI) < 1e-2);
        let zero = FlowParams::new(0.0, 0.0).unwrap();
        assert_eq!(c.helfrich(&zero), c.willmore);
        assert!(gauss_bonnet_residual(&c, 0) <= 0.05);
    }

    #[test]
    fn willmore_bound_examples() {
        let c = build_cache(&sphere(4, 1.0)).unwrap();
        let r = willmore_bound_residual(&c, &FlowParams::new(1.0, 0.5).unwrap()).unwrap();
        assert!(r.abs() < 0.05, "residual {r}");
        let r = willmore_bound_residual(&c, &FlowParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!((r - 0.5 * PI).abs() < 0.05, "residual {r}");
        assert!(willmore_bound_residual(&c, &FlowParams::new(1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn sphere_velocity_matches_radial_law() {
        let c = build_cache(&sphere(4, 1.0)).unwrap();
        for (c0, lambda, expect) in [(2.0, 0.0, 0.0), (-1.0, 0.0, 3.0), (1.0, 0.5, 0.0)] {
            let xi = flow_velocity(&c, &FlowParams::new(c0, lambda).unwrap());
            let mean = c.integrate(&xi.values) / c.area;
            assert!((mean - expect).abs() < 0.05, "({c0}, {lambda}): mean xi {mean}");
        }
    }

    #[test]
    fn velocity_is_minus_twice_the_gradient() {
        let m = sphere(3, 1.0);
        let bumped = m.with_positions(
            m.vertices().iter().map(|v| *v * (1.0 + 0.05 * (3.0 * v.x).sin() * v.y)).collect(),
        );
        let c = build_cache(&bumped).unwrap();
        let p = FlowParams::new(-0.7, 0.3).unwrap();
        let xi = flow_velocity(&c, &p);
        let g = helfrich_gradient(&c, &p);
        for i in 0..c.n_vertices() {
            let pen = g[i] - 0.5 * p.lambda * c.mean_curvature[i];
            assert!((xi[i] + 2.0 * pen).abs() < 1e-9 * (1.0 + xi[i].abs()));
        }
    }

    #[test]
    fn mean_curvature_integral_scales_linearly() {
        for r in [1.0, 2.5] {
            let c = build_cache(&sphere(4, r)).unwrap();
            let v = mean_curvature_integral(&c);
            assert!((v - 8.0 * PI * r).abs() / (8.0 * PI * r) < 5e-3);
        }
        let m = sphere(3, 1.0);
        let mirrored = m.with_positions(m.vertices().iter().map(|v| Vec3::new(-v.x, v.y, v.z)).collect());
        let fixed = mirrored.orient_for_positive_volume().unwrap();
        let a = mean_curvature_integral(&build_cache(&m).unwrap());
        let b = mean_curvature_integral(&build_cache(&fixed).unwrap());
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn scaling_equivariance() {
        let m = sphere(3, 1.0);
        let m = m.with_positions(m.vertices().iter().map(|v| Vec3::new(1.4 * v.x, v.y, 0.8 * v.z)).collect());
        let s = 3.0;
        let a = build_cache(&m).unwrap();
        let b = build_cache(&m.scaled(s)).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-300);
        for i in 0..a.n_vertices() {
            assert!(rel(a.mean_curvature[i] / s, b.mean_curvature[i]) < 1e-12);
            assert!(rel(a.gauss_curvature[i] / (s * s), b.gauss_curvature[i]) < 1e-12);
        }
        assert!(rel(a.area * s * s, b.area) < 1e-12);
        assert!(rel(a.volume * s * s * s, b.volume) < 1e-12);
        assert!(rel(a.willmore, b.willmore) < 1e-12);
    }

    #[test]
    fn f32_and_dual_caches_agree_with_f64() {
        let m = sphere(2, 1.0);
        let c64 = build_cache(&m).unwrap();
        let c32 = build_cache(&m.cast::<f32>()).unwrap();
        assert!((c32.willmore as f64 - c64.willmore).abs() < 1e-4 * c64.willmore);
        let cd = build_cache(&m.cast::<Dual64>()).unwrap();
        assert!((cd.willmore.re - c64.willmore).abs() < 1e-13 * c64.willmore);
        assert_eq!(cd.willmore.eps, 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(matches!(FlowParams::new(1.0, -0.1), Err(GeomError::NegativeLambda(_))));
        assert!(FlowParams::allowing_negative_lambda(1.0, -0.1).is_ok());
        assert!(FlowParams::new(f64::NAN, 0.0).is_err());
        let p = FlowParams::new(1.0, 0.5).unwrap().rescaled(2.0);
        assert_eq!((p.c0, p.lambda), (2.0, 2.0));
    }
}
