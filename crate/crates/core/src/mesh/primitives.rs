//! Canonical test geometry.

use std::collections::HashMap;

use super::{MeshError, TriangleMesh};
use crate::scalar::Real;
use crate::vec3::Vec3;

pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 7;

const ICO_FACES: [[usize; 3]; 20] = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
];

fn unit_icosahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let verts = raw.iter().map(|&p| normalize(p)).collect();
    (verts, ICO_FACES.to_vec())
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron<T: Real>() -> TriangleMesh<T> {
    make_icosphere(0, 1.0, Vec3::zero()).expect("level 0 is always valid")
}

/// Loop-style midpoint subdivision of the icosahedron with every vertex
/// projected onto the sphere of the given radius; F = 20·4^subdivisions.
pub fn make_icosphere<T: Real>(
    subdivisions: u32,
    radius: f64,
    center: Vec3<T>,
) -> Result<TriangleMesh<T>, MeshError> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(MeshError::TooManySubdivisions { level: subdivisions, max: MAX_ICOSPHERE_SUBDIVISIONS });
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("icosphere radius {radius}")));
    }
    let (mut verts, mut faces) = unit_icosahedron();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts
        .iter()
        .map(|&p| Vec3::from_f64(p) * T::cst(radius) + center)
        .collect();
    // The table above winds outward; the inward winding has positive volume.
    let faces = faces.into_iter().map(|[a, b, c]| [a, c, b]).collect();
    let mesh = TriangleMesh::new(vertices, faces)?;
    mesh.orient_for_positive_volume()
}

/// Tetrahedron with corners at the origin and the three unit points.
pub fn tetrahedron<T: Real>() -> TriangleMesh<T> {
    let v = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(v.iter().map(|&p| Vec3::from_f64(p)).collect(), faces)
        .and_then(|m| m.orient_for_positive_volume())
        .expect("tetrahedron is a valid closed mesh")
}

/// Torus of revolution about the z axis sampled on a `n_major × n_minor` grid.
pub fn torus<T: Real>(
    major: f64,
    minor: f64,
    n_major: usize,
    n_minor: usize,
) -> Result<TriangleMesh<T>, MeshError> {
    if !(major > minor && minor > 0.0) || n_major < 3 || n_minor < 3 {
        return Err(MeshError::InvalidParameter(format!(
            "torus R={major} r={minor} grid {n_major}x{n_minor}"
        )));
    }
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = std::f64::consts::TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = std::f64::consts::TAU * j as f64 / n_minor as f64;
            let rho = major + minor * v.cos();
            vertices.push(Vec3::from_f64([rho * u.cos(), rho * u.sin(), minor * v.sin()]));
        }
    }
    let id = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces)?.orient_for_positive_volume()
}

/// Axis-aligned ellipsoid obtained by stretching an icosphere.
pub fn ellipsoid<T: Real>(subdivisions: u32, axes: [f64; 3]) -> Result<TriangleMesh<T>, MeshError> {
    let sphere = make_icosphere::<T>(subdivisions, 1.0, Vec3::zero())?;
    let verts = sphere
        .vertices()
        .iter()
        .map(|v| Vec3::new(v.x * T::cst(axes[0]), v.y * T::cst(axes[1]), v.z * T::cst(axes[2])))
        .collect();
    sphere.with_positions(verts).orient_for_positive_volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_face_counts() {
        let m = make_icosphere::<f64>(0, 1.0, Vec3::zero()).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_faces()), (12, 30, 20));
        assert_eq!(m.euler_characteristic(), 2);
        let m3 = make_icosphere::<f64>(3, 1.0, Vec3::zero()).unwrap();
        assert_eq!(m3.n_faces(), 1280);
        assert_eq!(m3.euler_characteristic(), 2);
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let c = Vec3::new(1.0, 0.0, 0.0);
        let m = make_icosphere::<f64>(2, 0.5, c).unwrap();
        for v in m.vertices() {
            assert!(((*v - c).norm() - 0.5).abs() < 4.0 * f64::EPSILON);
        }
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn icosphere_limits() {
        assert!(matches!(
            make_icosphere::<f64>(8, 1.0, Vec3::zero()),
            Err(MeshError::TooManySubdivisions { .. })
        ));
        assert!(make_icosphere::<f64>(1, -1.0, Vec3::zero()).is_err());
    }

    #[test]
    fn f32_icosphere_builds() {
        let m = make_icosphere::<f32>(2, 1.0, Vec3::zero()).unwrap();
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn ellipsoid_volume_approaches_analytic() {
        let e = ellipsoid::<f64>(4, [2.0, 1.0, 1.0]).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 2.0;
        assert!((e.signed_volume() - exact).abs() / exact < 1e-2);
    }
}
