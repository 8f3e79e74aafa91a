//! Closed oriented triangle meshes: the discrete immersion being evolved.
//!
//! A [`TriangleMesh`] is an indexed face set. Every constructor validates the
//! closed-manifold invariants (each edge shared by exactly two faces with
//! opposite directions, no degenerate faces), so downstream code can assume
//! them. Adjacency is derived on demand through [`Topology`].

mod io;
mod primitives;
mod remesh;

use std::collections::HashMap;

use thiserror::Error;

use crate::scalar::{compensated_sum, Real};
use crate::vec3::Vec3;

pub use io::{load_mesh, read_obj, read_off, save_mesh, write_obj, write_off, MeshFormat};
pub use primitives::{
    ellipsoid, icosahedron, make_icosphere, tetrahedron, torus, MAX_ICOSPHERE_SUBDIVISIONS,
};
pub use remesh::{
    hausdorff_distance, remesh, transfer_vertex_field, RemeshParams, SurfaceLocator,
};

/// Faces with area below `DEGENERATE_AREA_FACTOR · diag²` are rejected.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh format for {0}")]
    UnknownFormat(String),
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("vertex {0} has a non-finite position")]
    NonFinite(usize),
    #[error("edge ({a}, {b}) is shared by {count} faces; a closed manifold needs exactly 2")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("edge ({a}, {b}) lies on an open boundary")]
    OpenBoundary { a: usize, b: usize },
    #[error("face windings are inconsistent at edge ({a}, {b})")]
    InconsistentWinding { a: usize, b: usize },
    #[error("surface component {component} is not orientable")]
    NonOrientable { component: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("component {component} encloses zero volume; orientation is ambiguous")]
    AmbiguousOrientation { component: usize },
    #[error("vertex tag count {tags} does not match vertex count {vertices}")]
    TagCount { tags: usize, vertices: usize },
    #[error("icosphere subdivision level {level} exceeds maximum {max}")]
    TooManySubdivisions { level: u32, max: u32 },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("remeshing changed the topology (Euler characteristic {before} -> {after})")]
    TopologyChanged { before: i64, after: i64 },
}

#[derive(Clone, Debug)]
pub struct TriangleMesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<[usize; 3]>,
    tags: Option<Vec<u64>>,
}

impl<T: Real> TriangleMesh<T> {
    /// Builds a mesh and checks every closed-manifold invariant.
    ///
    /// The winding is taken as given; use [`TriangleMesh::from_polygons`] to
    /// repair inconsistent windings and fan-triangulate polygons.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Self { vertices, faces, tags: None };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Fan-triangulates polygons, repairs windings component by component and
    /// orients every component for non-negative signed volume.
    pub fn from_polygons(
        vertices: Vec<Vec3<T>>,
        polygons: &[Vec<usize>],
    ) -> Result<Self, MeshError> {
        let mut faces = Vec::with_capacity(polygons.len());
        for poly in polygons {
            for k in 1..poly.len().saturating_sub(1) {
                faces.push([poly[0], poly[k], poly[k + 1]]);
            }
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: v, count: n });
                }
            }
        }
        check_undirected_manifold(&faces)?;
        let faces = repair_winding(faces)?;
        let mesh = Self::new(vertices, faces)?;
        mesh.orient_for_positive_volume()
    }

    /// Replaces positions without re-validating topology. Used by the flow,
    /// which moves vertices but never changes connectivity.
    pub fn with_positions(&self, vertices: Vec<Vec3<T>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "position count mismatch");
        Self { vertices, faces: self.faces.clone(), tags: self.tags.clone() }
    }

    pub fn with_tags(mut self, tags: Vec<u64>) -> Result<Self, MeshError> {
        if tags.len() != self.vertices.len() {
            return Err(MeshError::TagCount { tags: tags.len(), vertices: self.vertices.len() });
        }
        self.tags = Some(tags);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn tags(&self) -> Option<&[u64]> {
        self.tags.as_deref()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// On a closed manifold every edge has two faces, so E = 3F/2.
    pub fn n_edges(&self) -> usize {
        self.faces.len() * 3 / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    /// Total genus summed over connected components.
    pub fn genus(&self) -> i64 {
        let components = self.face_components().1 as i64;
        (2 * components - self.euler_characteristic()) / 2
    }

    /// Connected component id of every face, and the component count.
    pub fn face_components(&self) -> (Vec<usize>, usize) {
        let topo = self.topology();
        let mut comp = vec![usize::MAX; self.faces.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for seed in 0..self.faces.len() {
            if comp[seed] != usize::MAX {
                continue;
            }
            comp[seed] = count;
            stack.push(seed);
            while let Some(f) = stack.pop() {
                for &e in &topo.face_edges[f] {
                    for &g in &topo.edge_faces[e] {
                        if comp[g] == usize::MAX {
                            comp[g] = count;
                            stack.push(g);
                        }
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn bounding_box(&self) -> (Vec3<T>, Vec3<T>) {
        let first = self.vertices[0];
        self.vertices
            .iter()
            .fold((first, first), |(lo, hi), &v| (lo.component_min(v), hi.component_max(v)))
    }

    pub fn bbox_diagonal(&self) -> T {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec3<T> {
        let n = T::cst(self.vertices.len() as f64);
        self.vertices.iter().fold(Vec3::zero(), |acc, &v| acc + v) / n
    }

    #[inline]
    pub fn face_corners(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Winding-induced normal scaled by twice the face area.
    #[inline]
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [p0, p1, p2] = self.face_corners(f);
        (p1 - p0).cross(p2 - p0)
    }

    pub fn face_area(&self, f: usize) -> T {
        self.face_cross(f).norm() * T::cst(0.5)
    }

    pub fn area(&self) -> T {
        compensated_sum((0..self.faces.len()).map(|f| self.face_area(f)))
    }

    /// Signed volume −(1/3)∫⟨f, ν⟩dμ with ν the winding-induced normal.
    ///
    /// Per face this is −det(p0, p1, p2)/6, so a mesh wound with inward
    /// normals encloses positive volume.
    pub fn signed_volume(&self) -> T {
        compensated_sum((0..self.faces.len()).map(|f| self.face_signed_volume(f)))
    }

    #[inline]
    fn face_signed_volume(&self, f: usize) -> T {
        let [p0, p1, p2] = self.face_corners(f);
        -p0.dot(p1.cross(p2)) / T::cst(6.0)
    }

    /// Reverses every face winding.
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self { vertices: self.vertices.clone(), faces, tags: self.tags.clone() }
    }

    /// Flips each connected component whose signed volume is negative.
    ///
    /// Components whose enclosed volume vanishes relative to their size have
    /// no preferred orientation; they are reported and nothing is changed.
    pub fn orient_for_positive_volume(&self) -> Result<Self, MeshError> {
        let (comp, count) = self.face_components();
        let mut volume = vec![T::zero(); count];
        let mut lo = vec![Vec3::from_f64([f64::MAX; 3]); count];
        let mut hi = vec![Vec3::from_f64([f64::MIN; 3]); count];
        for f in 0..self.faces.len() {
            let c = comp[f];
            volume[c] += self.face_signed_volume(f);
            for p in self.face_corners(f) {
                lo[c] = lo[c].component_min(p);
                hi[c] = hi[c].component_max(p);
            }
        }
        let mut flip = vec![false; count];
        for c in 0..count {
            let scale = (hi[c] - lo[c]).norm();
            if volume[c].abs() <= T::cst(1e-12) * scale * scale * scale {
                return Err(MeshError::AmbiguousOrientation { component: c });
            }
            flip[c] = volume[c] < T::zero();
        }
        if !flip.iter().any(|&f| f) {
            return Ok(self.clone());
        }
        let faces = self
            .faces
            .iter()
            .zip(&comp)
            .map(|(&[a, b, c], &k)| if flip[k] { [a, c, b] } else { [a, b, c] })
            .collect();
        Ok(Self { vertices: self.vertices.clone(), faces, tags: self.tags.clone() })
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        self.with_positions(self.vertices.iter().map(|&v| v + offset).collect())
    }

    pub fn scaled(&self, factor: T) -> Self {
        self.with_positions(self.vertices.iter().map(|&v| v * factor).collect())
    }

    /// Two meshes side by side as one (multi-component) mesh.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|v| v + offset)));
        Self { vertices, faces, tags: None }
    }

    /// Same connectivity in another scalar type (value part only).
    pub fn cast<U: Real>(&self) -> TriangleMesh<U> {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            tags: self.tags.clone(),
        }
    }

    pub fn topology(&self) -> Topology {
        Topology::build(self.vertices.len(), &self.faces)
    }

    pub fn quality_report(&self) -> MeshQualityReport {
        MeshQualityReport::measure(self)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = self.vertices.len();
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: v, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi });
            }
        }
        check_undirected_manifold(&self.faces)?;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                let c = directed.entry(e).or_insert(0);
                *c += 1;
                if *c > 1 {
                    return Err(MeshError::InconsistentWinding { a: e.0, b: e.1 });
                }
            }
        }
        let diag = self.bbox_diagonal();
        let floor = T::cst(DEGENERATE_AREA_FACTOR) * diag * diag;
        for f in 0..self.faces.len() {
            let area = self.face_area(f);
            if !(area > floor) {
                return Err(MeshError::DegenerateFace { face: f, area: area.value() });
            }
        }
        Ok(())
    }
}

fn check_undirected_manifold(faces: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = count.into_iter().filter(|&(_, c)| c != 2).collect();
    bad.sort_unstable();
    match bad.first() {
        None => Ok(()),
        Some(&((a, b), 1)) => Err(MeshError::OpenBoundary { a, b }),
        Some(&((a, b), count)) => Err(MeshError::NonManifoldEdge { a, b, count }),
    }
}

/// Propagates a consistent winding across each component by breadth-first
/// search, flipping faces as needed. Fails on non-orientable components.
fn repair_winding(mut faces: Vec<[usize; 3]>) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    let has_directed = |f: &[usize; 3], a: usize, b: usize| {
        (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
    };
    let mut state = vec![0u8; faces.len()]; // 0 unseen, 1 placed
    let mut queue = std::collections::VecDeque::new();
    let mut component = 0;
    for seed in 0..faces.len() {
        if state[seed] != 0 {
            continue;
        }
        state[seed] = 1;
        queue.push_back(seed);
        while let Some(fi) = queue.pop_front() {
            let f = faces[fi];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                for &g in &edge_faces[&(a.min(b), a.max(b))] {
                    if g == fi {
                        continue;
                    }
                    // A consistently wound neighbour traverses the edge as b -> a.
                    let consistent = has_directed(&faces[g], b, a);
                    if state[g] == 0 {
                        if !consistent {
                            let [x, y, z] = faces[g];
                            faces[g] = [x, z, y];
                        }
                        state[g] = 1;
                        queue.push_back(g);
                    } else if !consistent {
                        return Err(MeshError::NonOrientable { component });
                    }
                }
            }
        }
        component += 1;
    }
    Ok(faces)
}

/// Derived adjacency of a closed triangle mesh.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Undirected edges as (min, max) vertex pairs.
    pub edges: Vec<[usize; 2]>,
    pub edge_faces: Vec<[usize; 2]>,
    pub face_edges: Vec<[usize; 3]>,
    vertex_face_offsets: Vec<usize>,
    vertex_face_list: Vec<usize>,
    neighbor_offsets: Vec<usize>,
    neighbor_list: Vec<usize>,
}

impl Topology {
    pub fn build(n_vertices: usize, faces: &[[usize; 3]]) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
        let mut edges = Vec::with_capacity(faces.len() * 3 / 2);
        let mut edge_faces: Vec<[usize; 2]> = Vec::with_capacity(faces.len() * 3 / 2);
        let mut face_edges = vec![[0usize; 3]; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push([usize::MAX, usize::MAX]);
                    edges.len() - 1
                });
                if edge_faces[e][0] == usize::MAX {
                    edge_faces[e][0] = fi;
                } else {
                    edge_faces[e][1] = fi;
                }
                face_edges[fi][k] = e;
            }
        }

        let mut degree = vec![0usize; n_vertices + 1];
        for f in faces {
            for &v in f {
                degree[v + 1] += 1;
            }
        }
        for i in 0..n_vertices {
            degree[i + 1] += degree[i];
        }
        let vertex_face_offsets = degree.clone();
        let mut fill = degree;
        let mut vertex_face_list = vec![0; vertex_face_offsets[n_vertices]];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_face_list[fill[v]] = fi;
                fill[v] += 1;
            }
        }

        let mut nbr: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
        for &[a, b] in &edges {
            nbr[a].push(b);
            nbr[b].push(a);
        }
        let mut neighbor_offsets = Vec::with_capacity(n_vertices + 1);
        let mut neighbor_list = Vec::with_capacity(edges.len() * 2);
        neighbor_offsets.push(0);
        for mut list in nbr {
            list.sort_unstable();
            neighbor_list.extend(list);
            neighbor_offsets.push(neighbor_list.len());
        }

        Self {
            edges,
            edge_faces,
            face_edges,
            vertex_face_offsets,
            vertex_face_list,
            neighbor_offsets,
            neighbor_list,
        }
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_face_list[self.vertex_face_offsets[v]..self.vertex_face_offsets[v + 1]]
    }

    /// Sorted one-ring neighbours.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbor_list[self.neighbor_offsets[v]..self.neighbor_offsets[v + 1]]
    }

    pub fn valence(&self, v: usize) -> usize {
        self.neighbor_offsets[v + 1] - self.neighbor_offsets[v]
    }
}

/// Upper bin edges of the aspect-ratio histogram (circumradius / 2·inradius).
pub const ASPECT_BINS: [f64; 6] = [1.25, 1.5, 2.0, 3.0, 5.0, f64::INFINITY];

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MeshQualityReport {
    pub min_edge: f64,
    pub max_edge: f64,
    pub mean_edge: f64,
    /// Smallest interior angle, radians.
    pub min_angle: f64,
    pub min_face_area: f64,
    pub aspect_histogram: [usize; 6],
}

impl MeshQualityReport {
    fn measure<T: Real>(mesh: &TriangleMesh<T>) -> Self {
        let topo = mesh.topology();
        let lengths: Vec<f64> = topo
            .edges
            .iter()
            .map(|&[a, b]| (mesh.vertices[a] - mesh.vertices[b]).norm().value())
            .collect();
        let min_edge = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let max_edge = lengths.iter().copied().fold(0.0, f64::max);
        let mean_edge = lengths.iter().sum::<f64>() / lengths.len() as f64;
        let mut min_angle = f64::INFINITY;
        let mut min_face_area = f64::INFINITY;
        let mut aspect_histogram = [0usize; 6];
        for f in 0..mesh.n_faces() {
            let p = mesh.face_corners(f).map(|v| v.cast::<f64>());
            let l = [(p[1] - p[2]).norm(), (p[2] - p[0]).norm(), (p[0] - p[1]).norm()];
            let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
            min_face_area = min_face_area.min(area);
            for k in 0..3 {
                let u = p[(k + 1) % 3] - p[k];
                let w = p[(k + 2) % 3] - p[k];
                min_angle = min_angle.min(u.cross(w).norm().atan2(u.dot(w)));
            }
            let s = 0.5 * (l[0] + l[1] + l[2]);
            let inradius = area / s;
            let circumradius = l[0] * l[1] * l[2] / (4.0 * area);
            let ratio = circumradius / (2.0 * inradius);
            let bin = ASPECT_BINS.iter().position(|&b| ratio <= b).unwrap_or(5);
            aspect_histogram[bin] += 1;
        }
        Self { min_edge, max_edge, mean_edge, min_angle, min_face_area, aspect_histogram }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tet() -> TriangleMesh<f64> {
        tetrahedron()
    }

    #[test]
    fn tetrahedron_counts_and_volume() {
        let m = tet();
        assert_eq!((m.n_vertices(), m.n_edges(), m.n_faces()), (4, 6, 4));
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.genus(), 0);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn orientation_flip_negates_volume_and_is_idempotent() {
        let m = tet();
        let f = m.flipped();
        assert!((f.signed_volume() + m.signed_volume()).abs() < 1e-15);
        let o = f.orient_for_positive_volume().unwrap();
        assert_eq!(o.faces(), m.faces());
        let oo = o.orient_for_positive_volume().unwrap();
        assert_eq!(oo.faces(), o.faces());
    }

    #[test]
    fn open_boundary_rejected() {
        let m = tet();
        let err = TriangleMesh::new(m.vertices().to_vec(), m.faces()[..3].to_vec()).unwrap_err();
        assert!(matches!(err, MeshError::OpenBoundary { .. }), "{err}");
    }

    #[test]
    fn inconsistent_winding_rejected_but_repairable() {
        let m = tet();
        let mut faces = m.faces().to_vec();
        faces[1] = [faces[1][0], faces[1][2], faces[1][1]];
        let err = TriangleMesh::new(m.vertices().to_vec(), faces.clone()).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentWinding { .. }));
        let polys: Vec<Vec<usize>> = faces.iter().map(|f| f.to_vec()).collect();
        let repaired = TriangleMesh::from_polygons(m.vertices().to_vec(), &polys).unwrap();
        assert!(repaired.signed_volume() > 0.0);
    }

    #[test]
    fn non_manifold_edge_rejected() {
        let m = tet();
        let mut faces = m.faces().to_vec();
        faces.push(m.faces()[0]);
        let polys: Vec<Vec<usize>> = faces.iter().map(|f| f.to_vec()).collect();
        let err = TriangleMesh::from_polygons(m.vertices().to_vec(), &polys).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { count: 3, .. }));
    }

    #[test]
    fn degenerate_face_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let faces = vec![[0, 1, 2], [0, 2, 1]];
        let err = TriangleMesh::new(v, faces).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn torus_has_genus_one() {
        let t = torus::<f64>(2.0, 0.5, 24, 12).unwrap();
        assert_eq!(t.euler_characteristic(), 0);
        assert_eq!(t.genus(), 1);
    }

    #[test]
    fn two_spheres_are_two_components() {
        let a = make_icosphere::<f64>(1, 1.0, Vec3::zero()).unwrap();
        let b = make_icosphere::<f64>(1, 1.0, Vec3::new(10.0, 0.0, 0.0)).unwrap();
        let u = a.disjoint_union(&b);
        assert_eq!(u.face_components().1, 2);
        assert_eq!(u.euler_characteristic(), 4);
        assert_eq!(u.genus(), 0);
    }

    #[test]
    fn quality_extremes_are_attained() {
        let m = make_icosphere::<f64>(2, 1.0, Vec3::zero()).unwrap();
        let q = m.quality_report();
        let topo = m.topology();
        let lengths: Vec<f64> =
            topo.edges.iter().map(|&[a, b]| (m.vertices()[a] - m.vertices()[b]).norm()).collect();
        assert!(q.min_edge > 0.0);
        assert!(lengths.iter().any(|&l| l == q.min_edge));
        assert!(lengths.iter().any(|&l| l == q.max_edge));
        assert_eq!(q.aspect_histogram.iter().sum::<usize>(), m.n_faces());
        assert!((0..m.n_faces()).any(|f| m.face_area(f) == q.min_face_area));
    }

    #[test]
    fn topology_neighbors_are_consistent() {
        let m = make_icosphere::<f64>(1, 1.0, Vec3::zero()).unwrap();
        let t = m.topology();
        assert_eq!(t.edges.len(), m.n_edges());
        for v in 0..m.n_vertices() {
            assert_eq!(t.vertex_faces(v).len(), t.valence(v));
            for &w in t.neighbors(v) {
                assert!(t.neighbors(w).contains(&v));
            }
        }
    }
}
