//! Isotropic remeshing by edge split, collapse, valence flips and tangential
//! relaxation, with vertices projected back onto the input surface.
//!
//! Connectivity edits keep the winding consistent, so the output inherits
//! the input orientation. A topology change is treated as a failure.

use std::collections::BTreeSet;

use super::{MeshError, TriangleMesh};
use crate::scalar::Real;
use crate::vec3::Vec3;

type P = Vec3<f64>;

#[derive(Clone, Debug)]
pub struct RemeshParams {
    pub target_edge: f64,
    pub iterations: usize,
    /// Tangential relaxation weight per iteration, in (0, 1].
    pub relaxation: f64,
    /// Collapses and flips may not create interior angles below this (radians).
    pub min_angle_floor: f64,
    /// Maximum admitted Hausdorff distance, as a fraction of `target_edge`.
    pub max_hausdorff_fraction: f64,
}

impl RemeshParams {
    pub fn new(target_edge: f64) -> Self {
        Self {
            target_edge,
            iterations: 6,
            relaxation: 0.25,
            min_angle_floor: 5f64.to_radians(),
            max_hausdorff_fraction: 0.5,
        }
    }
}

struct Work {
    pos: Vec<P>,
    tags: Vec<u64>,
    alive_v: Vec<bool>,
    faces: Vec<[usize; 3]>,
    alive_f: Vec<bool>,
    vf: Vec<Vec<usize>>,
    next_tag: u64,
}

impl Work {
    fn new<T: Real>(mesh: &TriangleMesh<T>) -> Self {
        let n = mesh.n_vertices();
        let tags = mesh.tags().map(|t| t.to_vec()).unwrap_or_else(|| (0..n as u64).collect());
        let next_tag = tags.iter().copied().max().map_or(0, |m| m + 1);
        let mut vf = vec![Vec::new(); n];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for &v in f {
                vf[v].push(fi);
            }
        }
        Self {
            pos: mesh.vertices().iter().map(|v| v.cast()).collect(),
            tags,
            alive_v: vec![true; n],
            faces: mesh.faces().to_vec(),
            alive_f: vec![true; mesh.n_faces()],
            vf,
            next_tag,
        }
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for (fi, f) in self.faces.iter().enumerate() {
            if !self.alive_f[fi] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    fn has_directed(f: &[usize; 3], a: usize, b: usize) -> bool {
        (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
    }

    fn opposite(f: &[usize; 3], a: usize, b: usize) -> usize {
        *f.iter().find(|&&v| v != a && v != b).expect("triangle has a third vertex")
    }

    /// Faces across the edge: (face with a->b, face with b->a).
    fn edge_faces(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let mut fwd = None;
        let mut bwd = None;
        for &f in &self.vf[a] {
            let face = &self.faces[f];
            if Self::has_directed(face, a, b) {
                fwd = Some(f);
            } else if Self::has_directed(face, b, a) {
                bwd = Some(f);
            }
        }
        Some((fwd?, bwd?))
    }

    fn neighbors(&self, v: usize) -> BTreeSet<usize> {
        self.vf[v].iter().flat_map(|&f| self.faces[f]).filter(|&w| w != v).collect()
    }

    fn len(&self, a: usize, b: usize) -> f64 {
        (self.pos[a] - self.pos[b]).norm()
    }

    fn face_normal(&self, f: &[usize; 3]) -> P {
        let [p0, p1, p2] = f.map(|v| self.pos[v]);
        (p1 - p0).cross(p2 - p0)
    }

    fn min_angle(p: [P; 3]) -> f64 {
        (0..3)
            .map(|k| {
                let u = p[(k + 1) % 3] - p[k];
                let w = p[(k + 2) % 3] - p[k];
                u.cross(w).norm().atan2(u.dot(w))
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn vertex_normal(&self, v: usize) -> P {
        self.vf[v].iter().fold(P::zero(), |acc, &f| acc + self.face_normal(&self.faces[f])).normalized()
    }

    fn split(&mut self, a: usize, b: usize) -> bool {
        let Some((f1, f2)) = self.edge_faces(a, b) else { return false };
        let c = Self::opposite(&self.faces[f1], a, b);
        let d = Self::opposite(&self.faces[f2], a, b);
        let m = self.pos.len();
        self.pos.push((self.pos[a] + self.pos[b]) * 0.5);
        self.tags.push(self.next_tag);
        self.next_tag += 1;
        self.alive_v.push(true);
        let g1 = self.faces.len();
        let g2 = g1 + 1;
        self.faces[f1] = [a, m, c];
        self.faces[f2] = [b, m, d];
        self.faces.push([m, b, c]);
        self.faces.push([m, a, d]);
        self.alive_f.extend([true, true]);
        self.vf.push(vec![f1, g1, f2, g2]);
        replace(&mut self.vf[b], f1, g1);
        replace(&mut self.vf[a], f2, g2);
        self.vf[c].push(g1);
        self.vf[d].push(g2);
        true
    }

    fn collapse(&mut self, a: usize, b: usize, max_len: f64, min_angle: f64) -> bool {
        let Some((f1, f2)) = self.edge_faces(a, b) else { return false };
        let c = Self::opposite(&self.faces[f1], a, b);
        let d = Self::opposite(&self.faces[f2], a, b);
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<usize> = na.intersection(&nb).copied().collect();
        if common.len() != 2 || !common.contains(&c) || !common.contains(&d) {
            return false;
        }
        if self.vf[c].len() <= 3 || self.vf[d].len() <= 3 {
            return false;
        }
        if self.alive_v.iter().filter(|&&x| x).count() <= 4 {
            return false;
        }
        let p = (self.pos[a] + self.pos[b]) * 0.5;
        if na.iter().chain(nb.iter()).any(|&w| w != a && w != b && (self.pos[w] - p).norm() > max_len) {
            return false;
        }
        let around: BTreeSet<usize> = self.vf[a].iter().chain(self.vf[b].iter()).copied().collect();
        for &f in &around {
            if f == f1 || f == f2 {
                continue;
            }
            let old = self.faces[f];
            let new = old.map(|v| if v == b { a } else { v });
            let old_n = self.face_normal(&old);
            let corners = new.map(|v| if v == a { p } else { self.pos[v] });
            let new_n = (corners[1] - corners[0]).cross(corners[2] - corners[0]);
            if old_n.dot(new_n) <= 0.0 || Self::min_angle(corners) < min_angle {
                return false;
            }
        }
        self.alive_f[f1] = false;
        self.alive_f[f2] = false;
        let moved: Vec<usize> = self.vf[b].clone();
        for f in moved {
            if f == f1 || f == f2 {
                continue;
            }
            for v in self.faces[f].iter_mut() {
                if *v == b {
                    *v = a;
                }
            }
            self.vf[a].push(f);
        }
        self.vf[a].retain(|&f| f != f1 && f != f2);
        self.vf[c].retain(|&f| f != f1);
        self.vf[d].retain(|&f| f != f2);
        self.vf[b].clear();
        self.alive_v[b] = false;
        self.pos[a] = p;
        true
    }

    fn valence_excess(&self, v: usize, delta: i64) -> i64 {
        let val = self.vf[v].len() as i64 + delta;
        (val - 6) * (val - 6)
    }

    fn try_flip(&mut self, a: usize, b: usize, max_len: f64, min_angle: f64) -> bool {
        let Some((f1, f2)) = self.edge_faces(a, b) else { return false };
        let c = Self::opposite(&self.faces[f1], a, b);
        let d = Self::opposite(&self.faces[f2], a, b);
        if c == d
            || self.vf[a].len() <= 3
            || self.vf[b].len() <= 3
            || self.len(c, d) > max_len
            || self.neighbors(c).contains(&d)
        {
            return false;
        }
        let before: i64 = [a, b, c, d].iter().map(|&v| self.valence_excess(v, 0)).sum();
        let after = self.valence_excess(a, -1)
            + self.valence_excess(b, -1)
            + self.valence_excess(c, 1)
            + self.valence_excess(d, 1);
        let angle_at = |o: usize, p: usize, q: usize| {
            let u = self.pos[p] - self.pos[o];
            let w = self.pos[q] - self.pos[o];
            u.cross(w).norm().atan2(u.dot(w))
        };
        let non_delaunay = angle_at(c, a, b) + angle_at(d, a, b) > std::f64::consts::PI + 1e-9;
        if !(after < before || (after == before && non_delaunay)) {
            return false;
        }
        let g1 = [a, d, c];
        let g2 = [b, c, d];
        let old_n = self.face_normal(&self.faces[f1]) + self.face_normal(&self.faces[f2]);
        for g in [g1, g2] {
            if self.face_normal(&g).dot(old_n) <= 0.0 || Self::min_angle(g.map(|v| self.pos[v])) < min_angle {
                return false;
            }
        }
        let old_min = Self::min_angle(self.faces[f1].map(|v| self.pos[v]))
            .min(Self::min_angle(self.faces[f2].map(|v| self.pos[v])));
        let new_min = Self::min_angle(g1.map(|v| self.pos[v])).min(Self::min_angle(g2.map(|v| self.pos[v])));
        if after == before && new_min <= old_min {
            return false;
        }
        self.faces[f1] = g1;
        self.faces[f2] = g2;
        self.vf[a].retain(|&f| f != f2);
        self.vf[b].retain(|&f| f != f1);
        self.vf[c].push(f2);
        self.vf[d].push(f1);
        true
    }

    /// Moves each vertex toward its neighbour centroid within the tangent
    /// plane, unless that pushes incident edges further out of `band`.
    fn relax(&mut self, weight: f64, band: (f64, f64), locator: &SurfaceLocator) {
        let violation = |p: P, nbrs: &BTreeSet<usize>, pos: &[P]| -> f64 {
            nbrs.iter()
                .map(|&w| {
                    let l = (pos[w] - p).norm();
                    (l - band.1).max(0.0) + (band.0 - l).max(0.0)
                })
                .sum()
        };
        let n = self.pos.len();
        let mut next = self.pos.clone();
        for v in 0..n {
            if !self.alive_v[v] {
                continue;
            }
            let nbrs = self.neighbors(v);
            if nbrs.is_empty() {
                continue;
            }
            let centroid = nbrs.iter().fold(P::zero(), |acc, &w| acc + self.pos[w]) / nbrs.len() as f64;
            let normal = self.vertex_normal(v);
            let mut step = centroid - self.pos[v];
            step -= normal * step.dot(normal);
            let candidate = locator.closest(self.pos[v] + step * weight).point;
            if violation(candidate, &nbrs, &self.pos) <= violation(self.pos[v], &nbrs, &self.pos) {
                next[v] = candidate;
            }
        }
        self.pos = next;
    }

    fn project(&mut self, locator: &SurfaceLocator) {
        for v in 0..self.pos.len() {
            if self.alive_v[v] {
                self.pos[v] = locator.closest(self.pos[v]).point;
            }
        }
    }

    fn finish<T: Real>(self, keep_tags: bool) -> Result<TriangleMesh<T>, MeshError> {
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        let mut tags = Vec::new();
        for v in 0..self.pos.len() {
            if self.alive_v[v] {
                remap[v] = vertices.len();
                vertices.push(self.pos[v].cast::<T>());
                tags.push(self.tags[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.alive_f)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|v| remap[v]))
            .collect();
        let mesh = TriangleMesh::new(vertices, faces)?;
        if keep_tags {
            mesh.with_tags(tags)
        } else {
            Ok(mesh)
        }
    }
}

fn replace(list: &mut [usize], old: usize, new: usize) {
    if let Some(slot) = list.iter_mut().find(|x| **x == old) {
        *slot = new;
    }
}

/// Remeshes toward a uniform edge length `params.target_edge`.
pub fn remesh<T: Real>(mesh: &TriangleMesh<T>, params: &RemeshParams) -> Result<TriangleMesh<T>, MeshError> {
    let target = params.target_edge;
    if !(target > 0.0 && target.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("target edge {target}")));
    }
    let chi = mesh.euler_characteristic();
    let locator = SurfaceLocator::new(mesh);
    let (hi, lo) = (4.0 / 3.0 * target, 4.0 / 5.0 * target);
    let mut w = Work::new(mesh);
    for _ in 0..params.iterations {
        for (a, b) in w.edges() {
            if w.alive_v[a] && w.alive_v[b] && w.len(a, b) > hi {
                w.split(a, b);
            }
        }
        for (a, b) in w.edges() {
            if w.alive_v[a] && w.alive_v[b] && w.len(a, b) < lo && w.neighbors(a).contains(&b) {
                w.collapse(a, b, hi, params.min_angle_floor);
            }
        }
        for (a, b) in w.edges() {
            if w.neighbors(a).contains(&b) {
                w.try_flip(a, b, hi, params.min_angle_floor);
            }
        }
        w.relax(params.relaxation, (0.5 * target, 1.5 * target), &locator);
    }
    // Relaxation can push a few edges back out of the band.
    for (a, b) in w.edges() {
        if w.alive_v[a] && w.alive_v[b] && w.len(a, b) > hi {
            w.split(a, b);
        }
    }
    for (a, b) in w.edges() {
        if w.alive_v[a] && w.alive_v[b] && w.len(a, b) < lo && w.neighbors(a).contains(&b) {
            w.collapse(a, b, hi, params.min_angle_floor);
        }
    }
    for (a, b) in w.edges() {
        if w.neighbors(a).contains(&b) {
            w.try_flip(a, b, hi, params.min_angle_floor);
        }
    }
    w.project(&locator);
    let out: TriangleMesh<T> = w.finish(mesh.tags().is_some())?;
    let after = out.euler_characteristic();
    if after != chi {
        return Err(MeshError::TopologyChanged { before: chi, after });
    }
    let hd = hausdorff_distance(mesh, &out);
    if hd > params.max_hausdorff_fraction * target {
        return Err(MeshError::InvalidParameter(format!(
            "remesh deviates from input by {hd:e} (> {} x target edge)",
            params.max_hausdorff_fraction
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct ClosestPoint {
    pub point: P,
    pub face: usize,
    pub barycentric: [f64; 3],
    pub distance: f64,
}

/// Closest-point queries against a fixed triangle mesh, bucketed on a
/// uniform grid.
pub struct SurfaceLocator {
    tris: Vec<[P; 3]>,
    origin: P,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<usize>>,
}

impl SurfaceLocator {
    pub fn new<T: Real>(mesh: &TriangleMesh<T>) -> Self {
        let tris: Vec<[P; 3]> = (0..mesh.n_faces()).map(|f| mesh.face_corners(f).map(|p| p.cast())).collect();
        let (lo, hi) = mesh.bounding_box();
        let (lo, hi) = (lo.cast::<f64>(), hi.cast::<f64>());
        let extent = hi - lo;
        let cells_per_axis = ((tris.len() as f64).cbrt().ceil() as usize).clamp(1, 64);
        let cell = (extent.x.max(extent.y).max(extent.z) / cells_per_axis as f64).max(1e-12);
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).min(256));
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let index = |c: [usize; 3]| (c[2] * dims[1] + c[1]) * dims[0] + c[0];
        for (fi, t) in tris.iter().enumerate() {
            let tlo = t[0].component_min(t[1]).component_min(t[2]);
            let thi = t[0].component_max(t[1]).component_max(t[2]);
            let clo = Self::cell_of(lo, cell, dims, tlo);
            let chi = Self::cell_of(lo, cell, dims, thi);
            for z in clo[2]..=chi[2] {
                for y in clo[1]..=chi[1] {
                    for x in clo[0]..=chi[0] {
                        buckets[index([x, y, z])].push(fi);
                    }
                }
            }
        }
        Self { tris, origin: lo, cell, dims, buckets }
    }

    fn cell_of(origin: P, cell: f64, dims: [usize; 3], p: P) -> [usize; 3] {
        let d = p - origin;
        [0, 1, 2].map(|k| ((d[k] / cell).floor().max(0.0) as usize).min(dims[k] - 1))
    }

    pub fn closest(&self, q: P) -> ClosestPoint {
        let c = Self::cell_of(self.origin, self.cell, self.dims, q);
        let max_ring = *self.dims.iter().max().unwrap();
        let mut best: Option<ClosestPoint> = None;
        for ring in 0..=max_ring {
            let lo = c.map(|x| x.saturating_sub(ring));
            let hi = [0, 1, 2].map(|k| (c[k] + ring).min(self.dims[k] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let on_shell = [x, y, z].iter().zip(&c).any(|(&a, &b)| a.abs_diff(b) == ring);
                        if !on_shell {
                            continue;
                        }
                        for &fi in &self.buckets[(z * self.dims[1] + y) * self.dims[0] + x] {
                            let (point, bary) = closest_on_triangle(q, &self.tris[fi]);
                            let distance = (point - q).norm();
                            if best.map_or(true, |b| distance < b.distance) {
                                best = Some(ClosestPoint { point, face: fi, barycentric: bary, distance });
                            }
                        }
                    }
                }
            }
            // Everything outside this shell lies at least `ring * cell` away,
            // discounting the query's offset inside its own cell.
            if let Some(b) = best {
                if b.distance <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        best.expect("locator has at least one triangle")
    }
}

/// Closest point of triangle `t` to `p` with barycentric coordinates.
fn closest_on_triangle(p: P, t: &[P; 3]) -> (P, [f64; 3]) {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Symmetric vertex-sampled Hausdorff distance between two surfaces.
pub fn hausdorff_distance<T: Real>(a: &TriangleMesh<T>, b: &TriangleMesh<T>) -> f64 {
    let one_sided = |from: &TriangleMesh<T>, to: &TriangleMesh<T>| {
        let loc = SurfaceLocator::new(to);
        from.vertices().iter().map(|v| loc.closest(v.cast()).distance).fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Carries a per-vertex field from `old` to `new` by barycentric
/// interpolation at the closest point on the old surface.
pub fn transfer_vertex_field<T: Real>(old: &TriangleMesh<T>, field: &[f64], new: &TriangleMesh<T>) -> Vec<f64> {
    assert_eq!(field.len(), old.n_vertices(), "field length must match vertex count");
    let loc = SurfaceLocator::new(old);
    new.vertices()
        .iter()
        .map(|v| {
            let cp = loc.closest(v.cast());
            let f = old.faces()[cp.face];
            (0..3).map(|k| cp.barycentric[k] * field[f[k]]).sum()
        })
        .collect()
}
