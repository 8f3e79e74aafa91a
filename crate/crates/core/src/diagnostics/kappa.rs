use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::geom::GeometryCache;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::vec3::Vec3;

/// κ(r) = sup over vertex centers of Σ_{|v_i − x| < r} |A|²_i a_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaValue {
    pub value: f64,
    pub center: [f64; 3],
    pub center_vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaProfile {
    pub t: f64,
    pub radii: Vec<f64>,
    pub kappa: Vec<f64>,
    pub centers: Vec<[f64; 3]>,
    /// ∫|A|²dμ of the surface.
    pub total: f64,
}

struct Grid {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vec3<f64>], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(p: Vec3<f64>, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    fn near(&self, p: Vec3<f64>) -> impl Iterator<Item = usize> + '_ {
        let k = Self::key(p, self.cell);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).flat_map(move |dz| {
                    self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]).into_iter().flatten().copied()
                })
            })
        })
    }
}

/// Per-center ball sums for every radius, then the argmax per radius with
/// the lowest vertex index winning ties.
fn scan<T: Real>(mesh: &TriangleMesh<T>, cache: &GeometryCache<T>, radii: &[f64]) -> Vec<KappaValue> {
    let pts: Vec<Vec3<f64>> = mesh.vertices().iter().map(|v| v.cast()).collect();
    let weight: Vec<f64> = cache.asq.iter().zip(&cache.vertex_area).map(|(&q, &a)| (q * a).value()).collect();
    let total = cache.asq_integral.value();
    let diag = mesh.bbox_diagonal().value();
    // Radii beyond the diagonal contain every vertex from any center.
    let finite: Vec<f64> = radii.iter().copied().filter(|&r| r <= diag).collect();
    let mut out = Vec::with_capacity(radii.len());
    if !finite.is_empty() {
        let rmax = finite[finite.len() - 1];
        let grid = Grid::new(&pts, rmax);
        let per_center: Vec<Vec<f64>> = (0..pts.len())
            .into_par_iter()
            .map(|c| {
                let mut bins = vec![0.0; finite.len()];
                for j in grid.near(pts[c]) {
                    let d = (pts[j] - pts[c]).norm();
                    let k = finite.partition_point(|&r| r <= d);
                    if k < bins.len() {
                        bins[k] += weight[j];
                    }
                }
                let mut acc = 0.0;
                for b in &mut bins {
                    acc += *b;
                    *b = acc;
                }
                bins
            })
            .collect();
        for k in 0..finite.len() {
            let mut best = 0;
            for c in 1..pts.len() {
                if per_center[c][k] > per_center[best][k] {
                    best = c;
                }
            }
            let p = pts[best];
            out.push(KappaValue { value: per_center[best][k], center: [p.x, p.y, p.z], center_vertex: best });
        }
    }
    let p = pts[0];
    while out.len() < radii.len() {
        out.push(KappaValue { value: total, center: [p.x, p.y, p.z], center_vertex: 0 });
    }
    out
}

pub fn kappa<T: Real>(mesh: &TriangleMesh<T>, cache: &GeometryCache<T>, r: f64) -> Result<KappaValue, DiagError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(DiagError::InvalidRadius(r));
    }
    Ok(scan(mesh, cache, &[r])[0])
}

pub fn kappa_profile<T: Real>(
    mesh: &TriangleMesh<T>,
    cache: &GeometryCache<T>,
    radii: &[f64],
    t: f64,
) -> Result<KappaProfile, DiagError> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(DiagError::InvalidRadius(radii.iter().copied().find(|r| !(*r > 0.0)).unwrap_or(f64::NAN)));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagError::RadiiNotIncreasing);
    }
    let values = scan(mesh, cache, radii);
    let total = cache.asq_integral.value();
    let slack = 1e-12 * total;
    for k in 1..values.len() {
        if values[k].value + slack < values[k - 1].value {
            return Err(DiagError::KappaNotMonotone { r: radii[k], value: values[k].value, previous: values[k - 1].value });
        }
    }
    Ok(KappaProfile {
        t,
        radii: radii.to_vec(),
        kappa: values.iter().map(|v| v.value).collect(),
        centers: values.iter().map(|v| v.center).collect(),
        total,
    })
}

/// `n` log-spaced radii from half the smallest edge to the bounding-box diagonal.
pub fn default_radius_grid<T: Real>(mesh: &TriangleMesh<T>, n: usize) -> Vec<f64> {
    let lo = 0.5 * crate::flow::min_edge_length(mesh);
    let hi = mesh.bbox_diagonal().value();
    let n = n.max(2);
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Smallest radius with κ ≥ target, linearly interpolated between grid points.
pub fn select_blowup_radius(profile: &KappaProfile, kappa_target: f64) -> Result<f64, DiagError> {
    if !(kappa_target > 0.0 && kappa_target < profile.total) {
        return Err(DiagError::TargetOutOfRange { target: kappa_target, total: profile.total });
    }
    let k = profile
        .kappa
        .iter()
        .position(|&v| v >= kappa_target)
        .ok_or(DiagError::GridTooShort { target: kappa_target, reached: *profile.kappa.last().unwrap_or(&0.0) })?;
    if k == 0 {
        return Ok(profile.radii[0]);
    }
    let (r0, r1) = (profile.radii[k - 1], profile.radii[k]);
    let (k0, k1) = (profile.kappa[k - 1], profile.kappa[k]);
    Ok(r0 + (r1 - r0) * (kappa_target - k0) / (k1 - k0))
}
